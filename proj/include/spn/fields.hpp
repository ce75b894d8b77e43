#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace spn {

/// Per-node vectors and per-edge |Y|x|Y| tables over a label alphabet.
/// Edge tables are row-major with the row axis indexed by the smaller
/// endpoint of the canonical edge. The tag keeps potentials, pseudomarginals
/// and beliefs from being mixed up.
template <class Tag>
struct FieldTables {
  std::size_t num_labels = 0;
  std::vector<double> node;
  std::vector<double> edge;

  FieldTables() = default;
  FieldTables(std::size_t num_nodes, std::size_t num_edges, std::size_t k, double fill = 0.0)
      : num_labels(k), node(num_nodes * k, fill), edge(num_edges * k * k, fill) {
    if (k == 0) throw std::invalid_argument("field tables need a non-empty label alphabet");
  }

  std::size_t num_nodes() const { return num_labels ? node.size() / num_labels : 0; }
  std::size_t num_edges() const { return num_labels ? edge.size() / (num_labels * num_labels) : 0; }

  double& node_at(std::size_t s, std::size_t a) { return node[s * num_labels + a]; }
  double node_at(std::size_t s, std::size_t a) const { return node[s * num_labels + a]; }
  double& edge_at(std::size_t e, std::size_t a, std::size_t b) {
    return edge[(e * num_labels + a) * num_labels + b];
  }
  double edge_at(std::size_t e, std::size_t a, std::size_t b) const {
    return edge[(e * num_labels + a) * num_labels + b];
  }

  std::span<const double> node_row(std::size_t s) const {
    return std::span<const double>(node).subspan(s * num_labels, num_labels);
  }
  std::span<const double> edge_table(std::size_t e) const {
    return std::span<const double>(edge).subspan(e * num_labels * num_labels, num_labels * num_labels);
  }

  friend bool operator==(const FieldTables&, const FieldTables&) = default;
};

struct ThetaTag {};
struct PseudomarginalTag {};
struct BeliefTag {};

/// Log-potentials theta_s and theta_st.
using ThetaFields = FieldTables<ThetaTag>;
/// Node distributions tau_s and edge joints tau_st.
using PseudomarginalSet = FieldTables<PseudomarginalTag>;
/// Node beliefs q_s and edge beliefs q_st.
using BeliefSet = FieldTables<BeliefTag>;

/// Same tables under another tag, e.g. exact marginals used as beliefs.
template <class To, class From>
To retag(const From& from) {
  To out;
  out.num_labels = from.num_labels;
  out.node = from.node;
  out.edge = from.edge;
  return out;
}

}  // namespace spn
