#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spn {

using Label = std::size_t;
using Labels = std::vector<Label>;

/// Undirected edge stored with the smaller endpoint first.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline Edge canonical(std::size_t a, std::size_t b) {
  return a <= b ? Edge{a, b} : Edge{b, a};
}

class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::size_t size, std::vector<std::string> names = {});

  std::size_t size() const { return size_; }
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::size_t size_ = 2;
  std::vector<std::string> names_;
};

/// One incident edge as seen from a node.
struct Incidence {
  std::size_t neighbor;
  std::size_t edge;
  bool is_row;  // true when this node is the smaller endpoint (row axis of edge tables)
};

/// Attributed undirected graph. Edges are canonicalized and sorted on
/// construction; duplicates and self-loops are kept so that validate() can
/// report them.
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t num_nodes, const std::vector<std::pair<std::size_t, std::size_t>>& edges,
        std::size_t feature_dim, std::vector<double> features,
        std::optional<Labels> labels = std::nullopt);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t feature_dim() const { return feature_dim_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<double>& features() const { return features_; }
  double feature(std::size_t node, std::size_t j) const { return features_[node * feature_dim_ + j]; }
  bool has_labels() const { return labels_.has_value(); }
  const Labels& labels() const;
  const std::optional<Labels>& maybe_labels() const { return labels_; }

  /// Sorted neighbor indices of s.
  const std::vector<std::size_t>& neighbors(std::size_t s) const { return neighbors_[s]; }
  /// Incident edges of s, ordered by neighbor index.
  const std::vector<Incidence>& incident(std::size_t s) const { return incident_[s]; }

  Graph with_labels(std::optional<Labels> labels) const;

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.feature_dim_ == b.feature_dim_ && a.edges_ == b.edges_ &&
           a.features_ == b.features_ && a.labels_ == b.labels_;
  }

 private:
  std::size_t num_nodes_ = 0;
  std::size_t feature_dim_ = 0;
  std::vector<Edge> edges_;
  std::vector<double> features_;
  std::optional<Labels> labels_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::vector<std::vector<Incidence>> incident_;
};

enum class Violation {
  empty_graph,
  endpoint_out_of_range,
  self_loop,
  duplicate_edge,
  feature_shape,
  label_count,
  label_out_of_range,
};

struct Diagnostic {
  Violation kind;
  std::string message;
};

/// One diagnostic per violated invariant instance; empty means valid.
std::vector<Diagnostic> validate(const Graph& graph, const LabelSpace& space);

struct Dataset {
  LabelSpace label_space;
  std::size_t feature_dim = 0;
  std::map<std::string, std::vector<Graph>> splits;

  const std::vector<Graph>& split(const std::string& name) const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads and validates a JSON dataset file. Throws DatasetError naming the
/// offending graph (e.g. "train[2]") on any violation.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& json_text);
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string dataset_to_json(const Dataset& dataset);

/// Parses a single graph object in the dataset graph schema.
Graph parse_graph_json(const std::string& json_text, std::size_t feature_dim);

}  // namespace spn
