#pragma once

#include <array>
#include <utility>
#include <vector>

#include "manograph/tensor.hpp"

namespace manograph {

/// Undirected graph over n nodes, stored as a dense symmetric 0/1 adjacency
/// with zero diagonal. Immutable after construction.
class Graph {
 public:
  Graph() = default;
  // From a dense adjacency; symmetrizes and zeroes the diagonal.
  explicit Graph(Tensor adjacency);

  // Joint graph: one node per joint plus one node per fingertip. Edges join
  // each joint to its parent and each fingertip node to its distal joint.
  // `tip_attach` pairs are (tip node index, distal joint index).
  static Graph from_parents(const std::vector<int>& parents,
                            const std::vector<std::pair<int, int>>& tip_attach);

  // Mesh graph: each face contributes its three undirected edges.
  static Graph from_faces(const std::vector<std::array<int, 3>>& faces, std::size_t n);

  std::size_t size() const { return n_; }
  const Tensor& adjacency() const { return adj_; }
  bool has_edge(std::size_t i, std::size_t j) const { return adj_(i, j) != Scalar(0); }
  std::size_t num_edges() const;
  // Unique undirected edges as (i, j) with i < j, lexicographic order.
  std::vector<std::pair<int, int>> edges() const;

  // A + I as a dense matrix (used as the softmax mask in SemGConv).
  Tensor adjacency_with_self_loops() const;

  // BFS reachability from node 0.
  bool connected() const;

 private:
  std::size_t n_ = 0;
  Tensor adj_;
};

// Symmetric normalization D^-1/2 (A + I) D^-1/2 with degrees taken after
// self-loop augmentation. Errors on an empty graph or, for n > 1, on a node
// with no neighbors.
Tensor normalize_adjacency(const Graph& g);

}  // namespace manograph
