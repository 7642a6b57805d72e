#include "manograph/graph.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

namespace manograph {

Graph::Graph(Tensor adjacency) {
  check(adjacency.ndim() == 2 && adjacency.rows() == adjacency.cols(),
        "graph adjacency must be square, got " + adjacency.shape_str());
  n_ = adjacency.rows();
  adj_ = Tensor({n_, n_});
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if (i == j) continue;
      if (adjacency(i, j) != Scalar(0) || adjacency(j, i) != Scalar(0)) {
        adj_(i, j) = Scalar(1);
        adj_(j, i) = Scalar(1);
      }
    }
  }
}

Graph Graph::from_parents(const std::vector<int>& parents,
                          const std::vector<std::pair<int, int>>& tip_attach) {
  const std::size_t k = parents.size();
  check(k >= 1 && parents[0] == -1, "parents[0] must be -1 (root)");
  const std::size_t n = k + tip_attach.size();
  Tensor adj({n, n});
  for (std::size_t j = 1; j < k; ++j) {
    const int p = parents[j];
    check(p >= 0 && static_cast<std::size_t>(p) < j,
          "parents must reference an earlier joint, got parents[" + std::to_string(j) +
              "] = " + std::to_string(p));
    adj(j, p) = Scalar(1);
    adj(p, j) = Scalar(1);
  }
  for (const auto& [tip, distal] : tip_attach) {
    check(tip >= 0 && static_cast<std::size_t>(tip) < n, "tip node out of range");
    check(distal >= 0 && static_cast<std::size_t>(distal) < k, "distal joint out of range");
    adj(tip, distal) = Scalar(1);
    adj(distal, tip) = Scalar(1);
  }
  return Graph(std::move(adj));
}

Graph Graph::from_faces(const std::vector<std::array<int, 3>>& faces, std::size_t n) {
  Tensor adj({n, n});
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int a = faces[f][c];
      const int b = faces[f][(c + 1) % 3];
      check(a >= 0 && static_cast<std::size_t>(a) < n && b >= 0 &&
                static_cast<std::size_t>(b) < n,
            "face " + std::to_string(f) + " references a vertex outside [0, " +
                std::to_string(n) + ")");
      if (a == b) continue;
      adj(a, b) = Scalar(1);
      adj(b, a) = Scalar(1);
    }
  }
  return Graph(std::move(adj));
}

std::size_t Graph::num_edges() const {
  std::size_t e = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if (adj_(i, j) != Scalar(0)) ++e;
  return e;
}

std::vector<std::pair<int, int>> Graph::edges() const {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if (adj_(i, j) != Scalar(0)) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return out;
}

Tensor Graph::adjacency_with_self_loops() const {
  Tensor m = adj_;
  for (std::size_t i = 0; i < n_; ++i) m(i, i) = Scalar(1);
  return m;
}

bool Graph::connected() const {
  if (n_ == 0) return false;
  std::vector<char> seen(n_, 0);
  std::deque<std::size_t> queue{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    for (std::size_t j = 0; j < n_; ++j) {
      if (!seen[j] && adj_(i, j) != Scalar(0)) {
        seen[j] = 1;
        ++reached;
        queue.push_back(j);
      }
    }
  }
  return reached == n_;
}

Tensor normalize_adjacency(const Graph& g) {
  const std::size_t n = g.size();
  check(n >= 1, "normalize_adjacency: empty graph");
  Tensor a = g.adjacency_with_self_loops();
  std::vector<Scalar> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    Scalar deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
    if (n > 1 && deg <= Scalar(1))
      throw std::invalid_argument("normalize_adjacency: node " + std::to_string(i) +
                                  " is isolated");
    inv_sqrt_deg[i] = Scalar(1) / std::sqrt(deg);
  }
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = inv_sqrt_deg[i] * a(i, j) * inv_sqrt_deg[j];
  return out;
}

}  // namespace manograph
