#include "geomap/kdtree.hpp"

#include <algorithm>
#include <cmath>

#include "geomap/errors.hpp"

namespace geomap {

KdTree::KdTree(const Mat& points, int leaf_size) : points_(points), leaf_size_(std::max(1, leaf_size)) {
  if (points_.cols() == 0) throw PreconditionError("kd-tree: no points");
  order_.resize(static_cast<std::size_t>(points_.cols()));
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  nodes_.reserve(2 * order_.size() / static_cast<std::size_t>(leaf_size_) + 1);
  build(0, static_cast<int>(order_.size()));
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Vec lo = points_.col(order_[static_cast<std::size_t>(begin)]);
  Vec hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_.col(order_[static_cast<std::size_t>(i)]));
    hi = hi.cwiseMax(points_.col(order_[static_cast<std::size_t>(i)]));
  }
  Eigen::Index axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const int mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin, nth = order_.begin() + mid, last = order_.begin() + end;
  std::nth_element(first, nth, last, [&](int a, int b) {
    const double pa = points_(axis, a), pb = points_(axis, b);
    return pa < pb || (pa == pb && a < b);
  });
  const double split = points_(axis, order_[static_cast<std::size_t>(mid)]);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].axis = static_cast<int>(axis);
  nodes_[static_cast<std::size_t>(id)].split = split;
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

void KdTree::search(int node_id, const Vec& query, int k, int exclude,
                    std::vector<std::pair<double, int>>& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[static_cast<std::size_t>(i)];
      if (idx == exclude) continue;
      const double d2 = (points_.col(idx) - query).squaredNorm();
      const std::pair<double, int> cand{d2, idx};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double diff = query[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, query, k, exclude, heap);
  if (static_cast<int>(heap.size()) < k || diff * diff <= heap.front().first) search(far, query, k, exclude, heap);
}

std::vector<KdTree::Neighbor> KdTree::knn(const Vec& query, int k, int exclude) const {
  if (query.size() != points_.rows()) throw PreconditionError("kd-tree: query dimension mismatch");
  if (k < 1) throw PreconditionError("kd-tree: k must be positive");
  std::vector<std::pair<double, int>> heap;
  heap.reserve(static_cast<std::size_t>(k) + 1);
  search(0, query, k, exclude, heap);
  std::sort_heap(heap.begin(), heap.end());
  std::vector<Neighbor> out;
  out.reserve(heap.size());
  for (const auto& [d2, idx] : heap) out.push_back(Neighbor{std::sqrt(d2), idx});
  return out;
}

}  // namespace geomap
