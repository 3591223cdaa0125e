#pragma once

#include "svrecon/lattice.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace svr {

/// Balanced 3-d tree over a fixed point set with exact nearest-neighbor
/// queries. Ties resolve to the lower point index.
class KdTree {
 public:
  struct Hit {
    std::size_t index = 0;
    double distance_sq = 0.0;
  };

  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Precondition: !empty().
  Hit nearest(const Vec3& q) const;

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end, int depth);
  void search(std::int32_t node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace svr
