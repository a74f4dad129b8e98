#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dispatch/common.hpp"
#include "dispatch/geo.hpp"

namespace fixtures {

using namespace dispatch;

inline std::string pad_id(const char* prefix, std::size_t i) {
  std::string s = std::to_string(i);
  while (s.size() < 3) s.insert(s.begin(), '0');
  return prefix + s;
}

/// Random graph: nodes scattered in a ~10 km box, edges between random
/// distinct pairs with random lengths; a fraction are one-way.
inline geo::RoadGraph random_graph(std::uint64_t seed, std::size_t n, std::size_t m, double oneway_fraction = 0.3) {
  Rng rng(seed);
  geo::RoadGraph::Builder b;
  for (std::size_t i = 0; i < n; ++i) {
    b.add_node(pad_id("n", i), geo::GeoPoint{7.0 + rng.uniform(0.0, 0.1), 4.8 + rng.uniform(0.0, 0.1)});
  }
  for (std::size_t k = 0; k < m; ++k) {
    const auto u = static_cast<geo::NodeIndex>(rng.below(n));
    auto v = static_cast<geo::NodeIndex>(rng.below(n - 1));
    if (v >= u) ++v;
    b.add_edge(u, v, rng.uniform(10.0, 5000.0), rng.uniform() < oneway_fraction);
  }
  return std::move(b).build();
}

inline geo::Facility facility(const geo::RoadGraph& g, std::string id, Category c, geo::NodeIndex node) {
  return geo::Facility{std::move(id), c, g.point(node), node};
}

/// Square ring with corners (x0, y0) and (x1, y1), counter-clockwise and closed.
inline geo::Ring square(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
}

}  // namespace fixtures
