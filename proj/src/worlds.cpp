#include "dispatch/worlds.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <sstream>

namespace dispatch::worlds {

using geo::GeoPoint;

std::string grid_node_id(std::size_t row, std::size_t col) {
  auto pad = [](std::size_t v) {
    std::string s = std::to_string(v);
    return s.size() < 3 ? std::string(3 - s.size(), '0') + s : s;
  };
  return "g" + pad(row) + "_" + pad(col);
}

GeoPoint grid_point(const GridSpec& spec, double row, double col) {
  return GeoPoint{spec.origin_lon + col * spec.spacing_deg, spec.origin_lat + row * spec.spacing_deg};
}

geo::RoadGraph grid_graph(const GridSpec& spec, std::optional<std::size_t> river_after_col,
                          const std::vector<std::size_t>& crossings) {
  const std::size_t k = spec.size;
  geo::RoadGraph::Builder b;
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) b.add_node(grid_node_id(r, c), grid_point(spec, double(r), double(c)));
  }
  auto idx = [k](std::size_t r, std::size_t c) { return static_cast<geo::NodeIndex>(r * k + c); };
  auto len = [&](std::size_t r1, std::size_t c1, std::size_t r2, std::size_t c2) {
    return geo::haversine_m(grid_point(spec, double(r1), double(c1)), grid_point(spec, double(r2), double(c2)));
  };
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      if (c + 1 < k) {
        const bool blocked = river_after_col && c == *river_after_col &&
                             std::find(crossings.begin(), crossings.end(), r) == crossings.end();
        if (!blocked) b.add_edge(idx(r, c), idx(r, c + 1), len(r, c, r, c + 1), false);
      }
      if (r + 1 < k) b.add_edge(idx(r, c), idx(r + 1, c), len(r, c, r + 1, c), false);
    }
  }
  return std::move(b).build();
}

namespace {

geo::RegionBoundary rect(const GridSpec& spec, double r0, double c0, double r1, double c1, std::string id) {
  geo::Ring ring = {grid_point(spec, r0, c0), grid_point(spec, r0, c1), grid_point(spec, r1, c1),
                    grid_point(spec, r1, c0), grid_point(spec, r0, c0)};
  return geo::RegionBoundary::make(std::move(id), std::move(ring));
}

geo::Facility facility_at(const geo::RoadGraph& g, const GridSpec& spec, std::string id, Category c, std::size_t row,
                          std::size_t col) {
  geo::Facility f;
  f.id = std::move(id);
  f.category = c;
  f.location = grid_point(spec, double(row), double(col));
  f.node = g.index_of(grid_node_id(row, col));
  return f;
}

struct Placement {
  Category category;
  std::size_t row, col;
};

std::vector<geo::Facility> place(const geo::RoadGraph& g, const GridSpec& spec, const std::vector<Placement>& ps) {
  std::vector<geo::Facility> out;
  std::array<int, kNumCategories> seq{};
  static constexpr const char* kPrefix[kNumCategories] = {"hosp", "fire", "police", "transit"};
  for (const auto& p : ps) {
    const int c = category_index(p.category);
    out.push_back(facility_at(g, spec, std::string(kPrefix[c]) + "_" + std::to_string(++seq[c]), p.category, p.row, p.col));
  }
  return out;
}

// Scales a layout designed for a 20 x 20 grid to the requested size.
std::size_t sc(const GridSpec& spec, std::size_t v) {
  return std::min(spec.size - 1, v * spec.size / 20);
}

std::vector<geo::RegionBoundary> halves(const GridSpec& spec) {
  const double k = static_cast<double>(spec.size);
  const double mid = k / 2.0 - 0.5;
  return {rect(spec, -0.5, -0.5, k - 0.5, mid, "west"), rect(spec, -0.5, mid, k - 0.5, k - 0.5, "east")};
}

}  // namespace

geo::RegionBoundary grid_boundary(const GridSpec& spec, std::string region_id) {
  const double k = static_cast<double>(spec.size);
  return rect(spec, -0.5, -0.5, k - 0.5, k - 0.5, std::move(region_id));
}

World open_grid_world(const GridSpec& spec) {
  World w;
  w.name = "open-grid";
  w.graph = grid_graph(spec);
  using C = Category;
  w.facilities = place(w.graph, spec,
                       {{C::Healthcare, sc(spec, 3), sc(spec, 3)},   {C::Healthcare, sc(spec, 10), sc(spec, 15)},
                        {C::Healthcare, sc(spec, 17), sc(spec, 6)},  {C::FireDisaster, sc(spec, 5), sc(spec, 12)},
                        {C::FireDisaster, sc(spec, 14), sc(spec, 2)}, {C::FireDisaster, sc(spec, 18), sc(spec, 17)},
                        {C::Security, sc(spec, 1), sc(spec, 8)},     {C::Security, sc(spec, 9), sc(spec, 4)},
                        {C::Security, sc(spec, 15), sc(spec, 13)},   {C::Transport, sc(spec, 2), sc(spec, 17)},
                        {C::Transport, sc(spec, 11), sc(spec, 9)},   {C::Transport, sc(spec, 19), sc(spec, 1)}});
  w.boundary = grid_boundary(spec);
  w.regions = halves(spec);
  const double k = static_cast<double>(spec.size);
  w.centers = {{grid_point(spec, k * 0.3, k * 0.3), 2.0, spec.spacing_deg * 3.0},
               {grid_point(spec, k * 0.7, k * 0.7), 1.0, spec.spacing_deg * 3.0}};
  return w;
}

World barrier_world(const GridSpec& spec, std::vector<std::size_t> crossings) {
  World w;
  w.name = "barrier";
  const std::size_t river = spec.size / 2 - 1;
  for (auto& r : crossings) r = sc(spec, r);
  w.graph = grid_graph(spec, river, crossings);
  using C = Category;
  // West / east of the river plus one remote facility per category.
  w.facilities = place(w.graph, spec,
                       {{C::Healthcare, sc(spec, 4), sc(spec, 8)},   {C::Healthcare, sc(spec, 9), sc(spec, 11)},
                        {C::Healthcare, sc(spec, 17), sc(spec, 2)},  {C::FireDisaster, sc(spec, 12), sc(spec, 8)},
                        {C::FireDisaster, sc(spec, 7), sc(spec, 11)}, {C::FireDisaster, sc(spec, 18), sc(spec, 17)},
                        {C::Security, sc(spec, 8), sc(spec, 7)},     {C::Security, sc(spec, 12), sc(spec, 11)},
                        {C::Security, sc(spec, 1), sc(spec, 1)},     {C::Transport, sc(spec, 15), sc(spec, 8)},
                        {C::Transport, sc(spec, 6), sc(spec, 12)},   {C::Transport, sc(spec, 10), sc(spec, 18)}});
  w.boundary = grid_boundary(spec);
  w.regions = halves(spec);
  const double k = static_cast<double>(spec.size);
  const double mid = k / 2.0 - 0.5;
  w.centers = {{grid_point(spec, k * 0.5, mid), 3.0, spec.spacing_deg * 2.5},
               {grid_point(spec, k * 0.25, mid - k * 0.15), 1.0, spec.spacing_deg * 3.0},
               {grid_point(spec, k * 0.75, mid + k * 0.15), 1.0, spec.spacing_deg * 3.0}};
  return w;
}

World intervention_world(const GridSpec& spec) {
  World w;
  w.name = "intervention";
  const std::size_t river = spec.size / 2 - 1;
  w.graph = grid_graph(spec, river, {0});
  using C = Category;
  const std::size_t last = spec.size - 1;
  w.facilities = place(w.graph, spec,
                       {{C::Healthcare, last, 0},
                        {C::FireDisaster, sc(spec, 10), sc(spec, 4)},
                        {C::FireDisaster, sc(spec, 9), sc(spec, 15)},
                        {C::Security, sc(spec, 9), sc(spec, 5)},
                        {C::Security, sc(spec, 10), sc(spec, 14)},
                        {C::Transport, sc(spec, 10), sc(spec, 5)},
                        {C::Transport, sc(spec, 9), sc(spec, 14)}});
  w.boundary = grid_boundary(spec);
  w.regions = halves(spec);
  const double k = static_cast<double>(spec.size);
  w.centers = {{grid_point(spec, k * 0.5, k * 0.25), 1.0, spec.spacing_deg * 3.0},
               {grid_point(spec, k * 0.5, k * 0.75), 1.0, spec.spacing_deg * 3.0}};
  return w;
}

std::string centers_to_config(const std::vector<scenario::PopulationCenter>& centers) {
  std::ostringstream out;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (i) out << "; ";
    out << format_double(centers[i].center.lon) << ',' << format_double(centers[i].center.lat) << ','
        << format_double(centers[i].weight) << ',' << format_double(centers[i].sigma);
  }
  return out.str();
}

void write_world(const World& w, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  geo::save_road_graph(w.graph, (d / "graph.txt").string());
  write_text_file((d / "facilities.geojson").string(), geo::facilities_to_geojson(w.facilities));
  const geo::RegionBoundary b[1] = {w.boundary};
  write_text_file((d / "boundary.geojson").string(), geo::regions_to_geojson(b));
  write_text_file((d / "regions.geojson").string(), geo::regions_to_geojson(w.regions));
  write_text_file((d / "centers.txt").string(), centers_to_config(w.centers) + "\n");
}

}  // namespace dispatch::worlds
