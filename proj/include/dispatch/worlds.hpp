#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dispatch/geo.hpp"
#include "dispatch/scenario.hpp"

namespace dispatch::worlds {

/// A self-contained synthetic world: road grid, facilities, outer boundary,
/// administrative regions and demand centres.
struct World {
  std::string name;
  geo::RoadGraph graph;
  std::vector<geo::Facility> facilities;
  geo::RegionBoundary boundary;
  std::vector<geo::RegionBoundary> regions;
  std::vector<scenario::PopulationCenter> centers;
};

struct GridSpec {
  std::size_t size = 20;
  double origin_lon = 7.0;
  double origin_lat = 4.75;
  double spacing_deg = 0.005;
};

/// Node id of grid cell (row, col); zero-padded so lexical order is row-major.
std::string grid_node_id(std::size_t row, std::size_t col);
geo::GeoPoint grid_point(const GridSpec& spec, double row, double col);

/// k x k 4-neighbour grid with haversine edge lengths. When `river_after_col`
/// is set, horizontal edges between that column and the next are removed
/// except on the rows listed in `crossings`.
geo::RoadGraph grid_graph(const GridSpec& spec, std::optional<std::size_t> river_after_col = std::nullopt,
                          const std::vector<std::size_t>& crossings = {});

/// Rectangle half a cell outside the grid.
geo::RegionBoundary grid_boundary(const GridSpec& spec, std::string region_id = "world");

/// Open grid, three facilities per category, no barrier.
World open_grid_world(const GridSpec& spec = {});

/// Grid split by a river between columns size/2-1 and size/2, bridged on
/// `crossings` rows (default 2 crossings). 12 facilities, 3 per category,
/// placed so that straight-line proximity often points across the river.
World barrier_world(const GridSpec& spec = {}, std::vector<std::size_t> crossings = {3, 16});

/// Barrier world with a single crossing at row 0 and healthcare only in the
/// far west corner: the east region is a healthcare desert while every other
/// region x category is served. Regions are "west" and "east".
World intervention_world(const GridSpec& spec = {});

/// Writes graph.txt, facilities.geojson, boundary.geojson, regions.geojson
/// and centers.txt into `dir`.
void write_world(const World& w, const std::string& dir);

/// "lon,lat,weight,sigma; ..." as used by the run config.
std::string centers_to_config(const std::vector<scenario::PopulationCenter>& centers);

}  // namespace dispatch::worlds
