#include "dispatch/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <queue>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace dispatch::atlas {

double edge_travel_time(double length_m, double speed_kmh) {
  if (!(length_m > 0.0) || !(speed_kmh > 0.0) || !std::isfinite(length_m) || !std::isfinite(speed_kmh)) {
    throw InputError("edge_travel_time requires positive length and speed");
  }
  return length_m / (speed_kmh * 1000.0 / 60.0);
}

double path_minutes(std::int64_t length_mm, double speed_kmh) {
  if (length_mm < 0) throw ContractError("negative path length");
  if (length_mm == 0) return 0.0;
  return edge_travel_time(static_cast<double>(length_mm) / 1000.0, speed_kmh);
}

namespace {

struct Adjacency {
  std::vector<std::size_t> offsets;
  std::vector<std::pair<NodeIndex, std::int64_t>> arcs;
};

Adjacency make_adjacency(const RoadGraph& g, bool reversed) {
  const std::size_t n = g.node_count();
  std::vector<std::vector<std::pair<NodeIndex, std::int64_t>>> lists(n);
  for (const auto& e : g.edges()) {
    if (!reversed || !e.oneway) lists[e.u].emplace_back(e.v, e.length_mm);
    if (!e.oneway || reversed) lists[e.v].emplace_back(e.u, e.length_mm);
  }
  Adjacency adj;
  adj.offsets.resize(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) adj.offsets[v + 1] = adj.offsets[v] + lists[v].size();
  adj.arcs.reserve(adj.offsets[n]);
  for (auto& l : lists) adj.arcs.insert(adj.arcs.end(), l.begin(), l.end());
  return adj;
}

std::vector<std::optional<std::int64_t>> dijkstra(const Adjacency& adj, NodeIndex source) {
  const std::size_t n = adj.offsets.size() - 1;
  if (source >= n) throw InputError("Dijkstra source outside the graph");
  constexpr auto kInf = std::numeric_limits<std::int64_t>::max();
  std::vector<std::int64_t> dist(n, kInf);
  using Item = std::pair<std::int64_t, NodeIndex>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[source] = 0;
  heap.emplace(0, source);
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d != dist[v]) continue;
    for (std::size_t k = adj.offsets[v]; k < adj.offsets[v + 1]; ++k) {
      const auto [w, len] = adj.arcs[k];
      const std::int64_t nd = d + len;
      if (nd < dist[w]) {
        dist[w] = nd;
        heap.emplace(nd, w);
      }
    }
  }
  std::vector<std::optional<std::int64_t>> out(n);
  for (std::size_t v = 0; v < n; ++v) {
    if (dist[v] != kInf) out[v] = dist[v];
  }
  return out;
}

}  // namespace

std::vector<std::optional<std::int64_t>> lengths_to(const RoadGraph& g, NodeIndex target) {
  return dijkstra(make_adjacency(g, true), target);
}

std::vector<std::optional<std::int64_t>> lengths_from(const RoadGraph& g, NodeIndex source) {
  return dijkstra(make_adjacency(g, false), source);
}

TravelTimeAtlas::TravelTimeAtlas(std::vector<NodeIndex> incident_nodes, std::vector<Facility> facilities,
                                 std::vector<TravelTime> times, double speed_kmh)
    : incident_nodes_(std::move(incident_nodes)),
      facilities_(std::move(facilities)),
      times_(std::move(times)),
      speed_kmh_(speed_kmh) {
  if (times_.size() != incident_nodes_.size() * facilities_.size()) {
    throw ContractError("atlas matrix size does not match its index lists");
  }
  for (const auto& t : times_) {
    if (t && (!std::isfinite(*t) || *t < 0.0)) throw ContractError("atlas entry must be finite and >= 0");
  }
  for (std::size_t r = 0; r < incident_nodes_.size(); ++r) {
    if (!row_index_.emplace(incident_nodes_[r], r).second) {
      throw ContractError("duplicate incident node in atlas");
    }
  }
}

std::optional<std::size_t> TravelTimeAtlas::row_of(NodeIndex node) const {
  auto it = row_index_.find(node);
  if (it == row_index_.end()) return std::nullopt;
  return it->second;
}

bool TravelTimeAtlas::operator==(const TravelTimeAtlas& o) const {
  if (incident_nodes_ != o.incident_nodes_ || speed_kmh_ != o.speed_kmh_ || times_ != o.times_ ||
      facilities_.size() != o.facilities_.size()) {
    return false;
  }
  for (std::size_t j = 0; j < facilities_.size(); ++j) {
    if (facilities_[j].id != o.facilities_[j].id || facilities_[j].node != o.facilities_[j].node) return false;
  }
  return true;
}

TravelTimeAtlas build_atlas(const RoadGraph& g, std::span<const NodeIndex> incident_nodes,
                            std::span<const Facility> facilities, double speed_kmh, unsigned threads) {
  if (!(speed_kmh > 0.0)) throw InputError("speed must be positive");
  for (auto v : incident_nodes) {
    if (v >= g.node_count()) throw InputError("unknown incident node index " + std::to_string(v));
  }
  for (const auto& f : facilities) {
    if (f.node >= g.node_count()) throw InputError("facility " + f.id + " has an unknown node");
  }
  // distinct facility nodes, in first-seen order
  std::vector<NodeIndex> targets;
  std::map<NodeIndex, std::size_t> target_slot;
  for (const auto& f : facilities) {
    if (target_slot.emplace(f.node, targets.size()).second) targets.push_back(f.node);
  }
  const Adjacency reversed = make_adjacency(g, true);
  std::vector<std::vector<std::optional<std::int64_t>>> per_target(targets.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(targets.size())));
  if (workers <= 1) {
    for (std::size_t t = 0; t < targets.size(); ++t) per_target[t] = dijkstra(reversed, targets[t]);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < targets.size(); t += workers) per_target[t] = dijkstra(reversed, targets[t]);
      });
    }
  }
  std::vector<TravelTime> times(incident_nodes.size() * facilities.size());
  for (std::size_t i = 0; i < incident_nodes.size(); ++i) {
    for (std::size_t j = 0; j < facilities.size(); ++j) {
      const auto& len = per_target[target_slot.at(facilities[j].node)][incident_nodes[i]];
      if (len) times[i * facilities.size() + j] = path_minutes(*len, speed_kmh);
    }
  }
  return TravelTimeAtlas({incident_nodes.begin(), incident_nodes.end()}, {facilities.begin(), facilities.end()},
                         std::move(times), speed_kmh);
}

std::vector<TravelTime> travel_row(const RoadGraph& g, NodeIndex from, std::span<const Facility> facilities,
                                   double speed_kmh) {
  const auto lengths = lengths_from(g, from);
  std::vector<TravelTime> row(facilities.size());
  for (std::size_t j = 0; j < facilities.size(); ++j) {
    if (const auto& len = lengths.at(facilities[j].node)) row[j] = path_minutes(*len, speed_kmh);
  }
  return row;
}

std::optional<BestChoice> best_in_row(std::span<const TravelTime> row, std::span<const Facility> facilities,
                                      Category category) {
  std::optional<BestChoice> best;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (facilities[j].category != category || !row[j]) continue;
    if (!best || *row[j] < best->t_star) best = BestChoice{j, *row[j]};
  }
  return best;
}

std::optional<BestChoice> best_feasible(const TravelTimeAtlas& atlas, std::size_t incident_row, Category category) {
  if (incident_row >= atlas.rows()) throw ContractError("atlas row out of range");
  return best_in_row(atlas.row(incident_row), atlas.facilities(), category);
}

std::string atlas_to_csv(const TravelTimeAtlas& atlas, const RoadGraph& g) {
  std::ostringstream out;
  out << "incident_node";
  for (const auto& f : atlas.facilities()) out << ',' << f.id;
  out << '\n';
  for (std::size_t i = 0; i < atlas.rows(); ++i) {
    out << g.id(atlas.incident_nodes()[i]);
    for (const auto& t : atlas.row(i)) out << ',' << (t ? format_double(*t) : std::string("unreachable"));
    out << '\n';
  }
  return out.str();
}

namespace {
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}
}  // namespace

TravelTimeAtlas atlas_from_csv(std::string_view csv, const RoadGraph& g, std::span<const Facility> facilities,
                               double speed_kmh) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line)) throw InputError("atlas csv: empty file");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "incident_node") throw InputError("atlas csv: bad header");
  std::vector<Facility> cols;
  for (std::size_t k = 1; k < header.size(); ++k) {
    auto it = std::find_if(facilities.begin(), facilities.end(), [&](const Facility& f) { return f.id == header[k]; });
    if (it == facilities.end()) throw InputError("atlas csv: unknown facility id " + header[k]);
    cols.push_back(*it);
  }
  std::vector<NodeIndex> rows;
  std::vector<TravelTime> times;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InputError("atlas csv line " + std::to_string(line_no) + ": wrong column count");
    }
    rows.push_back(g.index_of(cells[0]));
    for (std::size_t k = 1; k < cells.size(); ++k) {
      if (cells[k] == "unreachable") {
        times.emplace_back(std::nullopt);
      } else {
        const auto v = parse_double(cells[k]);
        if (!v) throw InputError("atlas csv line " + std::to_string(line_no) + ": bad entry '" + cells[k] + "'");
        times.emplace_back(*v);
      }
    }
  }
  try {
    return TravelTimeAtlas(std::move(rows), std::move(cols), std::move(times), speed_kmh);
  } catch (const ContractError& e) {
    throw InputError(std::string("atlas csv: ") + e.what());
  }
}

std::string atlas_metadata_json(const TravelTimeAtlas& atlas, const RoadGraph& g, const std::string& csv_text) {
  nlohmann::ordered_json meta;
  meta["format"] = "travel-time-atlas/1";
  meta["speed_kmh"] = atlas.speed_kmh();
  meta["n_incident_nodes"] = atlas.rows();
  meta["n_facilities"] = atlas.cols();
  std::size_t unreachable = 0;
  for (const auto& t : atlas.raw()) unreachable += t ? 0 : 1;
  meta["n_unreachable"] = unreachable;
  meta["graph_nodes"] = g.node_count();
  meta["graph_edges"] = g.edge_count();
  meta["graph_sha256"] = g.content_hash();
  meta["csv_sha256"] = sha256_hex(csv_text);
  return meta.dump(2) + "\n";
}

}  // namespace dispatch::atlas
