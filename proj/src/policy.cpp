#include "dispatch/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace dispatch::policy {

using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// k-means

namespace {
double sq_dist(const GeoPoint& a, const GeoPoint& b) {
  const double dx = a.lon - b.lon;
  const double dy = a.lat - b.lat;
  return dx * dx + dy * dy;
}

double min_sq_dist(const GeoPoint& p, std::span<const GeoPoint> centroids, const std::vector<bool>& active) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (active[c]) best = std::min(best, sq_dist(p, centroids[c]));
  }
  return best;
}
}  // namespace

std::size_t nearest_centroid(const GeoPoint& p, std::span<const GeoPoint> centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double within_cluster_ss(std::span<const GeoPoint> points, std::span<const GeoPoint> centroids,
                         std::span<const std::size_t> assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += sq_dist(points[i], centroids[assignment[i]]);
  return s;
}

ZoneAssignment cluster_zones(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (k == 0) throw InputError("k must be at least 1");
  if (k > n) throw InputError("k = " + std::to_string(k) + " exceeds the number of points (" + std::to_string(n) + ")");

  ZoneAssignment za;
  za.k = k;
  Rng rng(seed);
  std::vector<bool> active(k, false);
  za.centroids.assign(k, GeoPoint{});
  za.centroids[0] = points[rng.below(n)];
  active[0] = true;
  for (std::size_t c = 1; c < k; ++c) {
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = min_sq_dist(points[i], za.centroids, active);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    za.centroids[c] = points[far];
    active[c] = true;
  }

  std::vector<std::size_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) assign[i] = nearest_centroid(points[i], za.centroids);

  for (std::size_t iter = 1; iter <= kMaxLloydIterations; ++iter) {
    za.iterations = iter;
    // update step, reseeding emptied clusters
    for (;;) {
      std::vector<double> sx(k, 0.0), sy(k, 0.0);
      std::vector<std::size_t> count(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        sx[assign[i]] += points[i].lon;
        sy[assign[i]] += points[i].lat;
        ++count[assign[i]];
      }
      std::optional<std::size_t> empty;
      for (std::size_t c = 0; c < k; ++c) {
        active[c] = count[c] > 0;
        if (count[c] > 0) {
          za.centroids[c] = GeoPoint{sx[c] / static_cast<double>(count[c]), sy[c] / static_cast<double>(count[c])};
        } else if (!empty) {
          empty = c;
        }
      }
      if (!empty) break;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[assign[i]] < 2) continue;
        const double d = min_sq_dist(points[i], za.centroids, active);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) throw ContractError("k-means could not reseed an empty cluster");
      assign[far] = *empty;
    }
    za.objective_history.push_back(within_cluster_ss(points, za.centroids, assign));
    std::vector<std::size_t> next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = nearest_centroid(points[i], za.centroids);
    if (next == assign) break;
    assign = std::move(next);
  }
  za.assignment = std::move(assign);
  return za;
}

// ---------------------------------------------------------------------------
// Assessment

std::string_view grade_name(Grade g) {
  switch (g) {
    case Grade::Effective: return "effective";
    case Grade::AtRisk: return "at_risk";
    case Grade::Desert: return "desert";
    case Grade::Ungradable: return "ungradable";
  }
  return "unknown";
}

std::string_view grade_colour(Grade g) {
  switch (g) {
    case Grade::Effective: return "green";
    case Grade::AtRisk: return "yellow";
    case Grade::Desert: return "red";
    case Grade::Ungradable: return "grey";
  }
  return "grey";
}

void GradeThresholds::validate() const {
  if (!(t_green > 0.0) || !(t_red >= t_green)) throw InputError("grade thresholds need 0 < t_green <= t_red");
  if (!(c_min >= 0.0 && c_min <= 1.0) || !(c_red >= 0.0 && c_red <= c_min)) {
    throw InputError("coverage thresholds need 0 <= c_red <= c_min <= 1");
  }
}

Grade grade_of(std::optional<double> mean, double coverage, const GradeThresholds& th) {
  if (!mean || *mean > th.t_red || coverage < th.c_red) return Grade::Desert;
  if (*mean <= th.t_green && coverage >= th.c_min) return Grade::Effective;
  return Grade::AtRisk;
}

namespace {

struct Stats {
  std::size_t n = 0;
  std::size_t n_solvable = 0;
  std::optional<double> mean;
  double coverage = 0.0;
};

Stats stats_of(std::span<const std::optional<double>> best) {
  Stats s;
  s.n = best.size();
  double sum = 0.0;
  for (const auto& b : best) {
    if (!b) continue;
    sum += *b;
    ++s.n_solvable;
  }
  if (s.n_solvable > 0) s.mean = sum / static_cast<double>(s.n_solvable);
  if (s.n > 0) s.coverage = static_cast<double>(s.n_solvable) / static_cast<double>(s.n);
  return s;
}

// best time per probe of `category`, in probe order
std::vector<std::optional<double>> probe_best(const Region& r, Category category, const atlas::TravelTimeAtlas& atlas) {
  std::vector<std::optional<double>> out;
  for (const auto& p : r.probes) {
    if (p.category != category) continue;
    const auto row = atlas.row_of(p.node);
    if (!row) throw InputError("probe " + p.id + " of region " + r.region_id + " is not covered by the atlas");
    const auto best = atlas::best_feasible(atlas, *row, category);
    out.push_back(best ? std::optional<double>(best->t_star) : std::nullopt);
  }
  return out;
}

ServiceGrade grade_region(const Region& r, Category c, const atlas::TravelTimeAtlas& atlas, const GradeThresholds& th) {
  ServiceGrade g;
  g.region_id = r.region_id;
  g.category = c;
  const auto best = probe_best(r, c, atlas);
  const auto s = stats_of(best);
  g.n_probes = s.n;
  g.n_solvable = s.n_solvable;
  g.mean_best_time = s.mean;
  g.coverage = s.coverage;
  g.grade = s.n == 0 ? Grade::Ungradable : grade_of(s.mean, s.coverage, th);
  return g;
}

std::vector<NodeIndex> all_probe_nodes(std::span<const Region> regions) {
  std::vector<scenario::Incident> all;
  for (const auto& r : regions) all.insert(all.end(), r.probes.begin(), r.probes.end());
  return scenario::unique_nodes(all);
}

}  // namespace

std::vector<ServiceGrade> assess(std::span<const Region> regions, const atlas::TravelTimeAtlas& atlas,
                                 const GradeThresholds& th) {
  th.validate();
  std::vector<ServiceGrade> out;
  for (const auto& r : regions) {
    for (const auto c : kAllCategories) out.push_back(grade_region(r, c, atlas, th));
  }
  return out;
}

std::vector<ServiceGrade> assess_with(std::span<const Region> regions, const geo::RoadGraph& g,
                                      std::span<const geo::Facility> facilities, double speed_kmh,
                                      const GradeThresholds& th) {
  const auto nodes = all_probe_nodes(regions);
  return assess(regions, atlas::build_atlas(g, nodes, facilities, speed_kmh), th);
}

// ---------------------------------------------------------------------------
// Interventions

std::vector<NodeIndex> candidate_nodes(const geo::RoadGraph& g, const geo::RegionBoundary& boundary, std::size_t cap) {
  std::vector<NodeIndex> inside;
  for (NodeIndex v = 0; v < g.node_count(); ++v) {
    if (geo::point_in_region(g.point(v), boundary)) inside.push_back(v);
  }
  if (cap == 0 || inside.size() <= cap) return inside;
  std::vector<NodeIndex> out;
  out.reserve(cap);
  for (std::size_t i = 0; i < cap; ++i) out.push_back(inside[i * inside.size() / cap]);
  return out;
}

std::string_view plan_status_name(PlanStatus s) {
  switch (s) {
    case PlanStatus::AlreadyEffective: return "already_effective";
    case PlanStatus::Planned: return "planned";
    case PlanStatus::Infeasible: return "infeasible";
    case PlanStatus::Ungradable: return "ungradable";
  }
  return "unknown";
}

namespace {

// times from every probe of the region (all categories, probe order) to each candidate
std::vector<std::vector<std::optional<double>>> candidate_times(const geo::RoadGraph& g, const Region& r,
                                                                double speed_kmh, unsigned threads) {
  const auto& cands = r.candidates;
  std::vector<std::vector<std::optional<double>>> out(cands.size());
  auto work = [&](std::size_t i) {
    const auto lengths = atlas::lengths_to(g, cands[i]);
    auto& row = out[i];
    row.reserve(r.probes.size());
    for (const auto& p : r.probes) {
      const auto& len = lengths[p.node];
      row.push_back(len ? std::optional<double>(atlas::path_minutes(*len, speed_kmh)) : std::nullopt);
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cands.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < cands.size(); ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < cands.size(); i += workers) work(i);
      });
    }
  }
  return out;
}

struct Key {
  std::size_t unsolved;
  double mean;
  bool operator<(const Key& o) const { return unsolved != o.unsolved ? unsolved < o.unsolved : mean < o.mean; }
};

Key key_of(const Stats& s) {
  return Key{s.n - s.n_solvable, s.mean.value_or(std::numeric_limits<double>::infinity())};
}

}  // namespace

InterventionPlan plan_interventions(std::span<const Region> regions, const geo::RoadGraph& g,
                                    std::span<const geo::Facility> facilities, double speed_kmh,
                                    const GradeThresholds& th, unsigned threads) {
  th.validate();
  InterventionPlan plan;
  plan.augmented_facilities.assign(facilities.begin(), facilities.end());
  const auto probe_nodes = all_probe_nodes(regions);
  auto current_atlas = [&] { return atlas::build_atlas(g, probe_nodes, plan.augmented_facilities, speed_kmh, threads); };

  auto atlas_now = current_atlas();
  plan.grades_before = assess(regions, atlas_now, th);

  // one plan entry per region x category, in assessment order
  std::map<std::pair<std::size_t, int>, std::size_t> entry_of;
  for (std::size_t ri = 0; ri < regions.size(); ++ri) {
    for (const auto c : kAllCategories) {
      const auto& gb = plan.grades_before[ri * kNumCategories + category_index(c)];
      RegionPlan rp;
      rp.region_id = regions[ri].region_id;
      rp.category = c;
      rp.grade_before = gb.grade;
      rp.time_before = gb.mean_best_time;
      rp.time_after = gb.mean_best_time;
      rp.coverage_before = gb.coverage;
      rp.coverage_after = gb.coverage;
      rp.status = gb.grade == Grade::Ungradable  ? PlanStatus::Ungradable
                  : gb.grade == Grade::Effective ? PlanStatus::AlreadyEffective
                                                 : PlanStatus::Planned;
      rp.facility_prefix = plan.augmented_facilities.size();
      entry_of[{ri, category_index(c)}] = plan.regions.size();
      plan.regions.push_back(std::move(rp));
    }
  }

  std::vector<std::vector<std::vector<std::optional<double>>>> cand_cache(regions.size());
  std::vector<bool> cached(regions.size(), false);

  constexpr int kMaxPasses = 8;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    bool placed_any = false;
    bool all_effective = true;
    for (std::size_t ri = 0; ri < regions.size(); ++ri) {
      const Region& r = regions[ri];
      for (const auto c : kAllCategories) {
        auto& rp = plan.regions[entry_of[{ri, category_index(c)}]];
        if (rp.status == PlanStatus::Ungradable || rp.status == PlanStatus::Infeasible) continue;
        auto best = probe_best(r, c, atlas_now);
        Stats st = stats_of(best);
        if (grade_of(st.mean, st.coverage, th) == Grade::Effective) continue;
        all_effective = false;
        rp.status = PlanStatus::Planned;
        if (r.candidates.empty()) {
          rp.status = PlanStatus::Infeasible;
          continue;
        }
        if (!cached[ri]) {
          cand_cache[ri] = candidate_times(g, r, speed_kmh, threads);
          cached[ri] = true;
        }
        // probe positions of this category inside the region's probe list
        std::vector<std::size_t> cat_idx;
        for (std::size_t p = 0; p < r.probes.size(); ++p) {
          if (r.probes[p].category == c) cat_idx.push_back(p);
        }
        std::vector<bool> used(r.candidates.size(), false);
        bool placed_here = false;
        while (grade_of(st.mean, st.coverage, th) != Grade::Effective) {
          std::optional<std::size_t> pick;
          Key pick_key = key_of(st);
          std::vector<std::optional<double>> pick_best;
          for (std::size_t ci = 0; ci < r.candidates.size(); ++ci) {
            if (used[ci]) continue;
            std::vector<std::optional<double>> trial = best;
            const auto& ct = cand_cache[ri][ci];
            for (std::size_t k = 0; k < cat_idx.size(); ++k) {
              const auto& t = ct[cat_idx[k]];
              if (t && (!trial[k] || *t < *trial[k])) trial[k] = t;
            }
            const Key key = key_of(stats_of(trial));
            if (key < pick_key) {
              pick_key = key;
              pick = ci;
              pick_best = std::move(trial);
            }
          }
          if (!pick) {
            rp.status = PlanStatus::Infeasible;
            break;
          }
          used[*pick] = true;
          best = std::move(pick_best);
          st = stats_of(best);
          const NodeIndex node = r.candidates[*pick];
          ProposedSite site{g.point(node), node, g.id(node), c};
          geo::Facility fac;
          fac.id = "new_" + r.region_id + "_" + std::to_string(category_index(c)) + "_" +
                   std::to_string(rp.proposed_sites.size() + 1);
          fac.category = c;
          fac.location = site.location;
          fac.node = node;
          plan.augmented_facilities.push_back(std::move(fac));
          rp.proposed_sites.push_back(std::move(site));
          placed_here = true;
        }
        rp.time_after = st.mean;
        rp.coverage_after = st.coverage;
        rp.facility_prefix = plan.augmented_facilities.size();
        // later regions in this pass see the new sites
        if (placed_here) {
          placed_any = true;
          atlas_now = current_atlas();
        }
      }
    }
    if (all_effective || !placed_any) break;
  }

  plan.grades_after = assess(regions, current_atlas(), th);
  return plan;
}

namespace {
std::string opt_num(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }
}  // namespace

std::string InterventionPlan::to_csv() const {
  std::ostringstream out;
  out << "region_id,category,n_new,site_lon,site_lat,time_before_min,time_after_min,status\n";
  for (const auto& rp : regions) {
    const std::string tail = opt_num(rp.time_before) + "," + opt_num(rp.time_after) + "," +
                             std::string(plan_status_name(rp.status));
    if (rp.proposed_sites.empty()) {
      out << rp.region_id << ',' << category_index(rp.category) << ",0,,," << tail << '\n';
      continue;
    }
    for (const auto& s : rp.proposed_sites) {
      out << rp.region_id << ',' << category_index(rp.category) << ',' << rp.n_new() << ','
          << format_double(s.location.lon) << ',' << format_double(s.location.lat) << ',' << tail << '\n';
    }
  }
  return out.str();
}

std::string InterventionPlan::sites_geojson() const {
  ordered_json features = ordered_json::array();
  for (const auto& rp : regions) {
    for (const auto& s : rp.proposed_sites) {
      ordered_json f;
      f["type"] = "Feature";
      f["geometry"] = {{"type", "Point"}, {"coordinates", {s.location.lon, s.location.lat}}};
      f["properties"] = {{"region_id", rp.region_id},
                         {"category", category_index(s.category)},
                         {"node", s.node_id},
                         {"time_before_min", rp.time_before ? ordered_json(*rp.time_before) : ordered_json(nullptr)},
                         {"time_after_min", rp.time_after ? ordered_json(*rp.time_after) : ordered_json(nullptr)}};
      features.push_back(std::move(f));
    }
  }
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = std::move(features);
  return doc.dump(1) + "\n";
}

std::string grades_to_csv(std::span<const ServiceGrade> grades) {
  std::ostringstream out;
  out << "region_id,category,mean_best_time_min,coverage,grade\n";
  for (const auto& g : grades) {
    out << g.region_id << ',' << category_index(g.category) << ',' << opt_num(g.mean_best_time) << ','
        << format_double(g.coverage) << ',' << grade_name(g.grade) << '\n';
  }
  return out.str();
}

std::string grades_to_geojson(std::span<const ServiceGrade> grades, std::span<const Region> regions) {
  ordered_json features = ordered_json::array();
  for (const auto& g : grades) {
    auto it = std::find_if(regions.begin(), regions.end(), [&](const Region& r) { return r.region_id == g.region_id; });
    ordered_json geom = nullptr;
    if (it != regions.end() && it->boundary) {
      ordered_json rings = ordered_json::array();
      auto ring_json = [](const geo::Ring& ring) {
        ordered_json arr = ordered_json::array();
        for (const auto& p : ring) arr.push_back({p.lon, p.lat});
        return arr;
      };
      rings.push_back(ring_json(it->boundary->outer_ring));
      for (const auto& h : it->boundary->holes) rings.push_back(ring_json(h));
      geom = {{"type", "Polygon"}, {"coordinates", rings}};
    } else if (it != regions.end() && !it->probes.empty()) {
      double lon = 0.0, lat = 0.0;
      for (const auto& p : it->probes) {
        lon += p.location.lon;
        lat += p.location.lat;
      }
      const auto n = static_cast<double>(it->probes.size());
      geom = {{"type", "Point"}, {"coordinates", {lon / n, lat / n}}};
    }
    ordered_json f;
    f["type"] = "Feature";
    f["geometry"] = geom;
    f["properties"] = {{"region_id", g.region_id},
                       {"category", category_index(g.category)},
                       {"mean_best_time_min", g.mean_best_time ? ordered_json(*g.mean_best_time) : ordered_json(nullptr)},
                       {"coverage", g.coverage},
                       {"grade", std::string(grade_name(g.grade))},
                       {"colour", std::string(grade_colour(g.grade))}};
    features.push_back(std::move(f));
  }
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = std::move(features);
  return doc.dump(1) + "\n";
}

}  // namespace dispatch::policy
