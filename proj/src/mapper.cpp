//===-- mapper.cpp - Modulo scheduling, placement and routing ------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//

#include "malta/mapper.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <tuple>

#include "malta/error.hpp"

namespace malta {

namespace {

int ceil_div(long long a, long long b) {
  return static_cast<int>((a + b - 1) / b);
}

/// Index-based view of a kernel used by the II bounds and the scheduler.
struct IndexedGraph {
  struct Arc {
    int other;
    int latency; // latency of the source node
    int distance;
  };
  std::vector<int> latency;
  std::vector<std::vector<Arc>> out;
  std::vector<std::vector<Arc>> in;
  std::vector<std::pair<int, int>> edge_ends;

  explicit IndexedGraph(const KernelGraph &k)
      : latency(k.nodes.size()), out(k.nodes.size()), in(k.nodes.size()) {
    for (std::size_t i = 0; i < k.nodes.size(); ++i)
      latency[i] = k.nodes[i].latency;
    for (const DfgEdge &e : k.edges) {
      const int s = static_cast<int>(k.index_of(e.src));
      const int d = static_cast<int>(k.index_of(e.dst));
      out[s].push_back({d, latency[s], e.distance});
      in[d].push_back({s, latency[s], e.distance});
      edge_ends.emplace_back(s, d);
    }
  }

  int size() const { return static_cast<int>(latency.size()); }
};

/// True when weights latency - distance * ii admit a positive cycle.
bool has_positive_cycle(const IndexedGraph &g, int ii) {
  const int n = g.size();
  std::vector<long long> dist(n, 0);
  for (int round = 0; round <= n; ++round) {
    bool changed = false;
    for (int u = 0; u < n; ++u) {
      for (const auto &arc : g.out[u]) {
        const long long cand =
            dist[u] + arc.latency - static_cast<long long>(arc.distance) * ii;
        if (cand > dist[arc.other]) {
          dist[arc.other] = cand;
          changed = true;
        }
      }
    }
    if (!changed)
      return false;
  }
  return true;
}

/// ASAP start times over the distance-0 subgraph (a DAG).
std::vector<long long> asap_times(const IndexedGraph &g) {
  const int n = g.size();
  std::vector<int> indegree(n, 0);
  for (int u = 0; u < n; ++u)
    for (const auto &arc : g.out[u])
      if (arc.distance == 0)
        ++indegree[arc.other];
  std::vector<long long> t(n, 0);
  std::vector<int> ready;
  for (int i = n - 1; i >= 0; --i)
    if (indegree[i] == 0)
      ready.push_back(i);
  while (!ready.empty()) {
    const int u = ready.back();
    ready.pop_back();
    for (const auto &arc : g.out[u]) {
      if (arc.distance != 0)
        continue;
      t[arc.other] = std::max(t[arc.other], t[u] + arc.latency);
      if (--indegree[arc.other] == 0)
        ready.push_back(arc.other);
    }
  }
  return t;
}

/// Depth-first search over (tile, modulo slot) assignments for one II.
///
/// Start times are kept at the least solution of the dependence constraints
/// among placed nodes, restricted to each node's chosen slot: placing a node
/// only ever pushes other start times later, and a positive dependence cycle
/// shows up as a start time running past `horizon_`, beyond which no least
/// solution can lie.
class ModuloSearch {
public:
  enum class Status { Found, Infeasible, BudgetExhausted };

  ModuloSearch(const IndexedGraph &g, const std::vector<int> &order,
               const std::vector<std::vector<int>> &hops, int tiles, int ii,
               std::int64_t budget)
      : g_(g), order_(order), hops_(hops), tiles_(tiles), ii_(ii),
        budget_(budget), tile_(g.size(), -1), slot_(g.size(), -1),
        start_(g.size(), 0), placed_(g.size(), false),
        occupied_(static_cast<std::size_t>(tiles) * ii, false) {
    int max_latency = 1;
    for (int l : g.latency)
      max_latency = std::max(max_latency, l);
    int max_hops = 0;
    for (const auto &row : hops)
      for (int h : row)
        max_hops = std::max(max_hops, h);
    // Least solutions never exceed this; see propagate().
    horizon_ = 2LL * ii +
               static_cast<long long>(g.size()) * (max_latency + max_hops + ii);
  }

  Status run() {
    if (search(0))
      return Status::Found;
    return exhausted_ ? Status::BudgetExhausted : Status::Infeasible;
  }

  int tile(int v) const { return tile_[v]; }
  long long start(int v) const { return start_[v]; }

private:
  struct Candidate {
    long long start;
    int affinity;
    int tile;
    int slot;
  };

  long long align(long long at_least, int slot) const {
    at_least = std::max<long long>(at_least, 0);
    const long long base = at_least - at_least % ii_;
    const long long s = base + slot;
    return s >= at_least ? s : s + ii_;
  }

  bool search(std::size_t depth) {
    if (depth == order_.size())
      return true;
    const int v = order_[depth];

    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(tiles_) * ii_);
    for (int t = 0; t < tiles_; ++t) {
      long long earliest = 0;
      int affinity = 0;
      for (const auto &arc : g_.in[v]) {
        if (arc.other == v || !placed_[arc.other])
          continue;
        const int h = hops_[tile_[arc.other]][t];
        earliest = std::max(earliest, start_[arc.other] + arc.latency + h -
                                          static_cast<long long>(arc.distance) * ii_);
        affinity += h;
      }
      for (const auto &arc : g_.out[v])
        if (arc.other != v && placed_[arc.other])
          affinity += hops_[t][tile_[arc.other]];
      // Shifting every start by a constant preserves feasibility, so the
      // first node can be pinned to slot 0.
      const int slots = depth == 0 ? 1 : ii_;
      for (int r = 0; r < slots; ++r) {
        if (occupied_[static_cast<std::size_t>(t) * ii_ + r])
          continue;
        candidates.push_back({align(earliest, r), affinity, t, r});
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate &a, const Candidate &b) {
                return std::tie(a.start, a.affinity, a.tile, a.slot) <
                       std::tie(b.start, b.affinity, b.tile, b.slot);
              });

    for (const Candidate &c : candidates) {
      if (++attempts_ > budget_) {
        exhausted_ = true;
        return false;
      }
      const std::size_t mark = trail_.size();
      tile_[v] = c.tile;
      slot_[v] = c.slot;
      start_[v] = c.start;
      placed_[v] = true;
      occupied_[static_cast<std::size_t>(c.tile) * ii_ + c.slot] = true;
      if (propagate(v) && search(depth + 1))
        return true;
      while (trail_.size() > mark) {
        start_[trail_.back().first] = trail_.back().second;
        trail_.pop_back();
      }
      occupied_[static_cast<std::size_t>(c.tile) * ii_ + c.slot] = false;
      placed_[v] = false;
      tile_[v] = -1;
      slot_[v] = -1;
      if (exhausted_)
        return false;
    }
    return false;
  }

  bool propagate(int root) {
    std::vector<int> work{root};
    while (!work.empty()) {
      const int x = work.back();
      work.pop_back();
      for (const auto &arc : g_.out[x]) {
        const int w = arc.other;
        if (!placed_[w])
          continue;
        const long long need = start_[x] + arc.latency +
                               hops_[tile_[x]][tile_[w]] -
                               static_cast<long long>(arc.distance) * ii_;
        if (start_[w] >= need)
          continue;
        const long long moved = align(need, slot_[w]);
        if (moved > horizon_)
          return false;
        trail_.emplace_back(w, start_[w]);
        start_[w] = moved;
        work.push_back(w);
      }
    }
    return true;
  }

  const IndexedGraph &g_;
  const std::vector<int> &order_;
  const std::vector<std::vector<int>> &hops_;
  int tiles_;
  int ii_;
  std::int64_t budget_;
  std::int64_t attempts_ = 0;
  bool exhausted_ = false;
  long long horizon_ = 0;
  std::vector<int> tile_;
  std::vector<int> slot_;
  std::vector<long long> start_;
  std::vector<bool> placed_;
  std::vector<bool> occupied_;
  std::vector<std::pair<int, long long>> trail_;
};

struct SearchOutcome {
  int ii = 0; // 0 when nothing was found
  std::vector<int> tile;
  std::vector<long long> start;
};

SearchOutcome search_ii_range(const IndexedGraph &g,
                              const std::vector<int> &order,
                              const std::vector<std::vector<int>> &hops,
                              int tiles, int lo, int hi, std::int64_t budget) {
  SearchOutcome out;
  for (int ii = lo; ii <= hi; ++ii) {
    if (static_cast<long long>(tiles) * ii < g.size())
      continue;
    ModuloSearch search(g, order, hops, tiles, ii, budget);
    if (search.run() != ModuloSearch::Status::Found)
      continue;
    out.ii = ii;
    for (int v = 0; v < g.size(); ++v) {
      out.tile.push_back(search.tile(v));
      out.start.push_back(search.start(v));
    }
    return out;
  }
  return out;
}

} // namespace

const Placement &MappingResult::placement_of(int node) const {
  for (const Placement &p : placements)
    if (p.node == node)
      return p;
  throw Error(ErrorCode::InvalidArgument,
              "mapping has no placement for node " + std::to_string(node));
}

std::string_view to_string(MapErrorCode code) {
  switch (code) {
  case MapErrorCode::MissingFuKind: return "MISSING_FU_KIND";
  case MapErrorCode::InsufficientTiles: return "INSUFFICIENT_TILES";
  case MapErrorCode::ConfigMemOverflow: return "CONFIG_MEM_OVERFLOW";
  case MapErrorCode::RoutingFailure: return "ROUTING_FAILURE";
  case MapErrorCode::IiBoundExceeded: return "II_BOUND_EXCEEDED";
  }
  return "UNKNOWN";
}

MapErrorCode parse_map_error_code(std::string_view token) {
  for (auto code : {MapErrorCode::MissingFuKind, MapErrorCode::InsufficientTiles,
                    MapErrorCode::ConfigMemOverflow, MapErrorCode::RoutingFailure,
                    MapErrorCode::IiBoundExceeded})
    if (to_string(code) == token)
      return code;
  throw Error(ErrorCode::UnknownEnum,
              "unknown map error code '" + std::string(token) + "'");
}

int rec_mii_by_cycles(const KernelGraph &k) {
  const IndexedGraph g(k);
  const int n = g.size();
  int best = 1;
  // Elementary cycles rooted at their smallest node index.
  std::vector<bool> on_path(n, false);
  std::vector<bool> reaches_root(n, false);
  for (int root = 0; root < n; ++root) {
    // Nodes >= root that can reach root through nodes >= root.
    std::fill(reaches_root.begin(), reaches_root.end(), false);
    std::vector<int> stack{root};
    reaches_root[root] = true;
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      for (const auto &arc : g.in[x])
        if (arc.other >= root && !reaches_root[arc.other]) {
          reaches_root[arc.other] = true;
          stack.push_back(arc.other);
        }
    }
    std::function<void(int, long long, long long)> walk =
        [&](int x, long long lat, long long dist) {
          for (const auto &arc : g.out[x]) {
            const int y = arc.other;
            if (y == root) {
              const long long total_dist = dist + arc.distance;
              if (total_dist > 0)
                best = std::max(best, ceil_div(lat + arc.latency, total_dist));
              continue;
            }
            if (y < root || on_path[y] || !reaches_root[y])
              continue;
            on_path[y] = true;
            walk(y, lat + arc.latency, dist + arc.distance);
            on_path[y] = false;
          }
        };
    on_path[root] = true;
    walk(root, 0, 0);
    on_path[root] = false;
  }
  return best;
}

int rec_mii_by_longest_path(const KernelGraph &k) {
  const IndexedGraph g(k);
  int lo = 1;
  int hi = static_cast<int>(std::max<long long>(1, k.total_latency()));
  if (has_positive_cycle(g, hi))
    return hi; // unreachable for valid kernels: every cycle has distance >= 1
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (has_positive_cycle(g, mid))
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

IiBounds min_ii_bounds(const KernelGraph &k, const FabricSpec &f) {
  IiBounds b;
  const int tiles = std::max(1, f.tile_count());
  for (const auto &[kind, count] : op_census(k))
    if (f.fu_kinds.contains(kind))
      b.res_mii = std::max(b.res_mii, ceil_div(count, tiles));
  b.res_mii = std::max(b.res_mii,
                       ceil_div(static_cast<long long>(k.nodes.size()), tiles));
  b.rec_mii = k.nodes.size() <= 32 ? rec_mii_by_cycles(k)
                                   : rec_mii_by_longest_path(k);
  return b;
}

MapOutcome map_kernel(const KernelGraph &k, const FabricSpec &f,
                      const MapBudget &budget) {
  const FuSet needed = required_kinds(k);
  if (!f.fu_kinds.includes(needed)) {
    MapError err{MapErrorCode::MissingFuKind, "fabric lacks functional units:", {}};
    for (FuKind kind : needed.kinds()) {
      if (f.fu_kinds.contains(kind))
        continue;
      err.hint.missing_kinds.push_back(kind);
      err.detail += " " + std::string(to_string(kind));
    }
    return err;
  }

  const IiBounds bounds = min_ii_bounds(k, f);
  const int n = static_cast<int>(k.nodes.size());
  if (bounds.res_mii > budget.max_ii) {
    MapError err{MapErrorCode::InsufficientTiles,
                 std::to_string(n) + " nodes need II >= " +
                     std::to_string(bounds.res_mii) + " on " +
                     std::to_string(f.tile_count()) + " tiles (max II " +
                     std::to_string(budget.max_ii) + ")",
                 {}};
    int required = ceil_div(n, budget.max_ii);
    for (const auto &[kind, count] : op_census(k))
      required = std::max(required, ceil_div(count, budget.max_ii));
    err.hint.required_tiles = required;
    return err;
  }
  if (bounds.rec_mii > budget.max_ii)
    return MapError{MapErrorCode::IiBoundExceeded,
                    "recurrence bound " + std::to_string(bounds.rec_mii) +
                        " exceeds max II " + std::to_string(budget.max_ii),
                    {}};

  const IndexedGraph g(k);
  const std::vector<long long> asap = asap_times(g);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::tie(asap[a], k.nodes[a].id) < std::tie(asap[b], k.nodes[b].id);
  });

  const auto hops = hop_matrix(f);
  const SearchOutcome found = search_ii_range(
      g, order, hops, f.tile_count(), bounds.lower(), budget.max_ii,
      budget.attempts_per_ii);

  if (found.ii == 0) {
    // Decide whether routing latency is what blocks the schedule by retrying
    // with free transfers.
    const std::vector<std::vector<int>> free_hops(
        hops.size(), std::vector<int>(hops.size(), 0));
    const SearchOutcome relaxed = search_ii_range(
        g, order, free_hops, f.tile_count(), bounds.lower(), budget.max_ii,
        budget.attempts_per_ii);
    if (relaxed.ii != 0)
      return MapError{MapErrorCode::RoutingFailure,
                      "no schedule up to II " + std::to_string(budget.max_ii) +
                          " once routing latency is charged (II " +
                          std::to_string(relaxed.ii) + " with free routing)",
                      {}};
    return MapError{MapErrorCode::IiBoundExceeded,
                    "no schedule found for II in [" +
                        std::to_string(bounds.lower()) + ", " +
                        std::to_string(budget.max_ii) + "]",
                    {}};
  }

  if (found.ii > f.config_mem_depth) {
    MapError err{MapErrorCode::ConfigMemOverflow,
                 "smallest mappable II " + std::to_string(found.ii) +
                     " exceeds " + std::to_string(f.config_mem_depth) +
                     " configuration contexts",
                 {}};
    err.hint.required_ii = found.ii;
    return err;
  }

  MappingResult m;
  m.ii = found.ii;
  const long long base = *std::min_element(found.start.begin(), found.start.end());
  long long len = 1;
  for (int v = 0; v < n; ++v) {
    const long long s = found.start[v] - base;
    m.placements.push_back(
        {k.nodes[v].id, f.coord_of(found.tile[v]), static_cast<int>(s)});
    len = std::max(len, s + k.nodes[v].latency);
  }
  m.schedule_len = static_cast<int>(len);
  for (std::size_t i = 0; i < k.edges.size(); ++i) {
    const auto [s, d] = g.edge_ends[i];
    m.routes.push_back({k.edges[i], shortest_route(f, f.coord_of(found.tile[s]),
                                                   f.coord_of(found.tile[d]))});
  }
  return m;
}

double speedup(const KernelGraph &original, const MappingResult &m,
               int trip_after_transforms) {
  const double baseline = static_cast<double>(original.trip_count) *
                          static_cast<double>(original.total_latency());
  const double cgra = static_cast<double>(m.schedule_len) +
                      static_cast<double>(m.ii) * (trip_after_transforms - 1);
  return baseline / cgra;
}

namespace {
nlohmann::json coord_json(Coord c) { return nlohmann::json::array({c.row, c.col}); }
} // namespace

nlohmann::json mapping_to_json(const MappingResult &m) {
  nlohmann::json placements = nlohmann::json::array();
  for (const Placement &p : m.placements)
    placements.push_back(
        {{"node", p.node}, {"tile", coord_json(p.tile)}, {"cycle", p.cycle}});
  nlohmann::json routes = nlohmann::json::array();
  for (const Route &r : m.routes) {
    nlohmann::json path = nlohmann::json::array();
    for (Coord c : r.path)
      path.push_back(coord_json(c));
    routes.push_back({{"src", r.edge.src},
                      {"dst", r.edge.dst},
                      {"distance", r.edge.distance},
                      {"path", std::move(path)}});
  }
  return {{"ii", m.ii},
          {"schedule_len", m.schedule_len},
          {"placements", std::move(placements)},
          {"routes", std::move(routes)}};
}

nlohmann::json map_error_to_json(const MapError &e) {
  nlohmann::json hint = nlohmann::json::object();
  if (!e.hint.missing_kinds.empty()) {
    nlohmann::json kinds = nlohmann::json::array();
    for (FuKind k : e.hint.missing_kinds)
      kinds.push_back(std::string(to_string(k)));
    hint["missing_kinds"] = std::move(kinds);
  }
  if (e.hint.required_tiles > 0)
    hint["required_tiles"] = e.hint.required_tiles;
  if (e.hint.required_ii > 0)
    hint["required_ii"] = e.hint.required_ii;
  return {{"code", std::string(to_string(e.code))},
          {"detail", e.detail},
          {"hint", std::move(hint)}};
}

MapError map_error_from_json(const nlohmann::json &j) {
  MapError e;
  e.code = parse_map_error_code(j.at("code").get<std::string>());
  e.detail = j.value("detail", "");
  if (const auto it = j.find("hint"); it != j.end()) {
    for (const auto &k : it->value("missing_kinds", nlohmann::json::array()))
      e.hint.missing_kinds.push_back(parse_fu_kind(k.get<std::string>()));
    e.hint.required_tiles = it->value("required_tiles", 0);
    e.hint.required_ii = it->value("required_ii", 0);
  }
  return e;
}

} // namespace malta
