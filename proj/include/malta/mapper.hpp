//===-- mapper.hpp - Modulo scheduling, placement and routing ------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// Maps a (transformed) kernel onto a fabric. Every node gets a tile and a
// start cycle; the loop body is issued every `ii` cycles, so each tile can
// host one node per modulo slot (start mod ii). A value crossing tiles
// travels along a shortest route and pays one cycle per hop, which makes a
// crossbar transfer cost exactly one cycle.
//
// Each modulo slot occupies one configuration context, so a mapping is only
// usable when ii <= config_mem_depth.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "malta/arch.hpp"
#include "malta/kernel.hpp"

namespace malta {

struct MapBudget {
  int max_ii = 32;
  /// Placement attempts per candidate II before the search gives up on it.
  std::int64_t attempts_per_ii = 20000;
};

struct Placement {
  int node = 0;
  Coord tile;
  int cycle = 0;

  friend bool operator==(const Placement &, const Placement &) = default;
};

struct Route {
  DfgEdge edge;
  std::vector<Coord> path; // both endpoints included; size 1 for same-tile

  int hops() const { return static_cast<int>(path.size()) - 1; }
  friend bool operator==(const Route &, const Route &) = default;
};

struct MappingResult {
  int ii = 1;
  int schedule_len = 1;
  std::vector<Placement> placements; // ordered as the kernel's nodes
  std::vector<Route> routes;         // ordered as the kernel's edges

  const Placement &placement_of(int node) const;
  friend bool operator==(const MappingResult &, const MappingResult &) = default;
};

enum class MapErrorCode : std::uint8_t {
  MissingFuKind,
  InsufficientTiles,
  ConfigMemOverflow,
  RoutingFailure,
  IiBoundExceeded,
};

std::string_view to_string(MapErrorCode code);
MapErrorCode parse_map_error_code(std::string_view token);

/// Machine-readable repair hint attached to a MapError.
struct MapHint {
  std::vector<FuKind> missing_kinds; // MissingFuKind
  int required_tiles = 0;            // InsufficientTiles
  int required_ii = 0;               // ConfigMemOverflow: smallest mappable II
};

struct MapError {
  MapErrorCode code = MapErrorCode::IiBoundExceeded;
  std::string detail;
  MapHint hint;
};

struct IiBounds {
  int res_mii = 1;
  int rec_mii = 1;

  int lower() const { return res_mii > rec_mii ? res_mii : rec_mii; }
};

/// Resource bound: per supported kind ceil(count / tiles), and the overall
/// tile occupancy ceil(nodes / tiles) since a tile issues one node per slot.
/// Recurrence bound: max over dependence cycles of
/// ceil(sum latency / sum distance); 1 for acyclic kernels.
IiBounds min_ii_bounds(const KernelGraph &k, const FabricSpec &f);

/// Recurrence bound by enumerating elementary cycles.
int rec_mii_by_cycles(const KernelGraph &k);
/// Recurrence bound as the smallest II leaving no positive cycle under edge
/// weights latency(src) - distance * II.
int rec_mii_by_longest_path(const KernelGraph &k);

using MapOutcome = std::variant<MappingResult, MapError>;

/// Searches II upward from the lower bound. Nodes are placed in
/// (ASAP time, id) order, each on the (tile, slot) giving the earliest start,
/// nearest its already placed neighbours; dead ends backtrack until the
/// per-II attempt budget runs out. Deterministic.
MapOutcome map_kernel(const KernelGraph &k, const FabricSpec &f,
                      const MapBudget &budget = {});

/// Baseline (single-issue in-order core, trip * sum of latencies) over the
/// pipelined cycle count schedule_len + ii * (trip_after_transforms - 1).
double speedup(const KernelGraph &original, const MappingResult &m,
               int trip_after_transforms);

nlohmann::json mapping_to_json(const MappingResult &m);
nlohmann::json map_error_to_json(const MapError &e);
MapError map_error_from_json(const nlohmann::json &j);

/// Re-verifies a mapping from scratch: placement, modulo-slot exclusivity,
/// route adjacency, dependence timing and the configuration-depth bound.
/// Returns one message per violation.
std::vector<std::string> check_schedule(const KernelGraph &k,
                                        const FabricSpec &f,
                                        const MappingResult &m);

} // namespace malta
