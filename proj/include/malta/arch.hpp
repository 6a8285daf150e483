//===-- arch.hpp - CGRA fabric design space -----------------------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// The hardware half of a design point (tile grid, functional-unit kinds,
// configuration memory, interconnect) together with the compilation
// parameters that travel with it, plus the architecture file format.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace malta {

enum class FuKind : std::uint8_t {
  Add,
  Sub,
  Mul,
  Mac,
  Div,
  Shift,
  Logic,
  Cmp,
  Phi,
  Load,
  Store,
  Ret,
};

inline constexpr std::size_t kFuKindCount = 12;

inline constexpr std::array<FuKind, kFuKindCount> kAllFuKinds = {
    FuKind::Add,   FuKind::Sub, FuKind::Mul, FuKind::Mac,
    FuKind::Div,   FuKind::Shift, FuKind::Logic, FuKind::Cmp,
    FuKind::Phi,   FuKind::Load, FuKind::Store, FuKind::Ret};

std::string_view to_string(FuKind kind);
/// Accepts the upper-case token ("MAC"); case-insensitive.
FuKind parse_fu_kind(std::string_view token);

/// Set of functional-unit kinds; every tile of a fabric carries the same set.
class FuSet {
public:
  constexpr FuSet() = default;
  FuSet(std::initializer_list<FuKind> kinds) {
    for (FuKind k : kinds)
      insert(k);
  }

  bool contains(FuKind k) const { return bits_ & bit(k); }
  void insert(FuKind k) { bits_ |= bit(k); }
  void erase(FuKind k) { bits_ &= static_cast<std::uint16_t>(~bit(k)); }
  std::size_t size() const;
  bool empty() const { return bits_ == 0; }
  bool includes(FuSet other) const { return (other.bits_ & ~bits_) == 0; }

  /// Kinds in declaration order.
  std::vector<FuKind> kinds() const;

  friend bool operator==(FuSet, FuSet) = default;

private:
  static constexpr std::uint16_t bit(FuKind k) {
    return static_cast<std::uint16_t>(1u << static_cast<unsigned>(k));
  }
  std::uint16_t bits_ = 0;
};

enum class Topology : std::uint8_t { Mesh, KingMesh, Crossbar };

inline constexpr std::array<Topology, 3> kAllTopologies = {
    Topology::Mesh, Topology::KingMesh, Topology::Crossbar};

std::string_view to_string(Topology topology);
Topology parse_topology(std::string_view token);

struct Coord {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Coord &, const Coord &) = default;
};

namespace bounds {
inline constexpr int kMaxGridDim = 16;
inline constexpr int kMaxUnroll = 8;
inline constexpr int kMaxVectorize = 4;
} // namespace bounds

struct FabricSpec {
  int rows = 1;
  int cols = 1;
  FuSet fu_kinds;
  int config_mem_depth = 1; // configuration contexts per tile
  int data_mem_kb = 0;
  Topology topology = Topology::Mesh;

  int tile_count() const { return rows * cols; }
  bool contains(Coord c) const {
    return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols;
  }
  /// Row-major tile index.
  int index_of(Coord c) const { return c.row * cols + c.col; }
  Coord coord_of(int index) const { return {index / cols, index % cols}; }

  friend bool operator==(const FabricSpec &, const FabricSpec &) = default;
};

struct SwParams {
  int unroll_factor = 1;
  int vectorize_factor = 1;

  friend bool operator==(const SwParams &, const SwParams &) = default;
};

enum class Provenance : std::uint8_t { Proposed, Repaired };

std::string_view to_string(Provenance p);

/// One joint hardware/software candidate.
struct DesignPoint {
  FabricSpec fabric;
  SwParams sw;
  std::string id;
  Provenance provenance = Provenance::Proposed;
  std::string note;

  /// Compares only the hardware and software parameters.
  bool same_parameters(const DesignPoint &other) const {
    return fabric == other.fabric && sw == other.sw;
  }
};

enum class ViolationCode : std::uint8_t {
  RowsRange,
  ColsRange,
  FuKindsEmpty,
  MissingLoadStore,
  ConfigDepthRange,
  DataMemRange,
  UnrollRange,
  VectorizeRange,
};

std::string_view to_string(ViolationCode code);

struct StructuralViolation {
  ViolationCode code;
  std::string field;
  std::string message;
};

/// Every violated invariant, ordered by field name. Empty means valid.
std::vector<StructuralViolation> validate_design(const DesignPoint &d);

/// Tiles one routing hop away from `tile`, in lexicographic order.
/// Throws Error(OutOfGrid) when `tile` lies outside the grid.
std::vector<Coord> neighbors(const FabricSpec &f, Coord tile);

/// Shortest route between two tiles: breadth-first search over neighbors(),
/// expanding neighbors in lexicographic order so ties resolve to the
/// lexicographically smallest predecessor. The path includes both endpoints.
std::vector<Coord> shortest_route(const FabricSpec &f, Coord from, Coord to);

/// All-pairs hop counts indexed by row-major tile index (BFS distances).
std::vector<std::vector<int>> hop_matrix(const FabricSpec &f);

// Architecture file (JSON). Unknown keys are rejected; data_mem_kb is
// optional and defaults to 0. Field values are not range-checked here;
// validate_design() reports out-of-range values.
DesignPoint parse_design(std::string_view text, std::string id = "design");
DesignPoint design_from_json(const nlohmann::json &j, std::string id = "design");
nlohmann::json design_to_json(const DesignPoint &d);
/// Canonical form: keys sorted, FU kinds in declaration order, 2-space indent.
std::string serialize_design(const DesignPoint &d);

} // namespace malta
