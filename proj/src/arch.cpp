//===-- arch.cpp - CGRA fabric design space ------------------------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//

#include "malta/arch.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <deque>

#include "json_util.hpp"
#include "malta/error.hpp"

namespace malta {

namespace {

constexpr std::array<std::string_view, kFuKindCount> kFuKindNames = {
    "ADD", "SUB", "MUL", "MAC", "DIV", "SHIFT",
    "LOGIC", "CMP", "PHI", "LOAD", "STORE", "RET"};

constexpr std::array<std::string_view, 3> kTopologyNames = {"MESH", "KINGMESH",
                                                            "CROSSBAR"};

std::string upper(std::string_view s) {
  std::string out(s);
  for (char &c : out)
    c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

constexpr std::string_view kArchFile = "architecture file";

} // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::Syntax: return "SYNTAX";
  case ErrorCode::UnknownField: return "UNKNOWN_FIELD";
  case ErrorCode::MissingField: return "MISSING_FIELD";
  case ErrorCode::TypeMismatch: return "TYPE_MISMATCH";
  case ErrorCode::UnknownEnum: return "UNKNOWN_ENUM";
  case ErrorCode::OutOfGrid: return "OUT_OF_GRID";
  case ErrorCode::NonDivisibleFactor: return "NON_DIVISIBLE_FACTOR";
  case ErrorCode::CarriedDepBlocksVectorization:
    return "CARRIED_DEP_BLOCKS_VECTORIZATION";
  case ErrorCode::InvalidKernel: return "INVALID_KERNEL";
  case ErrorCode::UnknownKernel: return "UNKNOWN_KERNEL";
  case ErrorCode::EvalOnUnmapped: return "EVAL_ON_UNMAPPED";
  case ErrorCode::EmptyCandidateSet: return "EMPTY_CANDIDATE_SET";
  case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
  case ErrorCode::Config: return "CONFIG";
  case ErrorCode::SchemaVersion: return "SCHEMA_VERSION";
  case ErrorCode::Io: return "IO";
  case ErrorCode::Transport: return "TRANSPORT";
  }
  return "UNKNOWN";
}

std::string_view to_string(FuKind kind) {
  return kFuKindNames[static_cast<std::size_t>(kind)];
}

FuKind parse_fu_kind(std::string_view token) {
  const std::string u = upper(token);
  for (std::size_t i = 0; i < kFuKindNames.size(); ++i)
    if (kFuKindNames[i] == u)
      return static_cast<FuKind>(i);
  throw Error(ErrorCode::UnknownEnum,
              "unknown functional-unit kind '" + std::string(token) + "'");
}

std::size_t FuSet::size() const { return std::popcount(bits_); }

std::vector<FuKind> FuSet::kinds() const {
  std::vector<FuKind> out;
  for (FuKind k : kAllFuKinds)
    if (contains(k))
      out.push_back(k);
  return out;
}

std::string_view to_string(Topology topology) {
  return kTopologyNames[static_cast<std::size_t>(topology)];
}

Topology parse_topology(std::string_view token) {
  const std::string u = upper(token);
  for (std::size_t i = 0; i < kTopologyNames.size(); ++i)
    if (kTopologyNames[i] == u)
      return static_cast<Topology>(i);
  throw Error(ErrorCode::UnknownEnum,
              "unknown topology '" + std::string(token) + "'");
}

std::string_view to_string(Provenance p) {
  return p == Provenance::Proposed ? "PROPOSED" : "REPAIRED";
}

std::string_view to_string(ViolationCode code) {
  switch (code) {
  case ViolationCode::RowsRange: return "ROWS_RANGE";
  case ViolationCode::ColsRange: return "COLS_RANGE";
  case ViolationCode::FuKindsEmpty: return "FU_KINDS_EMPTY";
  case ViolationCode::MissingLoadStore: return "MISSING_LOADSTORE";
  case ViolationCode::ConfigDepthRange: return "CONFIG_DEPTH_RANGE";
  case ViolationCode::DataMemRange: return "DATA_MEM_RANGE";
  case ViolationCode::UnrollRange: return "UNROLL_RANGE";
  case ViolationCode::VectorizeRange: return "VECTORIZE_RANGE";
  }
  return "UNKNOWN";
}

std::vector<StructuralViolation> validate_design(const DesignPoint &d) {
  std::vector<StructuralViolation> out;
  const FabricSpec &f = d.fabric;
  auto add = [&](ViolationCode code, std::string field, std::string msg) {
    out.push_back({code, std::move(field), std::move(msg)});
  };
  auto range = [](int lo, int hi) {
    return "[" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
  };

  if (f.rows < 1 || f.rows > bounds::kMaxGridDim)
    add(ViolationCode::RowsRange, "rows",
        "rows = " + std::to_string(f.rows) + " outside " +
            range(1, bounds::kMaxGridDim));
  if (f.cols < 1 || f.cols > bounds::kMaxGridDim)
    add(ViolationCode::ColsRange, "cols",
        "cols = " + std::to_string(f.cols) + " outside " +
            range(1, bounds::kMaxGridDim));
  if (f.fu_kinds.empty())
    add(ViolationCode::FuKindsEmpty, "fu_kinds",
        "tiles must carry at least one functional-unit kind");
  if (f.data_mem_kb > 0 && !(f.fu_kinds.contains(FuKind::Load) &&
                             f.fu_kinds.contains(FuKind::Store)))
    add(ViolationCode::MissingLoadStore, "fu_kinds",
        "data memory of " + std::to_string(f.data_mem_kb) +
            " KiB requires LOAD and STORE units");
  if (f.config_mem_depth < 1)
    add(ViolationCode::ConfigDepthRange, "config_mem_depth",
        "config_mem_depth = " + std::to_string(f.config_mem_depth) +
            " must be >= 1");
  if (f.data_mem_kb < 0)
    add(ViolationCode::DataMemRange, "data_mem_kb",
        "data_mem_kb = " + std::to_string(f.data_mem_kb) + " must be >= 0");
  if (d.sw.unroll_factor < 1 || d.sw.unroll_factor > bounds::kMaxUnroll)
    add(ViolationCode::UnrollRange, "unroll_factor",
        "unroll_factor = " + std::to_string(d.sw.unroll_factor) + " outside " +
            range(1, bounds::kMaxUnroll));
  if (d.sw.vectorize_factor < 1 ||
      d.sw.vectorize_factor > bounds::kMaxVectorize)
    add(ViolationCode::VectorizeRange, "vectorize_factor",
        "vectorize_factor = " + std::to_string(d.sw.vectorize_factor) +
            " outside " + range(1, bounds::kMaxVectorize));

  std::stable_sort(out.begin(), out.end(),
                   [](const StructuralViolation &a,
                      const StructuralViolation &b) { return a.field < b.field; });
  return out;
}

std::vector<Coord> neighbors(const FabricSpec &f, Coord tile) {
  if (!f.contains(tile))
    throw Error(ErrorCode::OutOfGrid,
                "tile (" + std::to_string(tile.row) + "," +
                    std::to_string(tile.col) + ") outside " +
                    std::to_string(f.rows) + "x" + std::to_string(f.cols) +
                    " grid");
  std::vector<Coord> out;
  for (int r = 0; r < f.rows; ++r) {
    for (int c = 0; c < f.cols; ++c) {
      if (r == tile.row && c == tile.col)
        continue;
      const int dr = std::abs(r - tile.row);
      const int dc = std::abs(c - tile.col);
      bool linked = false;
      switch (f.topology) {
      case Topology::Mesh: linked = dr + dc == 1; break;
      case Topology::KingMesh: linked = dr <= 1 && dc <= 1; break;
      case Topology::Crossbar: linked = true; break;
      }
      if (linked)
        out.push_back({r, c});
    }
  }
  return out;
}

std::vector<Coord> shortest_route(const FabricSpec &f, Coord from, Coord to) {
  if (!f.contains(from) || !f.contains(to))
    throw Error(ErrorCode::OutOfGrid, "route endpoint outside the grid");
  if (from == to)
    return {from};
  std::vector<int> parent(static_cast<std::size_t>(f.tile_count()), -1);
  std::vector<bool> seen(parent.size(), false);
  std::deque<int> queue{f.index_of(from)};
  seen[f.index_of(from)] = true;
  const int target = f.index_of(to);
  while (!queue.empty() && !seen[target]) {
    const int cur = queue.front();
    queue.pop_front();
    for (Coord n : neighbors(f, f.coord_of(cur))) {
      const int ni = f.index_of(n);
      if (seen[ni])
        continue;
      seen[ni] = true;
      parent[ni] = cur;
      queue.push_back(ni);
    }
  }
  std::vector<Coord> path;
  for (int cur = target; cur != -1; cur = parent[cur])
    path.push_back(f.coord_of(cur));
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<std::vector<int>> hop_matrix(const FabricSpec &f) {
  const int n = f.tile_count();
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i)
    for (Coord c : neighbors(f, f.coord_of(i)))
      adj[i].push_back(f.index_of(c));
  for (int s = 0; s < n; ++s) {
    std::deque<int> queue{s};
    dist[s][s] = 0;
    while (!queue.empty()) {
      const int cur = queue.front();
      queue.pop_front();
      for (int nb : adj[cur]) {
        if (dist[s][nb] >= 0)
          continue;
        dist[s][nb] = dist[s][cur] + 1;
        queue.push_back(nb);
      }
    }
  }
  return dist;
}

DesignPoint design_from_json(const nlohmann::json &j, std::string id) {
  using namespace detail;
  reject_unknown_keys(j,
                      {"rows", "cols", "fu_kinds", "config_mem_depth",
                       "data_mem_kb", "topology", "unroll_factor",
                       "vectorize_factor"},
                      kArchFile);
  auto int_field = [&](std::string_view key) {
    return static_cast<int>(get_integer(require(j, key, kArchFile), key, kArchFile));
  };

  DesignPoint d;
  d.id = std::move(id);
  d.fabric.rows = int_field("rows");
  d.fabric.cols = int_field("cols");
  d.fabric.config_mem_depth = int_field("config_mem_depth");
  d.fabric.data_mem_kb = j.contains("data_mem_kb") ? int_field("data_mem_kb") : 0;
  d.fabric.topology = parse_topology(
      get_string(require(j, "topology", kArchFile), "topology", kArchFile));
  const auto &kinds = require(j, "fu_kinds", kArchFile);
  if (!kinds.is_array())
    throw Error(ErrorCode::TypeMismatch,
                "architecture file: field 'fu_kinds' must be an array");
  for (const auto &k : kinds)
    d.fabric.fu_kinds.insert(
        parse_fu_kind(get_string(k, "fu_kinds", kArchFile)));
  d.sw.unroll_factor = int_field("unroll_factor");
  d.sw.vectorize_factor = int_field("vectorize_factor");
  return d;
}

DesignPoint parse_design(std::string_view text, std::string id) {
  return design_from_json(detail::parse_json_text(text, kArchFile), std::move(id));
}

nlohmann::json design_to_json(const DesignPoint &d) {
  nlohmann::json kinds = nlohmann::json::array();
  for (FuKind k : d.fabric.fu_kinds.kinds())
    kinds.push_back(std::string(to_string(k)));
  // nlohmann::json objects are std::map backed, so keys come out sorted.
  return nlohmann::json{
      {"rows", d.fabric.rows},
      {"cols", d.fabric.cols},
      {"fu_kinds", std::move(kinds)},
      {"config_mem_depth", d.fabric.config_mem_depth},
      {"data_mem_kb", d.fabric.data_mem_kb},
      {"topology", std::string(to_string(d.fabric.topology))},
      {"unroll_factor", d.sw.unroll_factor},
      {"vectorize_factor", d.sw.vectorize_factor},
  };
}

std::string serialize_design(const DesignPoint &d) {
  return design_to_json(d).dump(2) + "\n";
}

} // namespace malta
