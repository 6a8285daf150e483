//===-- kernel.hpp - Loop-kernel dataflow graphs and transforms ----*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// A kernel is the dataflow graph of an innermost loop body. Edges carry a
// dependence distance in iterations: distance 0 is an intra-iteration edge,
// distance d >= 1 feeds the consumer d iterations later.
//
// unroll() and vectorize() are the software half of a design point. Nodes
// remember the original node and unroll copy they came from so that the
// iteration space of a transformed kernel can be related to the original.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <compare>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "malta/arch.hpp"

namespace malta {

struct DfgNode {
  int id = 0;
  FuKind kind = FuKind::Add;
  int latency = 1;
  int origin = 0; // id of the node in the untransformed kernel
  int copy = 0;   // unroll copy index, in [0, KernelGraph::unroll_factor)
  int lanes = 1;  // SIMD lanes after vectorization

  friend bool operator==(const DfgNode &, const DfgNode &) = default;
};

struct DfgEdge {
  int src = 0;
  int dst = 0;
  int distance = 0;

  friend auto operator<=>(const DfgEdge &, const DfgEdge &) = default;
};

struct KernelGraph {
  std::string name;
  std::vector<DfgNode> nodes;
  std::vector<DfgEdge> edges;
  int trip_count = 1;
  int unroll_factor = 1; // cumulative unrolling applied
  int lanes = 1;         // vector width applied

  /// Position of node `id` in `nodes`; throws InvalidKernel when absent.
  std::size_t index_of(int id) const;
  const DfgNode &node(int id) const { return nodes[index_of(id)]; }
  /// Sum of node latencies: cycles of one iteration on a single-issue core.
  long long total_latency() const;

  friend bool operator==(const KernelGraph &, const KernelGraph &) = default;
};

inline constexpr int kMaxNodeLatency = 8;

/// Kinds allowed as the target of a loop-carried edge.
bool accepts_carried_value(FuKind kind);

/// Human-readable description of every violated graph invariant.
std::vector<std::string> kernel_problems(const KernelGraph &k);
/// Throws Error(InvalidKernel) listing the first problem.
void validate_kernel(const KernelGraph &k);

std::map<FuKind, int> op_census(const KernelGraph &k);
FuSet required_kinds(const KernelGraph &k);
bool has_carried_edges(const KernelGraph &k);

/// Replicates the loop body `factor` times. A carried edge of distance d
/// from copy i lands in copy (i + d) mod factor with distance
/// floor((i + d) / factor). Throws NonDivisibleFactor when `factor` does not
/// divide the trip count.
KernelGraph unroll(const KernelGraph &k, int factor);

/// Packs `factor` consecutive iterations into SIMD lanes. Legal only when
/// every carried distance is a multiple of `factor` (distance d becomes
/// d / factor); any smaller or misaligned distance throws
/// CarriedDepBlocksVectorization.
KernelGraph vectorize(const KernelGraph &k, int factor);

/// vectorize(unroll(k, sw.unroll_factor), sw.vectorize_factor).
KernelGraph apply_sw(const KernelGraph &k, const SwParams &sw);

// Kernel file (JSON): name, trip_count, nodes [{id, kind, latency}],
// edges [{src, dst, distance}], optional description.
KernelGraph parse_kernel(std::string_view text);
nlohmann::json kernel_to_json(const KernelGraph &k);

/// Built-in kernel by name, or a kernel file by path.
/// Throws Error(UnknownKernel) when neither exists.
KernelGraph load_kernel(std::string_view name_or_path);
std::vector<std::string> builtin_kernel_names();

} // namespace malta
