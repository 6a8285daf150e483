// Reference implementations used only by tests. Each one is written from the
// definitions rather than from the production code, so agreement between the
// two is evidence rather than tautology.
#pragma once

#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "malta/arch.hpp"
#include "malta/kernel.hpp"

namespace malta::oracle {

/// Smallest II in [1, max_ii] admitting any modulo schedule (tile, slot,
/// start) that satisfies resource, FU and dependence constraints, with one
/// cycle charged per routing hop. Ignores config_mem_depth. 0 when none.
/// Exhaustive over (tile, slot) assignments.
int brute_force_min_ii(const KernelGraph &k, const FabricSpec &f, int max_ii);

/// (producer origin, producer iteration, consumer origin, consumer iteration)
using DepPair = std::tuple<int, long long, int, long long>;

/// Every dependence instance of `k` expressed in the iteration space of the
/// untransformed kernel it was derived from.
std::set<DepPair> dependence_pairs(const KernelGraph &k);

/// Random valid kernel with at most `max_nodes` nodes. Carried edges only
/// target PHI/MAC nodes.
KernelGraph random_kernel(std::mt19937_64 &rng, int max_nodes);

/// Random design inside all documented bounds.
DesignPoint random_valid_design(std::mt19937_64 &rng);

} // namespace malta::oracle
