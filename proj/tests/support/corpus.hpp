// Generators shared by the agent, loop and acceptance tests.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "malta/arch.hpp"
#include "malta/costs.hpp"
#include "malta/kernel.hpp"

namespace malta::corpus {

/// A roomy design that maps `k` untransformed: 3x3 KINGMESH, the kernel's
/// kinds plus LOAD/STORE, depth 16.
DesignPoint baseline_design(const KernelGraph &k, std::string id = "base");

/// `n` mapped candidates with random grids, topologies, depths, extra kinds
/// and vectorize factors. Ids are prefix + running index.
std::vector<Candidate> mapped_set(std::mt19937_64 &rng, const KernelGraph &k, int n,
                                  const std::string &prefix);

struct FaultCase {
  std::string kernel;
  std::string fault; // which field was broken
  DesignPoint design;
};

/// `n` designs, each a baseline design with exactly one injected fault:
/// an out-of-range field, a missing kind, a starved grid or config memory,
/// a non-dividing unroll or a vectorize factor blocked by a carried value.
std::vector<FaultCase> fault_corpus(std::uint64_t seed, int n = 50);

} // namespace malta::corpus
