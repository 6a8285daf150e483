#include "corpus.hpp"

#include <array>

#include "malta/agents.hpp"

namespace malta::corpus {

DesignPoint baseline_design(const KernelGraph &k, std::string id) {
  DesignPoint d;
  d.id = std::move(id);
  d.fabric.rows = 3;
  d.fabric.cols = 3;
  d.fabric.fu_kinds = required_kinds(k);
  d.fabric.fu_kinds.insert(FuKind::Load);
  d.fabric.fu_kinds.insert(FuKind::Store);
  d.fabric.config_mem_depth = 16;
  d.fabric.topology = Topology::KingMesh;
  return d;
}

std::vector<Candidate> mapped_set(std::mt19937_64 &rng, const KernelGraph &k, int n,
                                  const std::string &prefix) {
  std::vector<Candidate> out;
  std::uniform_int_distribution<int> dim(2, 5), depth(2, 16), topo(0, 2), vec(1, 2), extra(0, 3);
  std::uniform_int_distribution<std::size_t> kind(0, kFuKindCount - 1);
  int i = 0;
  while (static_cast<int>(out.size()) < n) {
    DesignPoint d;
    d.id = prefix + std::to_string(i++);
    d.fabric.rows = dim(rng);
    d.fabric.cols = dim(rng);
    d.fabric.fu_kinds = required_kinds(k);
    d.fabric.fu_kinds.insert(FuKind::Load);
    d.fabric.fu_kinds.insert(FuKind::Store);
    for (int e = extra(rng); e > 0; --e)
      d.fabric.fu_kinds.insert(kAllFuKinds[kind(rng)]);
    d.fabric.config_mem_depth = depth(rng);
    d.fabric.topology = static_cast<Topology>(topo(rng));
    d.sw.vectorize_factor = vec(rng);
    auto r = check_design(d, k, {});
    if (r.mapping)
      out.push_back({d, *r.mapping});
  }
  return out;
}

namespace {

int non_divisor(int trip) {
  for (int f = 3; f <= bounds::kMaxUnroll; ++f)
    if (trip % f)
      return f;
  return 0;
}

bool has_distance_one(const KernelGraph &k) {
  for (const auto &e : k.edges)
    if (e.distance == 1)
      return true;
  return false;
}

} // namespace

std::vector<FaultCase> fault_corpus(std::uint64_t seed, int n) {
  static const std::array<const char *, 6> kernels = {"fir", "gemm", "spmv", "fft", "relu", "conv"};
  static const std::array<const char *, 10> faults = {
      "rows_zero",     "cols_over",   "depth_zero", "fu_empty",     "drop_kind",
      "one_tile",      "depth_one",   "bad_unroll", "unroll_over",  "blocked_vectorize"};
  std::mt19937_64 rng(seed);
  std::vector<FaultCase> out;
  for (std::size_t i = 0; static_cast<int>(out.size()) < n; ++i) {
    const std::string fault = faults[i % faults.size()];
    KernelGraph k = load_kernel(kernels[rng() % kernels.size()]);
    // Two faults need a kernel that can carry them.
    for (int tries = 0; tries < 32; ++tries) {
      if ((fault != "bad_unroll" || non_divisor(k.trip_count)) &&
          (fault != "blocked_vectorize" || has_distance_one(k)))
        break;
      k = load_kernel(kernels[rng() % kernels.size()]);
    }
    DesignPoint d = baseline_design(k, "f" + std::to_string(out.size()));
    auto &f = d.fabric;
    if (fault == "rows_zero") {
      f.rows = 0;
    } else if (fault == "cols_over") {
      f.cols = bounds::kMaxGridDim + 1 + static_cast<int>(rng() % 4);
    } else if (fault == "depth_zero") {
      f.config_mem_depth = 0;
    } else if (fault == "fu_empty") {
      f.fu_kinds = FuSet{};
    } else if (fault == "drop_kind") {
      auto kinds = required_kinds(k).kinds();
      f.fu_kinds.erase(kinds[rng() % kinds.size()]);
    } else if (fault == "one_tile") {
      f.rows = f.cols = 1;
    } else if (fault == "depth_one") {
      f.config_mem_depth = 1;
    } else if (fault == "bad_unroll") {
      const int u = non_divisor(k.trip_count);
      if (!u)
        continue;
      d.sw.unroll_factor = u;
    } else if (fault == "unroll_over") {
      d.sw.unroll_factor = bounds::kMaxUnroll + 1;
    } else if (fault == "blocked_vectorize") {
      if (!has_distance_one(k))
        continue;
      d.sw.vectorize_factor = 2;
    }
    out.push_back({k.name, fault, d});
  }
  return out;
}

} // namespace malta::corpus
