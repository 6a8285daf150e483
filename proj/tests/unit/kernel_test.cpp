#include <doctest.h>

#include <random>

#include "malta/error.hpp"
#include "malta/kernel.hpp"
#include "../support/oracles.hpp"

using namespace malta;

namespace {

KernelGraph make(std::vector<std::pair<FuKind, int>> nodes, std::vector<DfgEdge> edges,
                 int trip) {
  KernelGraph k;
  k.name = "t";
  k.trip_count = trip;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    k.nodes.push_back({static_cast<int>(i), nodes[i].first, nodes[i].second,
                       static_cast<int>(i), 0, 1});
  k.edges = std::move(edges);
  return k;
}

KernelGraph mac_accumulate(int trip) {
  return make({{FuKind::Mac, 2}}, {{0, 0, 1}}, trip);
}

ErrorCode code_of(auto &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

std::vector<DfgEdge> sorted_edges(const KernelGraph &k) {
  auto e = k.edges;
  std::sort(e.begin(), e.end());
  return e;
}

} // namespace

TEST_CASE("kernel invariants") {
  CHECK(kernel_problems(mac_accumulate(4)).empty());
  CHECK_FALSE(kernel_problems(make({{FuKind::Add, 1}}, {{0, 0, 0}}, 4)).empty());
  CHECK_FALSE(kernel_problems(make({{FuKind::Add, 1}, {FuKind::Add, 1}},
                                   {{0, 1, 0}, {1, 0, 0}}, 4))
                  .empty());
  // Carried values must land on a PHI or MAC.
  CHECK_FALSE(kernel_problems(make({{FuKind::Add, 1}}, {{0, 0, 1}}, 4)).empty());
  CHECK_FALSE(kernel_problems(make({{FuKind::Add, 9}}, {}, 4)).empty());
  CHECK_FALSE(kernel_problems(make({{FuKind::Add, 1}}, {{0, 3, 0}}, 4)).empty());
}

TEST_CASE("unroll") {
  SUBCASE("factor 1 is the identity") {
    const auto k = load_kernel("fir");
    CHECK(unroll(k, 1) == k);
  }
  SUBCASE("a two node chain duplicates") {
    const auto k = make({{FuKind::Load, 2}, {FuKind::Add, 1}}, {{0, 1, 0}}, 8);
    const auto u = unroll(k, 2);
    CHECK(u.nodes.size() == 4);
    CHECK(u.trip_count == 4);
    CHECK(sorted_edges(u) == std::vector<DfgEdge>{{0, 1, 0}, {2, 3, 0}});
  }
  SUBCASE("a carried MAC becomes a chain closed by one carried edge") {
    const auto u = unroll(mac_accumulate(6), 3);
    CHECK(u.trip_count == 2);
    CHECK(sorted_edges(u) == std::vector<DfgEdge>{{0, 1, 0}, {1, 2, 0}, {2, 0, 1}});
    CHECK(oracle::dependence_pairs(u) == oracle::dependence_pairs(mac_accumulate(6)));
  }
  SUBCASE("non-divisible factor") {
    CHECK(code_of([] { unroll(mac_accumulate(7), 2); }) == ErrorCode::NonDivisibleFactor);
  }
  SUBCASE("work is preserved") {
    for (const auto &name : builtin_kernel_names()) {
      const auto k = load_kernel(name);
      for (int f : {1, 2, 3, 4}) {
        if (k.trip_count % f)
          continue;
        const auto u = unroll(k, f);
        CHECK(u.nodes.size() * u.trip_count == k.nodes.size() * k.trip_count);
        CHECK(kernel_problems(u).empty());
      }
    }
  }
}

TEST_CASE("vectorize") {
  SUBCASE("factor 1 is the identity") {
    const auto k = load_kernel("relu");
    CHECK(vectorize(k, 1) == k);
  }
  SUBCASE("dependence-free kernel") {
    const auto k = make({{FuKind::Load, 2}, {FuKind::Cmp, 1}, {FuKind::Store, 1}},
                        {{0, 1, 0}, {1, 2, 0}}, 8);
    const auto v = vectorize(k, 2);
    CHECK(v.trip_count == 4);
    CHECK(v.lanes == 2);
    for (const auto &n : v.nodes) {
      CHECK(n.lanes == 2);
      CHECK(n.latency == k.node(n.id).latency);
    }
  }
  SUBCASE("a distance-1 accumulation blocks vectorization") {
    CHECK(code_of([] { vectorize(mac_accumulate(8), 2); }) ==
          ErrorCode::CarriedDepBlocksVectorization);
  }
  SUBCASE("unrolling first makes the distance a lane multiple") {
    // Unrolling by 2 leaves a distance-1 edge, still blocking 2 lanes.
    CHECK(code_of([] { vectorize(unroll(mac_accumulate(8), 2), 2); }) ==
          ErrorCode::CarriedDepBlocksVectorization);
    const auto k = make({{FuKind::Mac, 2}}, {{0, 0, 2}}, 8);
    const auto v = vectorize(k, 2);
    CHECK(v.edges.front().distance == 1);
    CHECK(oracle::dependence_pairs(v) == oracle::dependence_pairs(k));
  }
  SUBCASE("unrolling a vectorized kernel is rejected") {
    const auto v = vectorize(load_kernel("relu"), 2);
    CHECK(code_of([&] { unroll(v, 2); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("transforms preserve dependence pairs on random small kernels") {
  std::mt19937_64 rng(21);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    KernelGraph k = oracle::random_kernel(rng, 5);
    REQUIRE(kernel_problems(k).empty());
    const auto expected = oracle::dependence_pairs(k);
    for (int u : {1, 2, 3, 4, 6}) {
      for (int v : {1, 2, 3, 4}) {
        if (k.trip_count % (u * v))
          continue;
        try {
          const auto t = apply_sw(k, {u, v});
          CHECK(kernel_problems(t).empty());
          CHECK(oracle::dependence_pairs(t) == expected);
          ++checked;
        } catch (const Error &e) {
          CHECK(e.code() == ErrorCode::CarriedDepBlocksVectorization);
        }
      }
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("built-in corpus") {
  const auto names = builtin_kernel_names();
  for (const char *required : {"fir", "fft", "latnrm", "spmv", "conv", "relu", "mvt", "gemm"})
    CHECK(std::find(names.begin(), names.end(), required) != names.end());
  for (const auto &name : names) {
    const auto k = load_kernel(name);
    CHECK(k.name == name);
    CHECK(kernel_problems(k).empty());
  }

  const auto relu = load_kernel("relu");
  const auto census = op_census(relu);
  CHECK(census.count(FuKind::Load));
  CHECK(census.count(FuKind::Cmp));
  CHECK(census.count(FuKind::Store));
  CHECK_FALSE(has_carried_edges(relu));

  const auto gemm = load_kernel("gemm");
  bool mac_self_loop = false;
  for (const auto &e : gemm.edges)
    mac_self_loop |= e.src == e.dst && e.distance == 1 && gemm.node(e.src).kind == FuKind::Mac;
  CHECK(mac_self_loop);

  CHECK(code_of([] { load_kernel("nosuch"); }) == ErrorCode::UnknownKernel);
}

TEST_CASE("kernel files round-trip") {
  for (const auto &name : builtin_kernel_names()) {
    const auto k = load_kernel(name);
    CHECK(parse_kernel(kernel_to_json(k).dump()) == k);
  }
}
