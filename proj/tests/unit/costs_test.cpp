#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "malta/costs.hpp"
#include "malta/data.hpp"
#include "malta/error.hpp"
#include "../support/oracles.hpp"

using namespace malta;

namespace {

const CostCoeffs &coeffs() {
  static const CostCoeffs c = load_cost_coeffs(default_cost_coeffs_path());
  return c;
}

MappingResult fake_mapping(int nodes, int ii) {
  MappingResult m;
  m.ii = ii;
  m.schedule_len = ii + 3;
  m.placements.resize(static_cast<std::size_t>(nodes));
  return m;
}

// Straight re-reading of the documented formulas from the raw JSON file.
Ppa recompute(const DesignPoint &d, int nodes, int ii) {
  const auto j = nlohmann::json::parse(std::ifstream(default_cost_coeffs_path()));
  const double v = d.sw.vectorize_factor;
  const double la = 1 + j["vector_lane"]["area_factor"].get<double>() * (v - 1);
  const double lp = 1 + j["vector_lane"]["power_factor"].get<double>() * (v - 1);
  double ta = j["tile"]["area_kum2"].get<double>() +
              d.fabric.config_mem_depth * j["config_context"]["area_kum2"].get<double>();
  double tp = j["tile"]["power_mw"].get<double>() +
              d.fabric.config_mem_depth * j["config_context"]["power_mw"].get<double>();
  for (FuKind k : d.fabric.fu_kinds.kinds()) {
    ta += j["fu"][std::string(to_string(k))]["area_kum2"].get<double>() * la;
    tp += j["fu"][std::string(to_string(k))]["power_mw"].get<double>() * lp;
  }
  const double w = j["wiring"][std::string(to_string(d.fabric.topology))].get<double>();
  const double tiles = d.fabric.rows * d.fabric.cols;
  return {w * tiles * tp + j["activity_power_mw"].get<double>() * nodes / ii * lp,
          w * tiles * ta + d.fabric.data_mem_kb * j["data_mem_area_kum2_per_kb"].get<double>()};
}

EvalReport report(std::string id, double score) {
  EvalReport r;
  r.design_id = std::move(id);
  r.score = score;
  return r;
}

} // namespace

TEST_CASE("default coefficients load and satisfy their invariants") {
  const auto &c = coeffs();
  CHECK(c.wiring_of(Topology::Mesh) < c.wiring_of(Topology::KingMesh));
  CHECK(c.wiring_of(Topology::KingMesh) < c.wiring_of(Topology::Crossbar));
  CHECK_NOTHROW(validate_cost_coeffs(c));
  CHECK(cost_coeffs_from_json(cost_coeffs_to_json(c)).tile.area_kum2 == c.tile.area_kum2);

  auto bad = cost_coeffs_to_json(c);
  bad["wiring"]["CROSSBAR"] = 1.0;
  CHECK_THROWS_AS(cost_coeffs_from_json(bad), Error);
  bad = cost_coeffs_to_json(c);
  bad["fu"]["MUL"]["power_mw"] = 0.0;
  CHECK_THROWS_AS(cost_coeffs_from_json(bad), Error);
  bad = cost_coeffs_to_json(c);
  bad["fu"].erase("DIV");
  CHECK_THROWS_AS(cost_coeffs_from_json(bad), Error);
}

TEST_CASE("estimate_ppa matches an independent evaluation of the formulas") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> nodes(1, 40), ii(1, 12);
  for (int i = 0; i < 300; ++i) {
    const auto d = oracle::random_valid_design(rng);
    const int n = nodes(rng), q = ii(rng);
    const Ppa got = estimate_ppa(d, fake_mapping(n, q), coeffs());
    const Ppa want = recompute(d, n, q);
    CHECK(got.power_mw == doctest::Approx(want.power_mw).epsilon(1e-12));
    CHECK(got.area_kum2 == doctest::Approx(want.area_kum2).epsilon(1e-12));
  }
}

TEST_CASE("ppa orderings") {
  DesignPoint d;
  d.fabric = {3, 3, {FuKind::Add, FuKind::Load, FuKind::Store}, 4, 0, Topology::Mesh};
  const auto m = fake_mapping(6, 2);
  const Ppa base = estimate_ppa(d, m, coeffs());

  auto rows = d;
  rows.fabric.rows = 6;
  CHECK(estimate_ppa(rows, m, coeffs()).area_kum2 > base.area_kum2);

  auto xbar = d;
  xbar.fabric.topology = Topology::Crossbar;
  CHECK(estimate_ppa(xbar, m, coeffs()).power_mw > base.power_mw);

  // Activity term: a busier schedule burns more.
  CHECK(estimate_ppa(d, fake_mapping(6, 1), coeffs()).power_mw > base.power_mw);
}

TEST_CASE("objective scores") {
  Objective minp;
  CHECK(objective_score(minp, 2.0, 3.0) == 3.0);
  CHECK(objective_score(minp, 1.2, 3.0) == doctest::Approx(kInfeasiblePenalty + 0.3));
  Objective pe{ObjectiveMode::MaxPowerEfficiency, 1.5};
  CHECK(objective_score(pe, 2.0, 4.0) == -0.5);
  CHECK(parse_objective_mode("min-power") == ObjectiveMode::MinPower);
  CHECK(parse_objective_mode("MAX_POWER_EFFICIENCY") == ObjectiveMode::MaxPowerEfficiency);
  CHECK_THROWS_AS(parse_objective_mode("fastest"), Error);
}

TEST_CASE("tool_evaluate and tool_select") {
  const auto gemm = load_kernel("gemm");
  DesignPoint d;
  d.id = "a";
  d.fabric = {2, 2, {FuKind::Load, FuKind::Mac, FuKind::Store}, 8, 0, Topology::Mesh};
  auto mapped = map_kernel(gemm, d.fabric);
  REQUIRE(std::holds_alternative<MappingResult>(mapped));
  Candidate c{d, std::get<MappingResult>(mapped)};

  SUBCASE("single candidate") {
    const auto reports = tool_evaluate(std::span(&c, 1), gemm, {}, coeffs());
    REQUIRE(reports.size() == 1);
    CHECK(tool_select(reports).choice == "a");
    CHECK(reports[0].power_efficiency == reports[0].speedup / reports[0].power_mw);
  }
  SUBCASE("unmapped candidates are rejected") {
    Candidate bare{d, std::nullopt};
    try {
      tool_evaluate(std::span(&bare, 1), gemm, {}, coeffs());
      FAIL("expected EVAL_ON_UNMAPPED");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::EvalOnUnmapped);
    }
  }
  SUBCASE("infeasible loses at equal power") {
    EvalReport fast = report("x", objective_score({}, 2.0, 1.0));
    EvalReport slow = report("y", objective_score({}, 1.2, 1.0));
    const std::vector<EvalReport> rs{slow, fast};
    CHECK(tool_select(rs).choice == "x");
  }
  SUBCASE("argmin, ties and empties") {
    const std::vector<EvalReport> rs{report("p", 3.1), report("q", 2.4), report("r", 5.0)};
    const Pick p = tool_select(rs);
    CHECK(p.choice == "q");
    CHECK(p.score == 2.4);
    const std::vector<EvalReport> tie{report("b", 2.0), report("a", 2.0)};
    CHECK(tool_select(tie).choice == "a");
    CHECK_THROWS_AS(tool_select(std::span<const EvalReport>{}), Error);
  }
  SUBCASE("reports are reproducible") {
    const auto a = tool_evaluate(std::span(&c, 1), gemm, {}, coeffs());
    const auto b = tool_evaluate(std::span(&c, 1), gemm, {}, coeffs());
    CHECK(report_to_json(a[0]).dump() == report_to_json(b[0]).dump());
    CHECK(report_from_json(report_to_json(a[0])) == a[0]);
  }
}

TEST_CASE("tool_select is invariant under positive rescaling") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> score(-5, 5), scale(0.01, 100);
  for (int i = 0; i < 500; ++i) {
    std::vector<EvalReport> rs;
    for (int k = 0; k < 6; ++k)
      rs.push_back(report("d" + std::to_string(k), std::round(score(rng) * 4) / 4));
    const auto before = tool_select(rs).choice;
    const double s = scale(rng);
    for (auto &r : rs)
      r.score *= s;
    CHECK(tool_select(rs).choice == before);
  }
}

TEST_CASE("frozen regression values for the reference spmv design") {
  const auto d = design_from_json(
      nlohmann::json::parse(std::ifstream(data_dir() / "designs" / "spmv_reference.json")), "spmv");
  SUBCASE("spmv with its own transforms") {
    const auto k = load_kernel("spmv");
    const auto out = map_kernel(apply_sw(k, d.sw), d.fabric);
    REQUIRE(std::holds_alternative<MappingResult>(out));
    const auto &m = std::get<MappingResult>(out);
    CHECK(m.ii == 3);
    CHECK(m.schedule_len == 9);
    const auto r = evaluate_design({d, m}, k, {}, coeffs());
    CHECK(r.speedup == doctest::Approx(22.588235294117649).epsilon(1e-12));
    CHECK(r.power_mw == doctest::Approx(2.671592).epsilon(1e-12));
    CHECK(r.area_kum2 == doctest::Approx(50.03712).epsilon(1e-12));
  }
  SUBCASE("relu on the same fabric, untransformed") {
    const auto k = load_kernel("relu");
    const auto out = map_kernel(k, d.fabric);
    REQUIRE(std::holds_alternative<MappingResult>(out));
    const auto &m = std::get<MappingResult>(out);
    CHECK(m.ii == 1);
    CHECK(speedup(k, m, k.trip_count) == doctest::Approx(4.8669201520912546).epsilon(1e-12));
  }
}
