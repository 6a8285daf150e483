#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <random>

#include "malta/data.hpp"
#include "malta/error.hpp"
#include "malta/select.hpp"

using namespace malta;

namespace {

SelectionScript script_file(const char *name) {
  std::ifstream in(data_dir() / "scripts" / name);
  std::stringstream text;
  text << in.rdbuf();
  return parse_selection_script(text.str());
}

SelectionScript constant(double t, double l, int n, SelectionConfig cfg) {
  SelectionScript s;
  s.config = cfg;
  s.steps.assign(static_cast<std::size_t>(n), ScriptStep{t, l, "a", "a"});
  return s;
}

// Tool and judge driven by a random stream, recording how often each is
// consulted.
struct CountingTool : SelectionTool {
  std::mt19937_64 rng{1};
  int calls = 0;
  std::vector<EvalReport> evaluate(std::span<const Candidate> k) override {
    ++calls;
    std::uniform_real_distribution<double> u(0, 10);
    std::vector<EvalReport> out;
    for (const auto &c : k) {
      EvalReport r;
      r.design_id = c.design.id;
      r.score = u(rng);
      out.push_back(r);
    }
    return out;
  }
};

struct RandomJudge : SelectionJudge {
  std::mt19937_64 rng{2};
  int updates = 0;
  Pick select(std::span<const Candidate> k) override {
    std::uniform_int_distribution<std::size_t> pick(0, k.size() - 1);
    std::uniform_real_distribution<double> u(0, 10);
    return {k[pick(rng)].design.id, u(rng)};
  }
  void update(std::span<const Candidate>, std::span<const EvalReport>) override { ++updates; }
};

std::vector<Candidate> three() {
  std::vector<Candidate> k(3);
  k[0].design.id = "x";
  k[1].design.id = "y";
  k[2].design.id = "z";
  return k;
}

} // namespace

TEST_CASE("single tool step with identical scores") {
  SelectionConfig cfg;
  cfg.alpha = 0.3;
  cfg.sigma = 1.0;
  // Scripts always start from conf 0, so drive select_step directly.
  struct T : SelectionTool {
    double t;
    std::vector<EvalReport> evaluate(std::span<const Candidate> k) override {
      EvalReport r;
      r.design_id = k[0].design.id;
      r.score = t;
      return {r};
    }
  } tool;
  struct J : SelectionJudge {
    double l;
    Pick select(std::span<const Candidate> k) override { return {k[0].design.id, l}; }
    void update(std::span<const Candidate>, std::span<const EvalReport>) override {}
  } judge;
  std::vector<Candidate> k(1);
  k[0].design.id = "only";

  SelectionState st;
  st.conf = 0.5;
  tool.t = 2.0;
  judge.l = 2.0;
  select_step(k, st, cfg, tool, judge);
  CHECK(st.trace.back().similarity == doctest::Approx(1.0));
  CHECK(st.conf == doctest::Approx(0.65).epsilon(1e-12));

  judge.l = 4.0;
  select_step(k, st, cfg, tool, judge);
  // 0.3 * exp(-2) + 0.7 * 0.65
  CHECK(std::fabs(st.conf - 0.4956006) < 1e-6);
  CHECK(st.trace.back().mode == SelectionMode::Tool);
  CHECK(st.iteration == 2);
}

TEST_CASE("confident judge decides alone off the validation grid") {
  SelectionConfig cfg;
  cfg.conf_threshold = 0.8;
  cfg.validation_interval = 5;
  CountingTool tool;
  RandomJudge judge;
  SelectionState st;
  st.conf = 0.9;
  st.iteration = 6;
  const auto k = three();
  const auto out = select_step(k, st, cfg, tool, judge);
  CHECK(st.iteration == 7);
  CHECK(tool.calls == 0);
  CHECK(out.reports.empty());
  CHECK(st.conf == 0.9);
  CHECK(st.trace.back().mode == SelectionMode::Llm);
  CHECK(out.final_choice == st.trace.back().l_choice);
}

TEST_CASE("constant agreement converges as 1 - 0.5^n") {
  const auto trace = simulate_script(script_file("constant_agreement.json"));
  REQUIRE(trace.size() == 20);
  int tool_steps = 0;
  int first_llm = 0;
  for (const auto &e : trace) {
    if (e.mode == SelectionMode::Tool) {
      ++tool_steps;
      CHECK(std::fabs(e.conf - (1 - std::pow(0.5, tool_steps))) < 1e-9);
    } else if (first_llm == 0) {
      first_llm = e.iteration;
    }
  }
  // 1 - 0.5^4 = 0.9375 already clears 0.9, so iteration 5 is the first
  // judge-only step; iteration 10 is a forced validation.
  CHECK(first_llm == 5);
  CHECK(trace[9].mode == SelectionMode::Tool);
}

TEST_CASE("with a validation interval of 5 the first judge-only step is 6") {
  auto script = script_file("constant_agreement.json");
  script.config.validation_interval = 5;
  const auto trace = simulate_script(script);
  for (int i = 0; i < 5; ++i)
    CHECK(trace[i].mode == SelectionMode::Tool);
  CHECK(trace[4].conf == doctest::Approx(0.96875).epsilon(1e-12));
  CHECK(trace[5].mode == SelectionMode::Llm);
}

TEST_CASE("threshold zero leaves only the forced validations") {
  const auto trace = simulate_script(script_file("interval_forcing.json"));
  for (const auto &e : trace)
    CHECK((e.mode == SelectionMode::Tool) == (e.iteration % 5 == 0));
}

TEST_CASE("a judge that is always far off never earns trust") {
  const auto trace = simulate_script(script_file("persistent_disagreement.json"));
  REQUIRE(trace.size() == 100);
  for (const auto &e : trace) {
    CHECK(e.mode == SelectionMode::Tool);
    CHECK(e.conf < 0.5);
    CHECK(e.final_choice == "a");
    CHECK(e.l_choice == "b");
  }
}

TEST_CASE("selection invariants over random streams") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0, 1);
  std::uniform_int_distribution<int> interval(1, 7);
  for (int run = 0; run < 200; ++run) {
    SelectionConfig cfg;
    cfg.conf_threshold = unit(rng);
    cfg.alpha = std::max(1e-3, unit(rng));
    cfg.validation_interval = interval(rng);
    if (run % 2)
      cfg.sigma = 0.5 + unit(rng);
    CountingTool tool;
    RandomJudge judge;
    const auto trace = run_selection([](int) { return three(); }, cfg, tool, judge, 40);
    REQUIRE(trace.size() == 40);
    double conf = 0;
    int tool_steps = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const auto &e = trace[i];
      CHECK(e.iteration == static_cast<int>(i) + 1);
      CHECK(e.conf >= 0);
      CHECK(e.conf <= 1);
      const bool tool_mode = conf < cfg.conf_threshold || e.iteration % cfg.validation_interval == 0;
      CHECK((e.mode == SelectionMode::Tool) == tool_mode);
      if (e.iteration % cfg.validation_interval == 0)
        CHECK(e.mode == SelectionMode::Tool);
      if (tool_mode) {
        ++tool_steps;
        CHECK(e.final_choice == *e.t_choice);
      } else {
        CHECK(e.conf == conf);
      }
      conf = e.conf;
    }
    CHECK(tool.calls == tool_steps);
    CHECK(judge.updates == tool_steps);
  }
}

TEST_CASE("constant similarity converges geometrically") {
  for (double alpha : {0.1, 0.3, 0.7}) {
    SelectionConfig cfg;
    cfg.alpha = alpha;
    cfg.sigma = 1.0;
    cfg.conf_threshold = 1.0; // always tool
    const auto trace = simulate_script(constant(1.0, 1.5, 60, cfg));
    const double s = std::exp(-0.5);
    for (const auto &e : trace) {
      const double expected = s * (1 - std::pow(1 - alpha, e.iteration));
      CHECK(std::fabs(e.conf - expected) < 1e-9);
    }
  }
}

TEST_CASE("relative sigma default") {
  SelectionConfig cfg;
  CHECK(cfg.sigma_for(10.0) == doctest::Approx(2.0));
  CHECK(cfg.sigma_for(-10.0) == doctest::Approx(2.0));
  CHECK(cfg.sigma_for(0.0) == 1e-6);
}

TEST_CASE("scripts and configs are validated") {
  CHECK_THROWS_AS(parse_selection_script(R"({"steps": []})"), Error);
  CHECK_THROWS_AS(parse_selection_script(R"({"steps": [{"t_score": 1}]})"), Error);
  CHECK_THROWS_AS(parse_selection_script(R"({"config": {"alpha": 0}, "steps": [{"t_score": 1, "l_score": 1}]})"), Error);
  CHECK_THROWS_AS(parse_selection_script(R"({"steps": [)"), Error);
  CHECK_NOTHROW(parse_selection_script(R"({"steps": [{"t_score": 1, "l_score": 1}]})"));

  CountingTool tool;
  RandomJudge judge;
  SelectionState st;
  try {
    select_step({}, st, {}, tool, judge);
    FAIL("expected EMPTY_CANDIDATE_SET");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::EmptyCandidateSet);
  }
}

TEST_CASE("trace entries round-trip through JSON") {
  const auto trace = simulate_script(script_file("persistent_disagreement.json"));
  const auto text = trace_to_jsonl(trace);
  std::size_t lines = 0;
  for (char c : text)
    lines += c == '\n';
  CHECK(lines == trace.size());
  CHECK(trace_entry_from_json(trace_entry_to_json(trace[3])) == trace[3]);
}
