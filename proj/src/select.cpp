//===-- select.cpp - Adaptive-confidence design selection ----------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//

#include "malta/select.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"
#include "malta/error.hpp"

namespace malta {

namespace {
constexpr std::string_view kSelection = "selection config";
} // namespace

void SelectionConfig::validate() const {
  if (!(conf_threshold >= 0 && conf_threshold <= 1))
    throw Error(ErrorCode::Config, "conf_threshold must lie in [0, 1]");
  if (validation_interval < 1)
    throw Error(ErrorCode::Config, "validation_interval must be >= 1");
  if (!(alpha > 0 && alpha <= 1))
    throw Error(ErrorCode::Config, "alpha must lie in (0, 1]");
  if (sigma && !(*sigma > 0))
    throw Error(ErrorCode::Config, "sigma must be positive");
}

double SelectionConfig::sigma_for(double t_score) const {
  if (sigma)
    return *sigma;
  return std::max(0.2 * std::fabs(t_score), 1e-6);
}

nlohmann::json selection_config_to_json(const SelectionConfig &c) {
  nlohmann::json j = {{"conf_threshold", c.conf_threshold},
                      {"validation_interval", c.validation_interval},
                      {"alpha", c.alpha}};
  j["sigma"] = c.sigma ? nlohmann::json(*c.sigma) : nlohmann::json(nullptr);
  return j;
}

SelectionConfig selection_config_from_json(const nlohmann::json &j) {
  using namespace detail;
  reject_unknown_keys(j, {"conf_threshold", "validation_interval", "alpha", "sigma"},
                      kSelection);
  SelectionConfig c;
  if (j.contains("conf_threshold"))
    c.conf_threshold = get_number(j["conf_threshold"], "conf_threshold", kSelection);
  if (j.contains("validation_interval"))
    c.validation_interval = static_cast<int>(
        get_integer(j["validation_interval"], "validation_interval", kSelection));
  if (j.contains("alpha"))
    c.alpha = get_number(j["alpha"], "alpha", kSelection);
  if (j.contains("sigma") && !j["sigma"].is_null())
    c.sigma = get_number(j["sigma"], "sigma", kSelection);
  c.validate();
  return c;
}

std::string_view to_string(SelectionMode m) { return m == SelectionMode::Tool ? "TOOL" : "LLM"; }

nlohmann::json trace_entry_to_json(const TraceEntry &e) {
  nlohmann::json j = {{"iteration", e.iteration},
                      {"final_choice", e.final_choice},
                      {"conf", e.conf},
                      {"mode", std::string(to_string(e.mode))},
                      {"l_choice", e.l_choice},
                      {"l_score", e.l_score}};
  auto opt = [&](const char *key, const auto &v) {
    j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  opt("t_choice", e.t_choice);
  opt("t_score", e.t_score);
  opt("similarity", e.similarity);
  opt("t_feasible", e.t_feasible);
  return j;
}

TraceEntry trace_entry_from_json(const nlohmann::json &j) {
  TraceEntry e;
  e.iteration = j.at("iteration").get<int>();
  e.final_choice = j.at("final_choice").get<std::string>();
  e.conf = j.at("conf").get<double>();
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "TOOL" && mode != "LLM")
    throw Error(ErrorCode::UnknownEnum, "unknown selection mode '" + mode + "'");
  e.mode = mode == "TOOL" ? SelectionMode::Tool : SelectionMode::Llm;
  e.l_choice = j.at("l_choice").get<std::string>();
  e.l_score = j.at("l_score").get<double>();
  if (j.contains("t_choice") && !j["t_choice"].is_null())
    e.t_choice = j["t_choice"].get<std::string>();
  if (j.contains("t_score") && !j["t_score"].is_null())
    e.t_score = j["t_score"].get<double>();
  if (j.contains("similarity") && !j["similarity"].is_null())
    e.similarity = j["similarity"].get<double>();
  if (j.contains("t_feasible") && !j["t_feasible"].is_null())
    e.t_feasible = j["t_feasible"].get<bool>();
  return e;
}

StepOutcome select_step(std::span<const Candidate> k_designs, SelectionState &state,
                        const SelectionConfig &cfg, SelectionTool &tool,
                        SelectionJudge &judge) {
  if (k_designs.empty())
    throw Error(ErrorCode::EmptyCandidateSet, "select_step needs at least one candidate");

  state.iteration += 1;
  TraceEntry entry;
  entry.iteration = state.iteration;
  StepOutcome out;

  if (state.conf < cfg.conf_threshold ||
      state.iteration % cfg.validation_interval == 0) {
    entry.mode = SelectionMode::Tool;
    out.reports = tool.evaluate(k_designs);
    const Pick t = tool_select(out.reports);
    const Pick l = judge.select(k_designs);
    const double similarity = std::exp(-std::fabs(l.score - t.score) / cfg.sigma_for(t.score));
    state.conf = cfg.alpha * similarity + (1 - cfg.alpha) * state.conf;
    out.final_choice = t.choice;
    judge.update(k_designs, out.reports);

    entry.l_choice = l.choice;
    entry.l_score = l.score;
    entry.t_choice = t.choice;
    entry.t_score = t.score;
    entry.similarity = similarity;
    for (const EvalReport &r : out.reports)
      if (r.design_id == t.choice)
        entry.t_feasible = r.feasible;
  } else {
    entry.mode = SelectionMode::Llm;
    const Pick l = judge.select(k_designs);
    out.final_choice = l.choice;
    entry.l_choice = l.choice;
    entry.l_score = l.score;
  }

  entry.final_choice = out.final_choice;
  entry.conf = state.conf;
  state.trace.push_back(std::move(entry));
  return out;
}

std::vector<TraceEntry>
run_selection(const std::function<std::vector<Candidate>(int)> &candidates_for,
              const SelectionConfig &cfg, SelectionTool &tool, SelectionJudge &judge,
              int num_iterations, SelectionState *state) {
  if (num_iterations < 1)
    throw Error(ErrorCode::InvalidArgument, "num_iterations must be >= 1");
  SelectionState local;
  SelectionState &s = state ? *state : local;
  const std::size_t first = s.trace.size();
  for (int i = 0; i < num_iterations; ++i) {
    const auto k_designs = candidates_for(s.iteration + 1);
    select_step(k_designs, s, cfg, tool, judge);
  }
  return {s.trace.begin() + static_cast<std::ptrdiff_t>(first), s.trace.end()};
}

std::string trace_to_jsonl(std::span<const TraceEntry> trace) {
  std::string out;
  for (const TraceEntry &e : trace)
    out += trace_entry_to_json(e).dump() + "\n";
  return out;
}

namespace {

constexpr std::string_view kScript = "selection script";

class ScriptedTool : public SelectionTool {
public:
  explicit ScriptedTool(const std::vector<ScriptStep> &steps) : steps_(steps) {}
  std::size_t cursor = 0;

  std::vector<EvalReport> evaluate(std::span<const Candidate> k_designs) override {
    const ScriptStep &s = steps_[cursor];
    std::vector<EvalReport> out;
    for (const Candidate &c : k_designs) {
      EvalReport r;
      r.design_id = c.design.id;
      r.score = c.design.id == s.t_choice ? s.t_score : s.t_score + 1.0;
      r.feasible = true;
      out.push_back(r);
    }
    return out;
  }

private:
  const std::vector<ScriptStep> &steps_;
};

class ScriptedJudge : public SelectionJudge {
public:
  explicit ScriptedJudge(const std::vector<ScriptStep> &steps) : steps_(steps) {}
  std::size_t cursor = 0;

  Pick select(std::span<const Candidate>) override {
    return {steps_[cursor].l_choice, steps_[cursor].l_score};
  }
  void update(std::span<const Candidate>, std::span<const EvalReport>) override {}

private:
  const std::vector<ScriptStep> &steps_;
};

} // namespace

SelectionScript parse_selection_script(std::string_view text) {
  using namespace detail;
  const nlohmann::json j = parse_json_text(text, kScript);
  reject_unknown_keys(j, {"config", "steps"}, kScript);
  SelectionScript script;
  if (j.contains("config"))
    script.config = selection_config_from_json(j["config"]);
  const auto &steps = require(j, "steps", kScript);
  if (!steps.is_array())
    throw Error(ErrorCode::TypeMismatch, "selection script: 'steps' must be an array");
  if (steps.empty())
    throw Error(ErrorCode::Config, "selection script has no steps");
  for (const auto &js : steps) {
    reject_unknown_keys(js, {"t_score", "l_score", "t_choice", "l_choice"}, kScript);
    ScriptStep s;
    s.t_score = get_number(require(js, "t_score", kScript), "t_score", kScript);
    s.l_score = get_number(require(js, "l_score", kScript), "l_score", kScript);
    if (js.contains("t_choice"))
      s.t_choice = get_string(js["t_choice"], "t_choice", kScript);
    s.l_choice = js.contains("l_choice") ? get_string(js["l_choice"], "l_choice", kScript)
                                         : s.t_choice;
    script.steps.push_back(std::move(s));
  }
  return script;
}

std::vector<TraceEntry> simulate_script(const SelectionScript &script) {
  script.config.validate();
  ScriptedTool tool(script.steps);
  ScriptedJudge judge(script.steps);
  SelectionState state;
  for (std::size_t i = 0; i < script.steps.size(); ++i) {
    tool.cursor = judge.cursor = i;
    const ScriptStep &s = script.steps[i];
    std::vector<Candidate> k_designs(1);
    k_designs[0].design.id = s.t_choice;
    if (s.l_choice != s.t_choice) {
      k_designs.emplace_back();
      k_designs[1].design.id = s.l_choice;
    }
    select_step(k_designs, state, script.config, tool, judge);
  }
  return state.trace;
}

} // namespace malta
