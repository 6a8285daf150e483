//===-- select.hpp - Adaptive-confidence design selection ----------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// Each step picks one design out of the current top-K. While the judge has
// not earned enough confidence, or on every validation_interval-th
// iteration, the tool evaluates all K designs and its choice is final; the
// judge's choice is compared against it and confidence follows
//
//   similarity = exp(-|l_score - t_score| / sigma)
//   conf       = alpha * similarity + (1 - alpha) * conf
//
// Otherwise the judge's choice is taken as is and confidence is left alone.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "malta/costs.hpp"

namespace malta {

struct SelectionConfig {
  double conf_threshold = 0.7;
  int validation_interval = 5;
  double alpha = 0.3;
  /// Fixed similarity scale. Unset means 0.2 * |t_score|, floored at 1e-6.
  std::optional<double> sigma;

  /// Throws Error(Config) on out-of-range fields.
  void validate() const;
  double sigma_for(double t_score) const;
};

nlohmann::json selection_config_to_json(const SelectionConfig &c);
/// Missing keys keep their defaults; unknown keys are rejected.
SelectionConfig selection_config_from_json(const nlohmann::json &j);

enum class SelectionMode : std::uint8_t { Tool, Llm };
std::string_view to_string(SelectionMode m);

struct TraceEntry {
  int iteration = 0;
  std::string final_choice;
  double conf = 0; // after the step
  SelectionMode mode = SelectionMode::Tool;
  std::string l_choice;
  double l_score = 0;
  // Tool-mode only.
  std::optional<std::string> t_choice;
  std::optional<double> t_score;
  std::optional<double> similarity;
  std::optional<bool> t_feasible;

  friend bool operator==(const TraceEntry &, const TraceEntry &) = default;
};

nlohmann::json trace_entry_to_json(const TraceEntry &e);
TraceEntry trace_entry_from_json(const nlohmann::json &j);

struct SelectionState {
  double conf = 0;
  int iteration = 0;
  std::vector<TraceEntry> trace;
};

/// The ground-truth side: evaluates every candidate.
class SelectionTool {
public:
  virtual ~SelectionTool() = default;
  virtual std::vector<EvalReport> evaluate(std::span<const Candidate> k_designs) = 0;
};

/// The inference side: guesses the best candidate and learns from reports.
class SelectionJudge {
public:
  virtual ~SelectionJudge() = default;
  virtual Pick select(std::span<const Candidate> k_designs) = 0;
  virtual void update(std::span<const Candidate> k_designs,
                      std::span<const EvalReport> reports) = 0;
};

struct StepOutcome {
  std::string final_choice;
  /// Tool reports for every candidate; empty in LLM mode.
  std::vector<EvalReport> reports;
};

/// Throws Error(EmptyCandidateSet) when `k_designs` is empty.
StepOutcome select_step(std::span<const Candidate> k_designs, SelectionState &state,
                        const SelectionConfig &cfg, SelectionTool &tool,
                        SelectionJudge &judge);

/// Runs `num_iterations` steps, asking `candidates_for(iteration)` for each
/// step's candidate set (iterations count from 1). Returns the trace.
std::vector<TraceEntry>
run_selection(const std::function<std::vector<Candidate>(int)> &candidates_for,
              const SelectionConfig &cfg, SelectionTool &tool, SelectionJudge &judge,
              int num_iterations, SelectionState *state = nullptr);

/// One JSON document per line.
std::string trace_to_jsonl(std::span<const TraceEntry> trace);

// Scripted replay for studying the confidence dynamics in isolation:
//   {"config": {...SelectionConfig...},
//    "steps": [{"t_score": 2.0, "l_score": 2.5, "t_choice": "a", "l_choice": "b"}, ...]}
// Choices default to "a" (tool) and the tool's choice (judge).
struct ScriptStep {
  double t_score = 0;
  double l_score = 0;
  std::string t_choice = "a";
  std::string l_choice = "a";
};

struct SelectionScript {
  SelectionConfig config;
  std::vector<ScriptStep> steps;
};

/// Throws Error(Syntax / Config / ...) on malformed or empty scripts.
SelectionScript parse_selection_script(std::string_view text);
std::vector<TraceEntry> simulate_script(const SelectionScript &script);

} // namespace malta
