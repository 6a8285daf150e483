//===-- orchestrate.hpp - The closed design loop --------------------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// One iteration: propose M drafts, check and repair them, screen the mapped
// ones down to K, run one selection step over the K, evaluate the pick if
// the tool has not already done so, and record everything.
//
// Every event is appended to history.jsonl as
//   {"schema_version", "seq", "iteration", "type", "payload", "meta"}
// where "meta" holds only the wall-clock timestamp. Two runs with the same
// configuration and heuristic agents produce identical files once "meta" is
// dropped. The log is flushed after every record, and a run can resume from
// the last completed iteration.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "malta/agents.hpp"
#include "malta/costs.hpp"
#include "malta/mapper.hpp"
#include "malta/select.hpp"

namespace malta {

inline constexpr int kHistorySchemaVersion = 1;
inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr int kRunConfigSchemaVersion = 1;

struct BackendChoice {
  BackendKind proposer = BackendKind::Heuristic;
  BackendKind fixer = BackendKind::Heuristic;
  BackendKind coarse_judge = BackendKind::Heuristic;
  BackendKind fine_judge = BackendKind::Heuristic;

  void set_all(BackendKind k) { proposer = fixer = coarse_judge = fine_judge = k; }
};

struct RunConfig {
  std::string kernel; // built-in name or kernel file path
  Objective objective;
  int num_iterations = 10;
  int proposals = 6; // M
  int top_k = 3;     // K
  MapBudget map_budget;
  SelectionConfig selection;
  BackendChoice backends;
  LlmEndpoint llm;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "malta-out";
  int max_fix_rounds = 4;
  int history_window = 3; // iterations shown to the proposer
  int parallelism = 4;    // in-flight stage 2 checks / LLM calls
  DesignSpace space;
  std::optional<std::filesystem::path> cost_coeffs; // default coefficients when unset

  /// Throws Error(Config) unless M >= K >= 1, num_iterations >= 1 and every
  /// nested block is valid.
  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig &c);
/// Unknown keys are rejected; missing keys keep their defaults, except
/// "kernel" which is required.
RunConfig run_config_from_json(const nlohmann::json &j);
RunConfig load_run_config(const std::filesystem::path &path);

/// Agents used by a run. Tests inject their own.
struct AgentSet {
  std::unique_ptr<Proposer> proposer;
  std::unique_ptr<Fixer> fixer;
  std::unique_ptr<CoarseJudge> coarse_judge;
  std::unique_ptr<FineJudge> fine_judge;
};

/// Builds the agents named by cfg.backends. LLM agents share one transport:
/// `transport` if given, else an HTTP client for cfg.llm.
AgentSet make_agents(const RunConfig &cfg, const KernelGraph &kernel,
                     std::shared_ptr<ChatTransport> transport = nullptr);

struct IterationRecord {
  int iteration = 0;
  int proposed = 0;
  int mapped_initial = 0;   // mapped before repair
  int mapped_after_fix = 0; // mapped before or after repair
  bool failed = false;      // ITERATION_EMPTY
  std::string chosen;       // empty when failed
  std::string mode;         // "TOOL" / "LLM", empty when failed
  std::optional<double> best_score;      // best feasible score so far
  std::optional<double> best_efficiency; // best feasible power efficiency so far

  double sr1() const { return proposed ? double(mapped_initial) / proposed : 0.0; }
  double sr2() const { return proposed ? double(mapped_after_fix) / proposed : 0.0; }
};

nlohmann::json iteration_record_to_json(const IterationRecord &r);
IterationRecord iteration_record_from_json(const nlohmann::json &j);

struct RunMetrics {
  std::string kernel;
  Objective objective;
  std::vector<IterationRecord> iterations;
  double sr1 = 0; // over all proposals of the run
  double sr2 = 0;
  std::optional<HistoryEntry> chosen; // best feasible, else best evaluated
  bool feasible = false;
  int tool_steps = 0;
  int llm_steps = 0;
  double final_conf = 0;
};

nlohmann::json run_metrics_to_json(const RunMetrics &m);

/// One line of history.jsonl.
struct HistoryRecord {
  int schema_version = kHistorySchemaVersion;
  long long seq = 0;
  int iteration = 0;
  std::string type;
  nlohmann::json payload;
  nlohmann::json meta;
};

nlohmann::json history_record_to_json(const HistoryRecord &r);
/// Throws Error(Syntax) on a malformed line and Error(SchemaVersion) on a
/// schema mismatch, naming the line.
std::vector<HistoryRecord> read_history(const std::filesystem::path &path);
/// The file's lines with "meta" removed, for byte-level comparison.
std::string history_without_meta(const std::filesystem::path &path);

class Orchestrator {
public:
  /// Starts a fresh history.jsonl in cfg.output_dir, or continues the one
  /// there when `resume` is set. Throws Error(Config) when resuming a log
  /// written for a different kernel, objective or seed.
  Orchestrator(RunConfig cfg, AgentSet agents, bool resume = false);
  explicit Orchestrator(RunConfig cfg, bool resume = false);
  ~Orchestrator();

  /// Runs the next iteration. Throws Error(InvalidArgument) past the budget.
  IterationRecord run_iteration();
  int next_iteration() const { return static_cast<int>(records_.size()) + 1; }
  bool done() const { return next_iteration() > cfg_.num_iterations; }

  const History &history() const { return history_; }
  const SelectionState &selection() const { return selection_; }
  RunMetrics metrics() const;
  const KernelGraph &kernel() const { return kernel_; }

private:
  void append(int iteration, const std::string &type, nlohmann::json payload);
  void replay(const std::vector<HistoryRecord> &records);

  RunConfig cfg_;
  KernelGraph kernel_;
  KernelSummary summary_;
  CostCoeffs coeffs_;
  AgentSet agents_;
  History history_;
  SelectionState selection_;
  std::vector<IterationRecord> records_;
  long long seq_ = 0;
  int proposed_total_ = 0;
  int mapped_initial_total_ = 0;
  int mapped_after_fix_total_ = 0;
  struct Log;
  std::unique_ptr<Log> log_;
};

struct RunResult {
  RunMetrics metrics;
  std::filesystem::path history_path;
  std::filesystem::path metrics_path;
  std::optional<std::filesystem::path> design_path; // written when feasible
};

/// Runs (or resumes) until cfg.num_iterations iterations exist, then writes
/// metrics.json and, when a feasible design exists, design.json next to
/// history.jsonl. The caller maps metrics.feasible == false to
/// NO_FEASIBLE_DESIGN.
RunResult run(const RunConfig &cfg, bool resume = false);
RunResult run(const RunConfig &cfg, AgentSet agents, bool resume = false);

// Report over a finished or partial history.
struct HistoryReport {
  std::vector<IterationRecord> iterations;
  int proposed = 0;
  int mapped_initial = 0;
  int mapped_after_fix = 0;
  std::optional<HistoryEntry> chosen;
  bool feasible = false;

  double sr1() const { return proposed ? double(mapped_initial) / proposed : 0.0; }
  double sr2() const { return proposed ? double(mapped_after_fix) / proposed : 0.0; }
};

/// Rebuilds the report from raw events: SR counts come from proposal,
/// map_result and fix events, the series from eval events. Throws
/// Error(Config) when the history holds no completed iteration.
HistoryReport report_history(const std::vector<HistoryRecord> &records);
/// iteration,best_score,best_power_efficiency,sr1,sr2 (empty cell = none yet)
std::string report_csv(const HistoryReport &r);

} // namespace malta
