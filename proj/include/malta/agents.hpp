//===-- agents.hpp - Proposer, fixer and judges ---------------------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// Each agent role has an abstract interface, a deterministic heuristic
// implementation and an LLM-backed one. LLM agents fall back to their
// heuristic twin whenever the transport fails or the reply does not parse,
// so an agent never aborts the pipeline.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "malta/arch.hpp"
#include "malta/costs.hpp"
#include "malta/error.hpp"
#include "malta/kernel.hpp"
#include "malta/llm.hpp"
#include "malta/mapper.hpp"
#include "malta/select.hpp"

namespace malta {

enum class BackendKind : std::uint8_t { Heuristic, Llm };
std::string_view to_string(BackendKind k);
/// "heuristic" / "llm", case-insensitive.
BackendKind parse_backend_kind(std::string_view token);

struct AgentBackend {
  BackendKind kind = BackendKind::Heuristic;
  LlmEndpoint endpoint;
  std::uint64_t seed = 1;
};

/// What the agents know about the kernel without mapping it.
struct KernelSummary {
  std::string name;
  int trip_count = 1;
  int nodes = 0;
  int edges = 0;
  std::map<FuKind, int> census;
  FuSet required;
  std::vector<int> carried_distances; // one per carried edge, sorted
  int rec_mii = 1;
};

KernelSummary summarize(const KernelGraph &k);
nlohmann::json kernel_summary_to_json(const KernelSummary &s);

/// Region the proposer draws from. Every proposal lies inside it.
struct DesignSpace {
  int min_dim = 2;
  int max_dim = 6;
  int min_depth = 2;
  int max_depth = 32;
  int max_unroll = 4;
  int max_vectorize = 4;
  int max_data_mem_kb = 64;

  /// Throws Error(Config) when empty or outside the architecture bounds.
  void validate() const;
  DesignPoint clamp(DesignPoint d) const;
  bool contains(const DesignPoint &d) const;
};

nlohmann::json design_space_to_json(const DesignSpace &s);
DesignSpace design_space_from_json(const nlohmann::json &j);

// ---------------------------------------------------------------------------
// History

/// Why a design never reached evaluation.
struct TerminalFailure {
  std::string code; // MapErrorCode, ErrorCode or ViolationCode token
  std::string detail;

  friend bool operator==(const TerminalFailure &, const TerminalFailure &) = default;
};

struct HistoryEntry {
  int iteration = 0;
  DesignPoint design;
  std::variant<EvalReport, TerminalFailure> outcome;

  const EvalReport *report() const { return std::get_if<EvalReport>(&outcome); }
};

nlohmann::json history_entry_to_json(const HistoryEntry &e);
HistoryEntry history_entry_from_json(const nlohmann::json &j);

class History {
public:
  /// Appends one iteration's entries, sorted by design id. Iterations must
  /// not go backwards.
  void append_iteration(std::vector<HistoryEntry> entries);

  const std::vector<HistoryEntry> &entries() const { return entries_; }
  /// Feasible entry with the lowest score; ties go to the earlier entry.
  const HistoryEntry *best_feasible() const;
  /// Evaluated entry with the lowest score, feasible or not.
  const HistoryEntry *best_evaluated() const;
  /// Highest power efficiency among feasible entries.
  std::optional<double> best_feasible_efficiency() const;
  /// Entries of iterations in (last - n, last].
  std::vector<HistoryEntry> window(int last_iteration, int n) const;

  std::vector<TraceEntry> trace;

private:
  std::vector<HistoryEntry> entries_;
};

// ---------------------------------------------------------------------------
// Stage 1: proposals

struct ProposalRequest {
  KernelSummary kernel;
  Objective objective;
  std::vector<HistoryEntry> window;
  std::optional<HistoryEntry> best; // best feasible, else best evaluated
  int count = 1;                    // M
  DesignSpace space;
  int iteration = 1;
};

class Proposer {
public:
  virtual ~Proposer() = default;
  /// At most req.count drafts. Drafts may be invalid; they are checked
  /// downstream.
  virtual std::vector<DesignPoint> propose(const ProposalRequest &req) = 0;
};

/// Without an evaluated design: Latin-hypercube sample of (tile size,
/// topology, unroll, vectorize). Otherwise count - 1 single-field moves away
/// from the best design plus one fresh random design. Randomness is seeded
/// from (seed, iteration) only.
class HeuristicProposer : public Proposer {
public:
  explicit HeuristicProposer(std::uint64_t seed) : seed_(seed) {}
  std::vector<DesignPoint> propose(const ProposalRequest &req) override;

private:
  std::uint64_t seed_;
};

class LlmProposer : public Proposer {
public:
  LlmProposer(std::shared_ptr<ChatTransport> transport, std::uint64_t seed)
      : transport_(std::move(transport)), fallback_(seed) {}
  /// Parsed designs first; heuristic proposals top the list up to count.
  std::vector<DesignPoint> propose(const ProposalRequest &req) override;

private:
  std::shared_ptr<ChatTransport> transport_;
  HeuristicProposer fallback_;
};

// ---------------------------------------------------------------------------
// Stage 2: validation and repair

/// A software transform that cannot be applied to the kernel.
struct TransformFailure {
  ErrorCode code = ErrorCode::NonDivisibleFactor;
  std::string message;
};

using Diagnosis = std::variant<std::vector<StructuralViolation>, TransformFailure, MapError>;

/// Short error token: first violation code, transform error code or map
/// error code.
std::string diagnosis_code(const Diagnosis &d);
/// Multi-line report handed to the fixer (and to LLM prompts verbatim).
std::string describe(const Diagnosis &d);
nlohmann::json diagnosis_to_json(const Diagnosis &d);

struct CheckResult {
  std::optional<MappingResult> mapping;
  std::optional<Diagnosis> diagnosis; // set exactly when mapping is not
};

/// Structural validation, then the design's software transforms, then the
/// mapper on the transformed kernel.
CheckResult check_design(const DesignPoint &d, const KernelGraph &original,
                         const MapBudget &budget);

class Fixer {
public:
  virtual ~Fixer() = default;
  /// One repair round. Must be safe to call concurrently.
  virtual DesignPoint repair(const DesignPoint &d, const Diagnosis &diag,
                             const KernelGraph &original) const = 0;
};

/// Rules, keyed on the diagnosis:
///   structural          clamp every field into range; add LOAD/STORE, or the
///                       kernel's kinds when the set is empty
///   transform           largest legal vectorize factor, then unroll factor
///   MISSING_FU_KIND     add the hinted kinds
///   INSUFFICIENT_TILES  grow the smaller grid dimension until the hint fits
///   CONFIG_MEM_OVERFLOW raise config_mem_depth to the hinted ii; without a
///                       hint, lower unroll_factor
///   ROUTING_FAILURE     step MESH -> KINGMESH -> CROSSBAR; on a crossbar
///                       lower unroll_factor, else grow the grid
///   II_BOUND_EXCEEDED   lower unroll_factor, else grow the grid
class HeuristicFixer : public Fixer {
public:
  DesignPoint repair(const DesignPoint &d, const Diagnosis &diag,
                     const KernelGraph &original) const override;
};

class LlmFixer : public Fixer {
public:
  explicit LlmFixer(std::shared_ptr<ChatTransport> transport) : transport_(std::move(transport)) {}
  DesignPoint repair(const DesignPoint &d, const Diagnosis &diag,
                     const KernelGraph &original) const override;

private:
  std::shared_ptr<ChatTransport> transport_;
  HeuristicFixer fallback_;
};

struct FixSuccess {
  DesignPoint design; // provenance REPAIRED
  MappingResult mapping;
  int rounds = 0;
};

struct FixFailure {
  DesignPoint last; // the last design tried
  Diagnosis error;  // its diagnosis
  int rounds = 0;
};

using FixOutcome = std::variant<FixSuccess, FixFailure>;

/// Repair, re-check, repeat until the design maps or max_rounds run out.
/// Throws Error(InvalidArgument) when max_rounds < 1 or `diag` is an empty
/// violation list.
FixOutcome fix_design(const DesignPoint &d, const Diagnosis &diag, const Fixer &fixer,
                      const KernelGraph &original, const MapBudget &budget,
                      int max_rounds);

// ---------------------------------------------------------------------------
// Stage 3: judges

/// Routing-structure multiplier used by the coefficient-free proxies.
double structural_wiring(Topology t);

struct Proxy {
  double speedup = 0;
  double power = 0; // tiles * |fu_kinds| * structural_wiring
  double value = 0; // speedup / power, higher is better
  bool feasible = false;
};

/// Throws Error(EvalOnUnmapped) for an unmapped candidate.
Proxy proxy_of(const Candidate &c, const KernelGraph &original, const Objective &obj);

class CoarseJudge {
public:
  virtual ~CoarseJudge() = default;
  /// The best min(k, |candidates|) candidates, best first.
  virtual std::vector<Candidate> top_k(std::span<const Candidate> candidates,
                                       const KernelGraph &original, const Objective &obj,
                                       int k) = 0;
};

/// Feasible before infeasible, then proxy value descending, then id.
class HeuristicCoarseJudge : public CoarseJudge {
public:
  std::vector<Candidate> top_k(std::span<const Candidate> candidates,
                               const KernelGraph &original, const Objective &obj,
                               int k) override;
};

class LlmCoarseJudge : public CoarseJudge {
public:
  explicit LlmCoarseJudge(std::shared_ptr<ChatTransport> transport)
      : transport_(std::move(transport)) {}
  /// Ids ranked by the model come first; the heuristic order fills in.
  std::vector<Candidate> top_k(std::span<const Candidate> candidates,
                               const KernelGraph &original, const Objective &obj,
                               int k) override;

private:
  std::shared_ptr<ChatTransport> transport_;
  HeuristicCoarseJudge fallback_;
};

struct LessonCandidate {
  std::string id;
  std::string summary;
  std::vector<double> features;
  double proxy_power = 0;
  double speedup = 0;
  double tool_power = 0;
  double tool_score = 0;

  friend bool operator==(const LessonCandidate &, const LessonCandidate &) = default;
};

/// What one tool-validated selection step taught the judge.
struct Lesson {
  std::vector<LessonCandidate> candidates;
  std::string tool_choice;
  std::string judge_choice;
  bool correct = false;

  friend bool operator==(const Lesson &, const Lesson &) = default;
};

nlohmann::json lesson_to_json(const Lesson &l);
Lesson lesson_from_json(const nlohmann::json &j);

inline constexpr std::size_t kLessonCapacity = 256;

/// The fine-grained judge of the selection step. update() turns the tool's
/// reports into a Lesson and learn()s it; learn() is also how a resumed run
/// replays stored lessons.
class FineJudge : public SelectionJudge {
public:
  void update(std::span<const Candidate> k_designs, std::span<const EvalReport> reports) override;
  virtual void learn(const Lesson &lesson) = 0;
  /// Oldest first, at most kLessonCapacity.
  virtual const std::deque<Lesson> &lessons() const = 0;
  /// Lesson built for a candidate set from tool reports.
  virtual Lesson make_lesson(std::span<const Candidate> k_designs,
                             std::span<const EvalReport> reports) const = 0;
};

/// Predicts each candidate's power as the structural proxy plus a learned
/// linear correction over design features, then scores it like the tool.
/// With no lessons the correction is zero, so l_score is the proxy score.
/// Each lesson refits the correction to the tool's power figures over the
/// whole store by ridge regression.
class HeuristicFineJudge : public FineJudge {
public:
  HeuristicFineJudge(KernelGraph original, Objective obj);

  Pick select(std::span<const Candidate> k_designs) override;
  void learn(const Lesson &lesson) override;
  const std::deque<Lesson> &lessons() const override { return lessons_; }
  Lesson make_lesson(std::span<const Candidate> k_designs,
                     std::span<const EvalReport> reports) const override;

  static std::vector<double> features(const Candidate &c);
  double predicted_power(const Candidate &c) const;
  const std::vector<double> &weights() const { return weights_; }

  static constexpr std::size_t kFeatureCount = 7 + 2 * kFuKindCount;
  static constexpr double kRidge = 1e-3;

private:
  KernelGraph original_;
  Objective obj_;
  std::deque<Lesson> lessons_;
  std::vector<double> weights_;
  std::string last_choice_;
};

/// Asks the model for {"choice", "score"}, showing the most recent lessons.
/// Learning is delegated to a heuristic twin, which also answers when the
/// model cannot.
class LlmFineJudge : public FineJudge {
public:
  LlmFineJudge(std::shared_ptr<ChatTransport> transport, KernelGraph original, Objective obj,
               int lessons_in_prompt = 8);

  Pick select(std::span<const Candidate> k_designs) override;
  void learn(const Lesson &lesson) override { twin_.learn(lesson); }
  const std::deque<Lesson> &lessons() const override { return twin_.lessons(); }
  Lesson make_lesson(std::span<const Candidate> k_designs,
                     std::span<const EvalReport> reports) const override;

private:
  std::shared_ptr<ChatTransport> transport_;
  HeuristicFineJudge twin_;
  KernelGraph original_;
  Objective obj_;
  int lessons_in_prompt_;
  std::string last_choice_;
};

/// One-line description used in prompts and lessons.
std::string candidate_summary(const Candidate &c);

} // namespace malta
