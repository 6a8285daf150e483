#include "malta/orchestrate.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "json_util.hpp"
#include "malta/error.hpp"
#include "malta/log.hpp"
#include "malta/parallel.hpp"

namespace malta {

namespace {

constexpr std::string_view kConfig = "run config";

std::string design_id(int iteration, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "it%03d-p%02zu", iteration, index + 1);
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

nlohmann::json opt_json(const std::optional<double> &v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> opt_double(const nlohmann::json &j, const char *key) {
  if (!j.contains(key) || j[key].is_null())
    return std::nullopt;
  return j[key].get<double>();
}

nlohmann::json objective_to_json(const Objective &o) {
  return {{"mode", std::string(to_string(o.mode))}, {"min_speedup", o.min_speedup}};
}

/// Fields that shape the search; a resumed run must agree on all of them.
nlohmann::json run_identity(const RunConfig &c) {
  nlohmann::json j = run_config_to_json(c);
  for (const char *volatile_key : {"iterations", "output_dir", "parallelism", "llm"})
    j.erase(volatile_key);
  return j;
}

class CostTool : public SelectionTool {
public:
  CostTool(const KernelGraph &k, const Objective &obj, const CostCoeffs &c) : k_(k), obj_(obj), c_(c) {}
  std::vector<EvalReport> evaluate(std::span<const Candidate> k_designs) override {
    return tool_evaluate(k_designs, k_, obj_, c_);
  }

private:
  const KernelGraph &k_;
  const Objective &obj_;
  const CostCoeffs &c_;
};

std::string diagnosis_event(const Diagnosis &d) {
  switch (d.index()) {
  case 0: return "violation";
  case 1: return "transform_error";
  default: return "map_error";
  }
}

} // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  auto fail = [](const std::string &m) { throw Error(ErrorCode::Config, "run config: " + m); };
  if (kernel.empty())
    fail("kernel is required");
  if (num_iterations < 1)
    fail("iterations must be >= 1");
  if (top_k < 1 || proposals < top_k)
    fail("need proposals >= top_k >= 1");
  if (map_budget.max_ii < 1 || map_budget.attempts_per_ii < 1)
    fail("map_budget values must be >= 1");
  if (max_fix_rounds < 1)
    fail("max_fix_rounds must be >= 1");
  if (history_window < 1)
    fail("history_window must be >= 1");
  if (parallelism < 1)
    fail("parallelism must be >= 1");
  if (!(objective.min_speedup > 0))
    fail("min_speedup must be > 0");
  selection.validate();
  space.validate();
}

nlohmann::json run_config_to_json(const RunConfig &c) {
  nlohmann::json j = {
      {"schema_version", kRunConfigSchemaVersion},
      {"kernel", c.kernel},
      {"objective", objective_to_json(c.objective)},
      {"iterations", c.num_iterations},
      {"proposals", c.proposals},
      {"top_k", c.top_k},
      {"map_budget", {{"max_ii", c.map_budget.max_ii}, {"attempts_per_ii", c.map_budget.attempts_per_ii}}},
      {"selection", selection_config_to_json(c.selection)},
      {"backends",
       {{"proposer", std::string(to_string(c.backends.proposer))},
        {"fixer", std::string(to_string(c.backends.fixer))},
        {"coarse_judge", std::string(to_string(c.backends.coarse_judge))},
        {"fine_judge", std::string(to_string(c.backends.fine_judge))}}},
      {"llm", llm_endpoint_to_json(c.llm)},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"max_fix_rounds", c.max_fix_rounds},
      {"history_window", c.history_window},
      {"parallelism", c.parallelism},
      {"space", design_space_to_json(c.space)},
  };
  j["cost_coeffs"] = c.cost_coeffs ? nlohmann::json(c.cost_coeffs->string()) : nlohmann::json(nullptr);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json &j) {
  using namespace detail;
  if (!j.is_object())
    throw Error(ErrorCode::TypeMismatch, "run config must be a JSON object");
  reject_unknown_keys(j,
                      {"schema_version", "kernel", "objective", "iterations", "proposals", "top_k",
                       "map_budget", "selection", "backend", "backends", "llm", "seed", "output_dir",
                       "max_fix_rounds", "history_window", "parallelism", "space", "cost_coeffs"},
                      kConfig);
  if (j.contains("schema_version") &&
      get_integer(j["schema_version"], "schema_version", kConfig) != kRunConfigSchemaVersion)
    throw Error(ErrorCode::SchemaVersion, "run config: unsupported schema_version");
  RunConfig c;
  c.kernel = get_string(require(j, "kernel", kConfig), "kernel", kConfig);
  auto int_field = [&](const char *key, int &field) {
    if (j.contains(key))
      field = static_cast<int>(get_integer(j[key], key, kConfig));
  };
  if (j.contains("objective")) {
    const auto &o = j["objective"];
    reject_unknown_keys(o, {"mode", "min_speedup"}, "objective");
    if (o.contains("mode"))
      c.objective.mode = parse_objective_mode(get_string(o["mode"], "mode", "objective"));
    if (o.contains("min_speedup"))
      c.objective.min_speedup = get_number(o["min_speedup"], "min_speedup", "objective");
  }
  int_field("iterations", c.num_iterations);
  int_field("proposals", c.proposals);
  int_field("top_k", c.top_k);
  if (j.contains("map_budget")) {
    const auto &b = j["map_budget"];
    reject_unknown_keys(b, {"max_ii", "attempts_per_ii"}, "map_budget");
    if (b.contains("max_ii"))
      c.map_budget.max_ii = static_cast<int>(get_integer(b["max_ii"], "max_ii", "map_budget"));
    if (b.contains("attempts_per_ii"))
      c.map_budget.attempts_per_ii = get_integer(b["attempts_per_ii"], "attempts_per_ii", "map_budget");
  }
  if (j.contains("selection"))
    c.selection = selection_config_from_json(j["selection"]);
  if (j.contains("backend"))
    c.backends.set_all(parse_backend_kind(get_string(j["backend"], "backend", kConfig)));
  if (j.contains("backends")) {
    const auto &b = j["backends"];
    reject_unknown_keys(b, {"proposer", "fixer", "coarse_judge", "fine_judge"}, "backends");
    auto read = [&](const char *key, BackendKind &field) {
      if (b.contains(key))
        field = parse_backend_kind(get_string(b[key], key, "backends"));
    };
    read("proposer", c.backends.proposer);
    read("fixer", c.backends.fixer);
    read("coarse_judge", c.backends.coarse_judge);
    read("fine_judge", c.backends.fine_judge);
  }
  if (j.contains("llm"))
    c.llm = llm_endpoint_from_json(j["llm"]);
  if (j.contains("seed")) {
    const long long s = get_integer(j["seed"], "seed", kConfig);
    if (s < 0)
      throw Error(ErrorCode::Config, "run config: seed must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("output_dir"))
    c.output_dir = get_string(j["output_dir"], "output_dir", kConfig);
  int_field("max_fix_rounds", c.max_fix_rounds);
  int_field("history_window", c.history_window);
  int_field("parallelism", c.parallelism);
  if (j.contains("space"))
    c.space = design_space_from_json(j["space"]);
  if (j.contains("cost_coeffs") && !j["cost_coeffs"].is_null())
    c.cost_coeffs = get_string(j["cost_coeffs"], "cost_coeffs", kConfig);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path &path) {
  const std::string text = detail::read_file(path.string());
  return run_config_from_json(detail::parse_json_text(text, path.string()));
}

AgentSet make_agents(const RunConfig &cfg, const KernelGraph &kernel,
                     std::shared_ptr<ChatTransport> transport) {
  const BackendChoice &b = cfg.backends;
  const bool any_llm = b.proposer == BackendKind::Llm || b.fixer == BackendKind::Llm ||
                       b.coarse_judge == BackendKind::Llm || b.fine_judge == BackendKind::Llm;
  if (any_llm && !transport)
    transport = std::make_shared<HttpChatTransport>(resolve_endpoint(cfg.llm));

  AgentSet a;
  if (b.proposer == BackendKind::Llm)
    a.proposer = std::make_unique<LlmProposer>(transport, cfg.seed);
  else
    a.proposer = std::make_unique<HeuristicProposer>(cfg.seed);
  if (b.fixer == BackendKind::Llm)
    a.fixer = std::make_unique<LlmFixer>(transport);
  else
    a.fixer = std::make_unique<HeuristicFixer>();
  if (b.coarse_judge == BackendKind::Llm)
    a.coarse_judge = std::make_unique<LlmCoarseJudge>(transport);
  else
    a.coarse_judge = std::make_unique<HeuristicCoarseJudge>();
  if (b.fine_judge == BackendKind::Llm)
    a.fine_judge = std::make_unique<LlmFineJudge>(transport, kernel, cfg.objective);
  else
    a.fine_judge = std::make_unique<HeuristicFineJudge>(kernel, cfg.objective);
  return a;
}

// ---------------------------------------------------------------------------
// Records

nlohmann::json iteration_record_to_json(const IterationRecord &r) {
  return {{"iteration", r.iteration},
          {"proposed", r.proposed},
          {"mapped_initial", r.mapped_initial},
          {"mapped_after_fix", r.mapped_after_fix},
          {"sr1", r.sr1()},
          {"sr2", r.sr2()},
          {"failed", r.failed},
          {"chosen", r.chosen},
          {"mode", r.mode},
          {"best_score", opt_json(r.best_score)},
          {"best_power_efficiency", opt_json(r.best_efficiency)}};
}

IterationRecord iteration_record_from_json(const nlohmann::json &j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.proposed = j.at("proposed").get<int>();
  r.mapped_initial = j.at("mapped_initial").get<int>();
  r.mapped_after_fix = j.at("mapped_after_fix").get<int>();
  r.failed = j.at("failed").get<bool>();
  r.chosen = j.at("chosen").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.best_score = opt_double(j, "best_score");
  r.best_efficiency = opt_double(j, "best_power_efficiency");
  return r;
}

nlohmann::json run_metrics_to_json(const RunMetrics &m) {
  nlohmann::json per = nlohmann::json::array(), scores = nlohmann::json::array(),
                 effs = nlohmann::json::array(), sr1s = nlohmann::json::array(),
                 sr2s = nlohmann::json::array();
  for (const auto &r : m.iterations) {
    per.push_back(iteration_record_to_json(r));
    scores.push_back(opt_json(r.best_score));
    effs.push_back(opt_json(r.best_efficiency));
    sr1s.push_back(r.sr1());
    sr2s.push_back(r.sr2());
  }
  return {{"schema_version", kMetricsSchemaVersion},
          {"kernel", m.kernel},
          {"objective", objective_to_json(m.objective)},
          {"iterations", m.iterations.size()},
          {"status", m.feasible ? "OK" : "NO_FEASIBLE_DESIGN"},
          {"feasible", m.feasible},
          {"sr1", m.sr1},
          {"sr2", m.sr2},
          {"sr1_per_iteration", sr1s},
          {"sr2_per_iteration", sr2s},
          {"best_score_per_iteration", scores},
          {"best_power_efficiency_per_iteration", effs},
          {"chosen", m.chosen ? history_entry_to_json(*m.chosen) : nlohmann::json(nullptr)},
          {"selection", {{"tool_steps", m.tool_steps}, {"llm_steps", m.llm_steps}, {"final_conf", m.final_conf}}},
          {"per_iteration", per}};
}

nlohmann::json history_record_to_json(const HistoryRecord &r) {
  return {{"schema_version", r.schema_version}, {"seq", r.seq},         {"iteration", r.iteration},
          {"type", r.type},                     {"payload", r.payload}, {"meta", r.meta}};
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::Io, "cannot open history file " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty())
      lines.push_back(line);
  return lines;
}

HistoryRecord parse_record(const std::string &line, std::size_t lineno, const std::filesystem::path &path) {
  const auto where = path.string() + ":" + std::to_string(lineno);
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::Syntax, where + ": not a JSON object");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kHistorySchemaVersion)
    throw Error(ErrorCode::SchemaVersion,
                where + ": expected schema_version " + std::to_string(kHistorySchemaVersion));
  try {
    HistoryRecord r;
    r.seq = j.at("seq").get<long long>();
    r.iteration = j.at("iteration").get<int>();
    r.type = j.at("type").get<std::string>();
    r.payload = j.at("payload");
    r.meta = j.contains("meta") ? j["meta"] : nlohmann::json::object();
    return r;
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::MissingField, where + ": " + e.what());
  }
}

} // namespace

std::vector<HistoryRecord> read_history(const std::filesystem::path &path) {
  const auto lines = read_lines(path);
  std::vector<HistoryRecord> out;
  for (std::size_t i = 0; i < lines.size(); ++i)
    out.push_back(parse_record(lines[i], i + 1, path));
  return out;
}

std::string history_without_meta(const std::filesystem::path &path) {
  std::string out;
  for (const auto &line : read_lines(path)) {
    auto j = nlohmann::json::parse(line);
    j.erase("meta");
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Orchestrator

struct Orchestrator::Log {
  std::ofstream out;
};

Orchestrator::Orchestrator(RunConfig cfg, bool resume) : Orchestrator(cfg, AgentSet{}, resume) {}

Orchestrator::Orchestrator(RunConfig cfg, AgentSet agents, bool resume)
    : cfg_(std::move(cfg)), log_(std::make_unique<Log>()) {
  cfg_.validate();
  kernel_ = load_kernel(cfg_.kernel);
  summary_ = summarize(kernel_);
  coeffs_ = load_cost_coeffs(cfg_.cost_coeffs ? *cfg_.cost_coeffs : default_cost_coeffs_path());
  agents_ = std::move(agents);
  if (!agents_.proposer || !agents_.fixer || !agents_.coarse_judge || !agents_.fine_judge) {
    AgentSet defaults = make_agents(cfg_, kernel_);
    if (!agents_.proposer)
      agents_.proposer = std::move(defaults.proposer);
    if (!agents_.fixer)
      agents_.fixer = std::move(defaults.fixer);
    if (!agents_.coarse_judge)
      agents_.coarse_judge = std::move(defaults.coarse_judge);
    if (!agents_.fine_judge)
      agents_.fine_judge = std::move(defaults.fine_judge);
  }

  std::error_code ec;
  std::filesystem::create_directories(cfg_.output_dir, ec);
  if (ec)
    throw Error(ErrorCode::Io, "cannot create output directory " + cfg_.output_dir.string() + ": " + ec.message());
  const auto path = cfg_.output_dir / "history.jsonl";

  if (resume && std::filesystem::exists(path)) {
    auto lines = read_lines(path);
    std::vector<HistoryRecord> records;
    std::size_t keep = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      records.push_back(parse_record(lines[i], i + 1, path));
      if (records.back().type == "iteration_end")
        keep = i + 1;
    }
    if (records.empty() || records.front().type != "run_start")
      throw Error(ErrorCode::Config, path.string() + " does not start with a run_start record");
    if (records.front().payload.at("config") != run_identity(cfg_))
      throw Error(ErrorCode::Config, "cannot resume " + path.string() + ": it was written for a different configuration");
    if (keep == 0)
      keep = 1; // only the run_start record survives
    lines.resize(keep);
    records.resize(keep);
    replay(records);
    seq_ = records.back().seq + 1;
    std::ofstream rewrite(path, std::ios::trunc);
    for (const auto &l : lines)
      rewrite << l << '\n';
    rewrite.close();
    log_->out.open(path, std::ios::app);
    log().info("resuming {} after iteration {}", path.string(), records_.size());
  } else {
    log_->out.open(path, std::ios::trunc);
    if (!log_->out)
      throw Error(ErrorCode::Io, "cannot write " + path.string());
    append(0, "run_start", {{"config", run_identity(cfg_)}, {"kernel", kernel_summary_to_json(summary_)}});
  }
}

Orchestrator::~Orchestrator() = default;

void Orchestrator::append(int iteration, const std::string &type, nlohmann::json payload) {
  HistoryRecord r;
  r.seq = seq_++;
  r.iteration = iteration;
  r.type = type;
  r.payload = std::move(payload);
  r.meta = {{"timestamp", utc_timestamp()}};
  log_->out << history_record_to_json(r).dump() << '\n';
  log_->out.flush();
}

void Orchestrator::replay(const std::vector<HistoryRecord> &records) {
  std::vector<HistoryEntry> pending;
  for (const HistoryRecord &r : records) {
    if (r.type == "eval" || r.type == "fix_failure") {
      pending.push_back(history_entry_from_json(r.payload.at("entry")));
    } else if (r.type == "selection_step") {
      const TraceEntry t = trace_entry_from_json(r.payload.at("trace"));
      selection_.trace.push_back(t);
      selection_.conf = t.conf;
      selection_.iteration = t.iteration;
      history_.trace.push_back(t);
      if (r.payload.contains("lesson") && !r.payload["lesson"].is_null())
        agents_.fine_judge->learn(lesson_from_json(r.payload["lesson"]));
    } else if (r.type == "iteration_end") {
      history_.append_iteration(std::move(pending));
      pending.clear();
      const IterationRecord rec = iteration_record_from_json(r.payload.at("record"));
      proposed_total_ += rec.proposed;
      mapped_initial_total_ += rec.mapped_initial;
      mapped_after_fix_total_ += rec.mapped_after_fix;
      records_.push_back(rec);
    }
  }
}

IterationRecord Orchestrator::run_iteration() {
  if (done())
    throw Error(ErrorCode::InvalidArgument, "iteration budget of " + std::to_string(cfg_.num_iterations) + " is used up");
  const int it = next_iteration();
  IterationRecord rec;
  rec.iteration = it;

  // Stage 1.
  ProposalRequest req;
  req.kernel = summary_;
  req.objective = cfg_.objective;
  req.window = history_.window(it - 1, cfg_.history_window);
  if (const HistoryEntry *b = history_.best_feasible() ? history_.best_feasible() : history_.best_evaluated())
    req.best = *b;
  req.count = cfg_.proposals;
  req.space = cfg_.space;
  req.iteration = it;
  std::vector<DesignPoint> drafts = agents_.proposer->propose(req);
  if (drafts.size() > static_cast<std::size_t>(cfg_.proposals))
    drafts.resize(static_cast<std::size_t>(cfg_.proposals));
  for (std::size_t j = 0; j < drafts.size(); ++j) {
    drafts[j].id = design_id(it, j);
    drafts[j].provenance = Provenance::Proposed;
    append(it, "proposal", {{"design_id", drafts[j].id}, {"design", design_to_json(drafts[j])}, {"note", drafts[j].note}});
  }
  rec.proposed = static_cast<int>(drafts.size());

  // Stage 2.
  struct Slot {
    CheckResult initial;
    std::optional<FixOutcome> fix;
  };
  std::vector<Slot> slots(drafts.size());
  parallel_for(drafts.size(), cfg_.parallelism, [&](std::size_t j) {
    slots[j].initial = check_design(drafts[j], kernel_, cfg_.map_budget);
    if (!slots[j].initial.mapping)
      slots[j].fix = fix_design(drafts[j], *slots[j].initial.diagnosis, *agents_.fixer, kernel_,
                                cfg_.map_budget, cfg_.max_fix_rounds);
  });

  std::vector<HistoryEntry> entries;
  std::vector<Candidate> mapped;
  for (std::size_t j = 0; j < drafts.size(); ++j) {
    const DesignPoint &d = drafts[j];
    Slot &s = slots[j];
    if (s.initial.mapping) {
      append(it, "map_result", {{"design_id", d.id}, {"stage", "initial"}, {"ii", s.initial.mapping->ii},
                                {"schedule_len", s.initial.mapping->schedule_len}});
      mapped.push_back({d, std::move(*s.initial.mapping)});
      ++rec.mapped_initial;
      continue;
    }
    const Diagnosis &diag = *s.initial.diagnosis;
    append(it, diagnosis_event(diag), {{"design_id", d.id}, {"diagnosis", diagnosis_to_json(diag)}});
    if (auto *ok = std::get_if<FixSuccess>(&*s.fix)) {
      append(it, "fix", {{"design_id", d.id}, {"rounds", ok->rounds}, {"design", design_to_json(ok->design)},
                         {"note", ok->design.note}});
      append(it, "map_result", {{"design_id", d.id}, {"stage", "repair"}, {"ii", ok->mapping.ii},
                                {"schedule_len", ok->mapping.schedule_len}});
      mapped.push_back({ok->design, std::move(ok->mapping)});
    } else {
      const auto &fail = std::get<FixFailure>(*s.fix);
      HistoryEntry e{it, fail.last, TerminalFailure{diagnosis_code(fail.error), describe(fail.error)}};
      e.design.id = d.id;
      append(it, "fix_failure", {{"design_id", d.id}, {"rounds", fail.rounds},
                                 {"diagnosis", diagnosis_to_json(fail.error)}, {"entry", history_entry_to_json(e)}});
      entries.push_back(std::move(e));
    }
  }
  rec.mapped_after_fix = static_cast<int>(mapped.size());

  auto finish = [&] {
    history_.append_iteration(std::move(entries));
    if (const HistoryEntry *b = history_.best_feasible())
      rec.best_score = b->report()->score;
    rec.best_efficiency = history_.best_feasible_efficiency();
    append(it, "iteration_end", {{"record", iteration_record_to_json(rec)}});
    proposed_total_ += rec.proposed;
    mapped_initial_total_ += rec.mapped_initial;
    mapped_after_fix_total_ += rec.mapped_after_fix;
    records_.push_back(rec);
    return rec;
  };

  if (mapped.empty()) {
    rec.failed = true;
    log().warn("iteration {}: no candidate survived validation and repair", it);
    append(it, "iteration_failed", {{"reason", "ITERATION_EMPTY"}});
    return finish();
  }

  // Stage 3.
  const auto top = agents_.coarse_judge->top_k(mapped, kernel_, cfg_.objective, cfg_.top_k);
  auto in_top = [&](const std::string &id) {
    return std::any_of(top.begin(), top.end(), [&](const Candidate &c) { return c.design.id == id; });
  };
  for (const Candidate &c : mapped)
    if (!in_top(c.design.id))
      append(it, "screened", {{"design_id", c.design.id}, {"stage", "coarse"}});

  CostTool tool(kernel_, cfg_.objective, coeffs_);
  StepOutcome step = select_step(top, selection_, cfg_.selection, tool, *agents_.fine_judge);
  const TraceEntry &trace = selection_.trace.back();
  history_.trace.push_back(trace);
  nlohmann::json ids = nlohmann::json::array();
  for (const Candidate &c : top)
    ids.push_back(c.design.id);
  nlohmann::json lesson = nullptr;
  if (trace.mode == SelectionMode::Tool && !agents_.fine_judge->lessons().empty())
    lesson = lesson_to_json(agents_.fine_judge->lessons().back());
  append(it, "selection_step", {{"candidates", ids}, {"trace", trace_entry_to_json(trace)}, {"lesson", lesson}});
  rec.chosen = step.final_choice;
  rec.mode = std::string(to_string(trace.mode));

  // Stage 4.
  std::vector<EvalReport> reports = std::move(step.reports);
  if (reports.empty()) {
    for (const Candidate &c : top) {
      if (c.design.id == step.final_choice)
        reports.push_back(evaluate_design(c, kernel_, cfg_.objective, coeffs_));
      else
        append(it, "screened", {{"design_id", c.design.id}, {"stage", "fine"}});
    }
  }
  for (const EvalReport &r : reports) {
    const Candidate &c = *std::find_if(top.begin(), top.end(),
                                       [&](const Candidate &x) { return x.design.id == r.design_id; });
    HistoryEntry e{it, c.design, r};
    append(it, "eval", {{"design_id", r.design_id}, {"source", rec.mode}, {"entry", history_entry_to_json(e)}});
    entries.push_back(std::move(e));
  }
  return finish();
}

RunMetrics Orchestrator::metrics() const {
  RunMetrics m;
  m.kernel = kernel_.name;
  m.objective = cfg_.objective;
  m.iterations = records_;
  m.sr1 = proposed_total_ ? double(mapped_initial_total_) / proposed_total_ : 0.0;
  m.sr2 = proposed_total_ ? double(mapped_after_fix_total_) / proposed_total_ : 0.0;
  if (const HistoryEntry *b = history_.best_feasible()) {
    m.chosen = *b;
    m.feasible = true;
  } else if (const HistoryEntry *b2 = history_.best_evaluated()) {
    m.chosen = *b2;
  }
  for (const TraceEntry &t : selection_.trace)
    (t.mode == SelectionMode::Tool ? m.tool_steps : m.llm_steps) += 1;
  m.final_conf = selection_.conf;
  return m;
}

RunResult run(const RunConfig &cfg, bool resume) { return run(cfg, AgentSet{}, resume); }

RunResult run(const RunConfig &cfg, AgentSet agents, bool resume) {
  Orchestrator o(cfg, std::move(agents), resume);
  while (!o.done()) {
    const IterationRecord r = o.run_iteration();
    log().info("iteration {}: sr1 {:.2f} sr2 {:.2f} chosen {} best {}", r.iteration, r.sr1(), r.sr2(),
               r.chosen.empty() ? "-" : r.chosen,
               r.best_score ? fmt::format("{:.6g}", *r.best_score) : std::string("-"));
  }
  RunResult out;
  out.metrics = o.metrics();
  out.history_path = cfg.output_dir / "history.jsonl";
  out.metrics_path = cfg.output_dir / "metrics.json";
  nlohmann::json mj = run_metrics_to_json(out.metrics);
  mj["config"] = run_config_to_json(cfg);
  std::ofstream(out.metrics_path) << mj.dump(2) << '\n';
  if (out.metrics.feasible) {
    out.design_path = cfg.output_dir / "design.json";
    std::ofstream(*out.design_path) << serialize_design(out.metrics.chosen->design);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

HistoryReport report_history(const std::vector<HistoryRecord> &records) {
  HistoryReport rep;
  History h;
  std::vector<HistoryEntry> pending;
  IterationRecord cur;
  bool any_end = false;
  for (const HistoryRecord &r : records) {
    if (r.type == "proposal") {
      ++cur.proposed;
    } else if (r.type == "map_result") {
      const bool initial = r.payload.at("stage").get<std::string>() == "initial";
      cur.mapped_initial += initial;
      cur.mapped_after_fix += 1;
    } else if (r.type == "iteration_failed") {
      cur.failed = true;
    } else if (r.type == "selection_step") {
      const auto t = trace_entry_from_json(r.payload.at("trace"));
      cur.chosen = t.final_choice;
      cur.mode = std::string(to_string(t.mode));
    } else if (r.type == "eval" || r.type == "fix_failure") {
      pending.push_back(history_entry_from_json(r.payload.at("entry")));
    } else if (r.type == "iteration_end") {
      cur.iteration = r.iteration;
      h.append_iteration(std::move(pending));
      pending.clear();
      if (const HistoryEntry *b = h.best_feasible())
        cur.best_score = b->report()->score;
      cur.best_efficiency = h.best_feasible_efficiency();
      rep.proposed += cur.proposed;
      rep.mapped_initial += cur.mapped_initial;
      rep.mapped_after_fix += cur.mapped_after_fix;
      rep.iterations.push_back(cur);
      cur = IterationRecord{};
      any_end = true;
    }
  }
  if (!any_end)
    throw Error(ErrorCode::Config, "history holds no completed iteration");
  if (const HistoryEntry *b = h.best_feasible()) {
    rep.chosen = *b;
    rep.feasible = true;
  } else if (const HistoryEntry *b2 = h.best_evaluated()) {
    rep.chosen = *b2;
  }
  return rep;
}

std::string report_csv(const HistoryReport &r) {
  std::ostringstream out;
  out << "iteration,best_score,best_power_efficiency,sr1,sr2\n";
  auto cell = [](const std::optional<double> &v) { return v ? nlohmann::json(*v).dump() : std::string(); };
  for (const auto &it : r.iterations)
    out << it.iteration << ',' << cell(it.best_score) << ',' << cell(it.best_efficiency) << ','
        << nlohmann::json(it.sr1()).dump() << ',' << nlohmann::json(it.sr2()).dump() << '\n';
  return out.str();
}

} // namespace malta
