#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "malta/agents.hpp"
#include "malta/arch.hpp"
#include "malta/costs.hpp"
#include "malta/error.hpp"
#include "malta/kernel.hpp"
#include "malta/log.hpp"
#include "malta/mapper.hpp"
#include "malta/orchestrate.hpp"
#include "malta/select.hpp"

namespace malta::cli {

namespace {

int exit_for(ErrorCode code) {
  switch (code) {
  case ErrorCode::NonDivisibleFactor:
  case ErrorCode::CarriedDepBlocksVectorization:
  case ErrorCode::OutOfGrid:
    return kDomain;
  case ErrorCode::EvalOnUnmapped:
  case ErrorCode::EmptyCandidateSet:
  case ErrorCode::Transport:
    return kInternal;
  default:
    return kConfig;
  }
}

std::string read_text(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void print_violations(std::ostream &os, const std::vector<StructuralViolation> &v) {
  for (const auto &x : v)
    os << fmt::format("  {:<20} {:<18} {}\n", to_string(x.code), x.field, x.message);
}

nlohmann::json violations_json(const std::vector<StructuralViolation> &v) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto &x : v)
    list.push_back({{"code", std::string(to_string(x.code))}, {"field", x.field}, {"message", x.message}});
  return list;
}

/// Renders a failed check on `err`. Always a domain failure.
int report_diagnosis(const Diagnosis &diag, bool json, std::ostream &err) {
  if (json)
    err << diagnosis_to_json(diag).dump() << '\n';
  else if (const auto *v = std::get_if<std::vector<StructuralViolation>>(&diag)) {
    err << "design is invalid:\n";
    print_violations(err, *v);
  } else if (const auto *t = std::get_if<TransformFailure>(&diag)) {
    err << to_string(t->code) << ": " << t->message << '\n';
  } else {
    const auto &m = std::get<MapError>(diag);
    err << to_string(m.code) << ": " << m.detail << '\n';
    if (!m.hint.missing_kinds.empty()) {
      err << "  missing kinds:";
      for (FuKind k : m.hint.missing_kinds)
        err << ' ' << to_string(k);
      err << '\n';
    }
    if (m.hint.required_tiles)
      err << "  tiles needed: " << m.hint.required_tiles << '\n';
    if (m.hint.required_ii)
      err << "  smallest mappable ii: " << m.hint.required_ii << '\n';
  }
  return kDomain;
}

DesignPoint load_design(const std::string &path) {
  return parse_design(read_text(path), std::filesystem::path(path).stem().string());
}

std::string fmt_opt(const std::optional<double> &v) { return v ? fmt::format("{:.6g}", *v) : "-"; }

// ---------------------------------------------------------------------------

struct RunFlags {
  std::string config, kernel, objective, backend, output, cost_coeffs;
  std::optional<double> min_speedup;
  std::optional<int> iterations, proposals, top_k, max_ii, parallelism;
  std::optional<long long> seed;
  bool resume = false;
  bool json = false;
};

int cmd_run(const RunFlags &f, std::ostream &out, std::ostream &err) {
  RunConfig cfg;
  if (!f.config.empty())
    cfg = load_run_config(f.config);
  else if (f.kernel.empty())
    throw Error(ErrorCode::Config, "run needs --config or --kernel");
  if (!f.kernel.empty())
    cfg.kernel = f.kernel;
  if (!f.objective.empty())
    cfg.objective.mode = parse_objective_mode(f.objective);
  if (f.min_speedup)
    cfg.objective.min_speedup = *f.min_speedup;
  if (f.iterations)
    cfg.num_iterations = *f.iterations;
  if (f.proposals)
    cfg.proposals = *f.proposals;
  if (f.top_k)
    cfg.top_k = *f.top_k;
  if (f.seed) {
    if (*f.seed < 0)
      throw Error(ErrorCode::Config, "--seed must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(*f.seed);
  }
  if (!f.backend.empty())
    cfg.backends.set_all(parse_backend_kind(f.backend));
  if (!f.output.empty())
    cfg.output_dir = f.output;
  if (f.max_ii)
    cfg.map_budget.max_ii = *f.max_ii;
  if (f.parallelism)
    cfg.parallelism = *f.parallelism;
  if (!f.cost_coeffs.empty())
    cfg.cost_coeffs = f.cost_coeffs;
  cfg.validate();

  const RunResult r = run(cfg, f.resume);
  const RunMetrics &m = r.metrics;
  if (f.json) {
    out << run_metrics_to_json(m).dump(2) << '\n';
  } else {
    out << fmt::format("kernel {}  objective {} (speedup >= {})\n", m.kernel, to_string(m.objective.mode),
                       m.objective.min_speedup);
    out << fmt::format("{:>5} {:>5} {:>5} {:>5} {:>14} {:>14}  {}\n", "iter", "sr1", "sr2", "mode", "best_score",
                       "best_pe", "chosen");
    for (const auto &it : m.iterations)
      out << fmt::format("{:>5} {:>5.2f} {:>5.2f} {:>5} {:>14} {:>14}  {}\n", it.iteration, it.sr1(), it.sr2(),
                         it.failed ? "-" : it.mode, fmt_opt(it.best_score), fmt_opt(it.best_efficiency),
                         it.failed ? "(no candidates)" : it.chosen);
    out << fmt::format("sr1 {:.3f}  sr2 {:.3f}  tool steps {}  judge-only steps {}\n", m.sr1, m.sr2, m.tool_steps,
                       m.llm_steps);
    if (m.chosen && m.chosen->report()) {
      const EvalReport &rep = *m.chosen->report();
      out << fmt::format("chosen {}: speedup {:.4g}  power {:.4g} mW  area {:.4g} kum2  efficiency {:.4g}\n",
                         m.chosen->design.id, rep.speedup, rep.power_mw, rep.area_kum2, rep.power_efficiency);
    }
    out << "artifacts in " << cfg.output_dir.string() << '\n';
  }
  if (!m.feasible) {
    err << "NO_FEASIBLE_DESIGN: no design reached speedup " << m.objective.min_speedup;
    if (m.chosen)
      err << "; best infeasible design is " << m.chosen->design.id << " (see metrics.json)";
    err << '\n';
    return kDomain;
  }
  return kOk;
}

int cmd_validate(const std::string &path, bool json, std::ostream &out, std::ostream &err) {
  const DesignPoint d = load_design(path);
  const auto v = validate_design(d);
  if (json)
    out << nlohmann::json{{"valid", v.empty()}, {"violations", violations_json(v)}}.dump() << '\n';
  else if (v.empty())
    out << "valid\n";
  else {
    out << "invalid: " << v.size() << " violation(s)\n";
    print_violations(out, v);
  }
  if (!v.empty()) {
    if (json)
      err << "design has " << v.size() << " violation(s)\n";
    return kDomain;
  }
  return kOk;
}

struct MapFlags {
  std::string arch, kernel;
  std::optional<int> max_ii;
  std::optional<long long> attempts;
  bool json = false;
};

int cmd_map(const MapFlags &f, std::ostream &out, std::ostream &err) {
  const DesignPoint d = load_design(f.arch);
  const KernelGraph k = load_kernel(f.kernel);
  MapBudget budget;
  if (f.max_ii)
    budget.max_ii = *f.max_ii;
  if (f.attempts)
    budget.attempts_per_ii = *f.attempts;
  if (budget.max_ii < 1 || budget.attempts_per_ii < 1)
    throw Error(ErrorCode::Config, "--max-ii and --attempts must be >= 1");
  const CheckResult r = check_design(d, k, budget);
  if (!r.mapping)
    return report_diagnosis(*r.diagnosis, f.json, err);
  const MappingResult &m = *r.mapping;
  const double s = speedup(k, m, trip_after_transforms(k, d.sw));
  if (f.json) {
    out << nlohmann::json{{"kernel", k.name}, {"design", design_to_json(d)}, {"speedup", s},
                          {"mapping", mapping_to_json(m)}}
               .dump()
        << '\n';
    return kOk;
  }
  const KernelGraph t = apply_sw(k, d.sw);
  out << fmt::format("{} on {}x{} {}: ii {}  schedule length {}  speedup {:.4g}\n", k.name, d.fabric.rows,
                     d.fabric.cols, to_string(d.fabric.topology), m.ii, m.schedule_len, s);
  out << fmt::format("{:>5} {:<6} {:>7} {:>6} {:>5}\n", "node", "kind", "tile", "cycle", "slot");
  for (std::size_t i = 0; i < m.placements.size(); ++i) {
    const Placement &p = m.placements[i];
    out << fmt::format("{:>5} {:<6} {:>7} {:>6} {:>5}\n", p.node, to_string(t.nodes[i].kind),
                       fmt::format("({},{})", p.tile.row, p.tile.col), p.cycle, p.cycle % m.ii);
  }
  return kOk;
}

struct EvalFlags {
  std::string arch, kernel, objective, cost_coeffs;
  std::optional<double> min_speedup;
  bool json = false;
};

int cmd_evaluate(const EvalFlags &f, std::ostream &out, std::ostream &err) {
  const DesignPoint d = load_design(f.arch);
  const KernelGraph k = load_kernel(f.kernel);
  Objective obj;
  if (!f.objective.empty())
    obj.mode = parse_objective_mode(f.objective);
  if (f.min_speedup)
    obj.min_speedup = *f.min_speedup;
  const CostCoeffs coeffs = load_cost_coeffs(f.cost_coeffs.empty() ? default_cost_coeffs_path() : std::filesystem::path(f.cost_coeffs));
  const CheckResult r = check_design(d, k, {});
  if (!r.mapping)
    return report_diagnosis(*r.diagnosis, f.json, err);
  const EvalReport rep = evaluate_design({d, *r.mapping}, k, obj, coeffs);
  if (f.json) {
    out << report_to_json(rep).dump() << '\n';
  } else {
    out << fmt::format("design {}  kernel {}  objective {}\n", rep.design_id, k.name, to_string(obj.mode));
    out << fmt::format("  ii               {}\n", r.mapping->ii);
    out << fmt::format("  speedup          {:.6g}\n", rep.speedup);
    out << fmt::format("  power            {:.6g} mW\n", rep.power_mw);
    out << fmt::format("  area             {:.6g} kum2\n", rep.area_kum2);
    out << fmt::format("  power efficiency {:.6g}\n", rep.power_efficiency);
    out << fmt::format("  score            {:.6g}{}\n", rep.score, rep.feasible ? "" : "  (below speedup floor)");
  }
  return kOk;
}

int cmd_select_sim(const std::string &path, std::ostream &out) {
  const auto script = parse_selection_script(read_text(path));
  out << trace_to_jsonl(simulate_script(script));
  return kOk;
}

int cmd_report(const std::string &path, const std::string &csv_path, bool json, std::ostream &out) {
  const auto records = read_history(path);
  const HistoryReport r = report_history(records);
  const std::string csv = report_csv(r);
  if (!csv_path.empty()) {
    std::ofstream f(csv_path);
    if (!f)
      throw Error(ErrorCode::Io, "cannot write " + csv_path);
    f << csv;
  }
  if (json) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto &it : r.iterations)
      per.push_back(iteration_record_to_json(it));
    out << nlohmann::json{{"schema_version", kMetricsSchemaVersion},
                          {"iterations", per},
                          {"proposed", r.proposed},
                          {"mapped_initial", r.mapped_initial},
                          {"mapped_after_fix", r.mapped_after_fix},
                          {"sr1", r.sr1()},
                          {"sr2", r.sr2()},
                          {"feasible", r.feasible},
                          {"chosen", r.chosen ? history_entry_to_json(*r.chosen) : nlohmann::json(nullptr)}}
               .dump(2)
        << '\n';
    return kOk;
  }
  out << fmt::format("iterations {}  proposals {}  sr1 {:.3f} ({}/{})  sr2 {:.3f} ({}/{})\n", r.iterations.size(),
                     r.proposed, r.sr1(), r.mapped_initial, r.proposed, r.sr2(), r.mapped_after_fix, r.proposed);
  if (r.chosen && r.chosen->report()) {
    const auto &d = r.chosen->design;
    const auto &rep = *r.chosen->report();
    out << fmt::format("chosen {} ({}): {}x{} {} depth {} unroll {} vectorize {}\n", d.id,
                       r.feasible ? "feasible" : "best infeasible", d.fabric.rows, d.fabric.cols,
                       to_string(d.fabric.topology), d.fabric.config_mem_depth, d.sw.unroll_factor,
                       d.sw.vectorize_factor);
    out << fmt::format("  speedup {:.4g}  power {:.4g} mW  area {:.4g} kum2  efficiency {:.4g}  score {:.6g}\n",
                       rep.speedup, rep.power_mw, rep.area_kum2, rep.power_efficiency, rep.score);
  }
  out << '\n' << csv;
  return kOk;
}

int cmd_kernels(bool json, std::ostream &out) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto &name : builtin_kernel_names()) {
    const KernelGraph k = load_kernel(name);
    const KernelSummary s = summarize(k);
    if (json) {
      list.push_back(kernel_summary_to_json(s));
      continue;
    }
    std::string census;
    for (const auto &[kind, n] : s.census)
      census += fmt::format("{}{}x{}", census.empty() ? "" : " ", to_string(kind), n);
    out << fmt::format("{:<18} nodes {:>3}  trip {:>5}  rec_mii {:>2}  {}\n", s.name, s.nodes, s.trip_count,
                       s.rec_mii, census);
  }
  if (json)
    out << list.dump(2) << '\n';
  return kOk;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"malta: closed-loop CGRA hardware/software co-design", "malta"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Expand all help");
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging on stderr");
  app.add_flag("-q,--quiet", quiet, "Only warnings and errors on stderr");

  RunFlags rf;
  auto *run_cmd = app.add_subcommand("run", "Run the design loop for one kernel");
  run_cmd->add_option("-c,--config", rf.config, "Run configuration (JSON)");
  run_cmd->add_option("-k,--kernel", rf.kernel, "Built-in kernel name or kernel file");
  run_cmd->add_option("--objective", rf.objective, "min-power | max-power-efficiency");
  run_cmd->add_option("--min-speedup", rf.min_speedup, "Speedup floor");
  run_cmd->add_option("-n,--iterations", rf.iterations, "Iteration budget");
  run_cmd->add_option("-M,--proposals", rf.proposals, "Proposals per iteration");
  run_cmd->add_option("-K,--top-k", rf.top_k, "Candidates kept by the coarse judge");
  run_cmd->add_option("--seed", rf.seed, "Seed for the heuristic agents");
  run_cmd->add_option("--backend", rf.backend, "heuristic | llm (all agents)");
  run_cmd->add_option("-o,--output", rf.output, "Output directory");
  run_cmd->add_option("--max-ii", rf.max_ii, "Largest II the mapper tries");
  run_cmd->add_option("--parallelism", rf.parallelism, "Concurrent checks / LLM calls");
  run_cmd->add_option("--cost-coeffs", rf.cost_coeffs, "Cost coefficient file");
  run_cmd->add_flag("--resume", rf.resume, "Continue the history in the output directory");
  run_cmd->add_flag("--json", rf.json, "Print RunMetrics as JSON");

  std::string validate_path;
  bool validate_json = false;
  auto *validate_cmd = app.add_subcommand("validate", "Check an architecture file");
  validate_cmd->add_option("arch", validate_path, "Architecture file")->required();
  validate_cmd->add_flag("--json", validate_json, "JSON output");

  MapFlags mf;
  auto *map_cmd = app.add_subcommand("map", "Map a kernel onto an architecture file");
  map_cmd->add_option("arch", mf.arch, "Architecture file")->required();
  map_cmd->add_option("-k,--kernel", mf.kernel, "Built-in kernel name or kernel file")->required();
  map_cmd->add_option("--max-ii", mf.max_ii, "Largest II to try");
  map_cmd->add_option("--attempts", mf.attempts, "Placement attempts per II");
  map_cmd->add_flag("--json", mf.json, "JSON output");

  EvalFlags ef;
  auto *eval_cmd = app.add_subcommand("evaluate", "Map and cost an architecture file");
  eval_cmd->add_option("arch", ef.arch, "Architecture file")->required();
  eval_cmd->add_option("-k,--kernel", ef.kernel, "Built-in kernel name or kernel file")->required();
  eval_cmd->add_option("--objective", ef.objective, "min-power | max-power-efficiency");
  eval_cmd->add_option("--min-speedup", ef.min_speedup, "Speedup floor");
  eval_cmd->add_option("--cost-coeffs", ef.cost_coeffs, "Cost coefficient file");
  eval_cmd->add_flag("--json", ef.json, "JSON output");

  std::string script_path;
  bool sim_json = false;
  auto *sim_cmd = app.add_subcommand("select-sim", "Replay a scripted selection stream; prints the trace as JSONL");
  sim_cmd->add_option("script", script_path, "Selection script")->required();
  sim_cmd->add_flag("--json", sim_json, "Accepted for symmetry; the output is always JSONL");

  std::string history_path, csv_path;
  bool report_json = false;
  auto *report_cmd = app.add_subcommand("report", "Summarise a run history");
  report_cmd->add_option("history", history_path, "history.jsonl")->required();
  report_cmd->add_option("--csv", csv_path, "Also write the per-iteration CSV here");
  report_cmd->add_flag("--json", report_json, "JSON output");

  bool kernels_json = false;
  auto *kernels_cmd = app.add_subcommand("kernels", "List the built-in kernels");
  kernels_cmd->add_flag("--json", kernels_json, "JSON output");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << '\n';
    if (app.get_subcommands().empty())
      err << "run 'malta --help' for usage\n";
    return kConfig;
  }

  if (verbose || quiet)
    log().set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (run_cmd->parsed())
      return cmd_run(rf, out, err);
    if (validate_cmd->parsed())
      return cmd_validate(validate_path, validate_json, out, err);
    if (map_cmd->parsed())
      return cmd_map(mf, out, err);
    if (eval_cmd->parsed())
      return cmd_evaluate(ef, out, err);
    if (sim_cmd->parsed())
      return cmd_select_sim(script_path, out);
    if (report_cmd->parsed())
      return cmd_report(history_path, csv_path, report_json, out);
    if (kernels_cmd->parsed())
      return cmd_kernels(kernels_json, out);
  } catch (const Error &e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_for(e.code());
  } catch (const std::exception &e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}

} // namespace malta::cli
