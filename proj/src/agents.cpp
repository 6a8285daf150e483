#include "malta/agents.hpp"

#include <algorithm>
#include <cctype>

#include "json_util.hpp"
#include "malta/error.hpp"

namespace malta {

std::string_view to_string(BackendKind k) { return k == BackendKind::Heuristic ? "heuristic" : "llm"; }

BackendKind parse_backend_kind(std::string_view token) {
  std::string t(token);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "heuristic")
    return BackendKind::Heuristic;
  if (t == "llm")
    return BackendKind::Llm;
  throw Error(ErrorCode::UnknownEnum, "unknown backend '" + std::string(token) + "' (heuristic|llm)");
}

KernelSummary summarize(const KernelGraph &k) {
  KernelSummary s;
  s.name = k.name;
  s.trip_count = k.trip_count;
  s.nodes = static_cast<int>(k.nodes.size());
  s.edges = static_cast<int>(k.edges.size());
  s.census = op_census(k);
  s.required = required_kinds(k);
  for (const DfgEdge &e : k.edges)
    if (e.distance > 0)
      s.carried_distances.push_back(e.distance);
  std::sort(s.carried_distances.begin(), s.carried_distances.end());
  s.rec_mii = rec_mii_by_longest_path(k);
  return s;
}

nlohmann::json kernel_summary_to_json(const KernelSummary &s) {
  nlohmann::json census = nlohmann::json::object();
  for (const auto &[kind, n] : s.census)
    census[std::string(to_string(kind))] = n;
  return {{"name", s.name},
          {"trip_count", s.trip_count},
          {"nodes", s.nodes},
          {"edges", s.edges},
          {"op_census", census},
          {"carried_distances", s.carried_distances},
          {"rec_mii", s.rec_mii}};
}

// ---------------------------------------------------------------------------

void DesignSpace::validate() const {
  auto fail = [](const std::string &m) { throw Error(ErrorCode::Config, "design space: " + m); };
  if (min_dim < 1 || max_dim > bounds::kMaxGridDim || min_dim > max_dim)
    fail("need 1 <= min_dim <= max_dim <= " + std::to_string(bounds::kMaxGridDim));
  if (min_depth < 1 || min_depth > max_depth)
    fail("need 1 <= min_depth <= max_depth");
  if (max_unroll < 1 || max_unroll > bounds::kMaxUnroll)
    fail("max_unroll outside [1, " + std::to_string(bounds::kMaxUnroll) + "]");
  if (max_vectorize < 1 || max_vectorize > bounds::kMaxVectorize)
    fail("max_vectorize outside [1, " + std::to_string(bounds::kMaxVectorize) + "]");
  if (max_data_mem_kb < 0)
    fail("max_data_mem_kb must be >= 0");
}

DesignPoint DesignSpace::clamp(DesignPoint d) const {
  d.fabric.rows = std::clamp(d.fabric.rows, min_dim, max_dim);
  d.fabric.cols = std::clamp(d.fabric.cols, min_dim, max_dim);
  d.fabric.config_mem_depth = std::clamp(d.fabric.config_mem_depth, min_depth, max_depth);
  d.fabric.data_mem_kb = std::clamp(d.fabric.data_mem_kb, 0, max_data_mem_kb);
  d.sw.unroll_factor = std::clamp(d.sw.unroll_factor, 1, max_unroll);
  d.sw.vectorize_factor = std::clamp(d.sw.vectorize_factor, 1, max_vectorize);
  return d;
}

bool DesignSpace::contains(const DesignPoint &d) const {
  DesignPoint c = clamp(d);
  return c.same_parameters(d);
}

nlohmann::json design_space_to_json(const DesignSpace &s) {
  return {{"min_dim", s.min_dim},       {"max_dim", s.max_dim},
          {"min_depth", s.min_depth},   {"max_depth", s.max_depth},
          {"max_unroll", s.max_unroll}, {"max_vectorize", s.max_vectorize},
          {"max_data_mem_kb", s.max_data_mem_kb}};
}

DesignSpace design_space_from_json(const nlohmann::json &j) {
  using namespace detail;
  constexpr std::string_view what = "design space";
  reject_unknown_keys(j,
                      {"min_dim", "max_dim", "min_depth", "max_depth", "max_unroll",
                       "max_vectorize", "max_data_mem_kb"},
                      what);
  DesignSpace s;
  auto read = [&](const char *key, int &field) {
    if (j.contains(key))
      field = static_cast<int>(get_integer(j[key], key, what));
  };
  read("min_dim", s.min_dim);
  read("max_dim", s.max_dim);
  read("min_depth", s.min_depth);
  read("max_depth", s.max_depth);
  read("max_unroll", s.max_unroll);
  read("max_vectorize", s.max_vectorize);
  read("max_data_mem_kb", s.max_data_mem_kb);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

nlohmann::json history_entry_to_json(const HistoryEntry &e) {
  nlohmann::json j = {{"iteration", e.iteration},
                      {"design_id", e.design.id},
                      {"provenance", std::string(to_string(e.design.provenance))},
                      {"design", design_to_json(e.design)}};
  if (const EvalReport *r = e.report())
    j["report"] = report_to_json(*r);
  else {
    const auto &f = std::get<TerminalFailure>(e.outcome);
    j["failure"] = {{"code", f.code}, {"detail", f.detail}};
  }
  return j;
}

HistoryEntry history_entry_from_json(const nlohmann::json &j) {
  HistoryEntry e;
  e.iteration = j.at("iteration").get<int>();
  e.design = design_from_json(j.at("design"), j.at("design_id").get<std::string>());
  e.design.provenance =
      j.at("provenance").get<std::string>() == "REPAIRED" ? Provenance::Repaired : Provenance::Proposed;
  if (j.contains("report"))
    e.outcome = report_from_json(j["report"]);
  else
    e.outcome = TerminalFailure{j.at("failure").at("code").get<std::string>(),
                                j.at("failure").at("detail").get<std::string>()};
  return e;
}

void History::append_iteration(std::vector<HistoryEntry> entries) {
  std::sort(entries.begin(), entries.end(), [](const HistoryEntry &a, const HistoryEntry &b) {
    return std::tie(a.iteration, a.design.id) < std::tie(b.iteration, b.design.id);
  });
  if (!entries.empty() && !entries_.empty() && entries.front().iteration < entries_.back().iteration)
    throw Error(ErrorCode::InvalidArgument, "history entries must not go back in iteration");
  for (auto &e : entries)
    entries_.push_back(std::move(e));
}

const HistoryEntry *History::best_feasible() const {
  const HistoryEntry *best = nullptr;
  for (const auto &e : entries_) {
    const EvalReport *r = e.report();
    if (r && r->feasible && (!best || r->score < best->report()->score))
      best = &e;
  }
  return best;
}

const HistoryEntry *History::best_evaluated() const {
  const HistoryEntry *best = nullptr;
  for (const auto &e : entries_) {
    const EvalReport *r = e.report();
    if (r && (!best || r->score < best->report()->score))
      best = &e;
  }
  return best;
}

std::optional<double> History::best_feasible_efficiency() const {
  std::optional<double> best;
  for (const auto &e : entries_) {
    const EvalReport *r = e.report();
    if (r && r->feasible && (!best || r->power_efficiency > *best))
      best = r->power_efficiency;
  }
  return best;
}

std::vector<HistoryEntry> History::window(int last_iteration, int n) const {
  std::vector<HistoryEntry> out;
  for (const auto &e : entries_)
    if (e.iteration > last_iteration - n && e.iteration <= last_iteration)
      out.push_back(e);
  return out;
}

std::string candidate_summary(const Candidate &c) {
  const auto &f = c.design.fabric;
  std::string kinds;
  for (FuKind k : f.fu_kinds.kinds())
    kinds += (kinds.empty() ? "" : ",") + std::string(to_string(k));
  std::string s = c.design.id + ": " + std::to_string(f.rows) + "x" + std::to_string(f.cols) + " " +
                  std::string(to_string(f.topology)) + " fu=[" + kinds + "] depth=" +
                  std::to_string(f.config_mem_depth) + " mem=" + std::to_string(f.data_mem_kb) +
                  "KB unroll=" + std::to_string(c.design.sw.unroll_factor) +
                  " vectorize=" + std::to_string(c.design.sw.vectorize_factor);
  if (c.mapping)
    s += " ii=" + std::to_string(c.mapping->ii) + " len=" + std::to_string(c.mapping->schedule_len);
  return s;
}

} // namespace malta
