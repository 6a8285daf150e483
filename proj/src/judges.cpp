#include <algorithm>
#include <cmath>
#include <numeric>

#include "malta/agents.hpp"
#include "malta/error.hpp"
#include "malta/log.hpp"

namespace malta {

double structural_wiring(Topology t) {
  switch (t) {
  case Topology::Mesh: return 1.0;
  case Topology::KingMesh: return 1.5;
  case Topology::Crossbar: return 2.0;
  }
  return 1.0;
}

Proxy proxy_of(const Candidate &c, const KernelGraph &original, const Objective &obj) {
  if (!c.mapping)
    throw Error(ErrorCode::EvalOnUnmapped, "candidate " + c.design.id + " has no mapping");
  const auto &f = c.design.fabric;
  Proxy p;
  p.speedup = speedup(original, *c.mapping, trip_after_transforms(original, c.design.sw));
  p.power = static_cast<double>(f.tile_count()) * static_cast<double>(f.fu_kinds.size()) *
            structural_wiring(f.topology);
  p.value = p.speedup / p.power;
  p.feasible = p.speedup >= obj.min_speedup;
  return p;
}

std::vector<Candidate> HeuristicCoarseJudge::top_k(std::span<const Candidate> candidates,
                                                   const KernelGraph &original, const Objective &obj,
                                                   int k) {
  if (k < 1)
    throw Error(ErrorCode::InvalidArgument, "top_k needs k >= 1");
  std::vector<Proxy> proxies;
  for (const Candidate &c : candidates)
    proxies.push_back(proxy_of(c, original, obj));
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (proxies[a].feasible != proxies[b].feasible)
      return proxies[a].feasible;
    if (proxies[a].value != proxies[b].value)
      return proxies[a].value > proxies[b].value;
    return candidates[a].design.id < candidates[b].design.id;
  });
  order.resize(std::min(order.size(), static_cast<std::size_t>(k)));
  std::vector<Candidate> out;
  for (std::size_t i : order)
    out.push_back(candidates[i]);
  return out;
}

std::vector<Candidate> LlmCoarseJudge::top_k(std::span<const Candidate> candidates,
                                             const KernelGraph &original, const Objective &obj,
                                             int k) {
  auto ranked = fallback_.top_k(candidates, original, obj, static_cast<int>(candidates.size()));
  if (candidates.size() <= static_cast<std::size_t>(k) || candidates.empty())
    return ranked;

  std::vector<std::string> ids;
  try {
    std::string lines;
    for (const Candidate &c : candidates) {
      const Proxy p = proxy_of(c, original, obj);
      lines += candidate_summary(c) + " speedup=" + nlohmann::json(p.speedup).dump() + "\n";
    }
    const auto messages = render_prompt(
        "coarse_judge", {{"k", std::to_string(k)},
                         {"objective", std::string(to_string(obj.mode))},
                         {"min_speedup", nlohmann::json(obj.min_speedup).dump()},
                         {"kernel", kernel_summary_to_json(summarize(original)).dump()},
                         {"candidates", lines}});
    auto payload = extract_json_payload(transport_->complete(messages));
    if (payload && payload->is_object() && payload->contains("ranking"))
      payload = (*payload)["ranking"];
    if (payload && payload->is_array())
      for (const auto &v : *payload)
        if (v.is_string())
          ids.push_back(v.get<std::string>());
    if (ids.empty())
      log().warn("coarse judge: reply carried no ranking, using proxy order");
  } catch (const Error &e) {
    log().warn("coarse judge: falling back to proxy order: {}", e.what());
  }

  std::vector<Candidate> out;
  auto taken = [&](const std::string &id) {
    return std::any_of(out.begin(), out.end(), [&](const Candidate &c) { return c.design.id == id; });
  };
  for (const auto &id : ids) {
    if (out.size() == static_cast<std::size_t>(k))
      break;
    auto it = std::find_if(ranked.begin(), ranked.end(), [&](const Candidate &c) { return c.design.id == id; });
    if (it != ranked.end() && !taken(id))
      out.push_back(*it);
  }
  for (const Candidate &c : ranked) {
    if (out.size() == static_cast<std::size_t>(k))
      break;
    if (!taken(c.design.id))
      out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json lesson_to_json(const Lesson &l) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto &c : l.candidates)
    cands.push_back({{"id", c.id},
                     {"summary", c.summary},
                     {"features", c.features},
                     {"proxy_power", c.proxy_power},
                     {"speedup", c.speedup},
                     {"tool_power", c.tool_power},
                     {"tool_score", c.tool_score}});
  return {{"candidates", cands},
          {"tool_choice", l.tool_choice},
          {"judge_choice", l.judge_choice},
          {"correct", l.correct}};
}

Lesson lesson_from_json(const nlohmann::json &j) {
  Lesson l;
  for (const auto &c : j.at("candidates"))
    l.candidates.push_back({c.at("id").get<std::string>(), c.at("summary").get<std::string>(),
                            c.at("features").get<std::vector<double>>(), c.at("proxy_power").get<double>(),
                            c.at("speedup").get<double>(), c.at("tool_power").get<double>(),
                            c.at("tool_score").get<double>()});
  l.tool_choice = j.at("tool_choice").get<std::string>();
  l.judge_choice = j.at("judge_choice").get<std::string>();
  l.correct = j.at("correct").get<bool>();
  return l;
}

void FineJudge::update(std::span<const Candidate> k_designs, std::span<const EvalReport> reports) {
  learn(make_lesson(k_designs, reports));
}

namespace {

double dot(const std::vector<double> &a, const std::vector<double> &b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
    s += a[i] * b[i];
  return s;
}

/// Solves (A + ridge I) x = b by Gaussian elimination with partial pivoting.
std::vector<double> solve_ridge(std::vector<std::vector<double>> a, std::vector<double> b, double ridge) {
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < n; ++i)
    a[i][i] += ridge;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col]))
        pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c)
        a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c)
      s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

} // namespace

HeuristicFineJudge::HeuristicFineJudge(KernelGraph original, Objective obj)
    : original_(std::move(original)), obj_(obj), weights_(kFeatureCount, 0.0) {}

std::vector<double> HeuristicFineJudge::features(const Candidate &c) {
  const auto &f = c.design.fabric;
  const double tiles = f.tile_count() / 16.0;
  const double wired = tiles * structural_wiring(f.topology);
  const double lanes = c.design.sw.vectorize_factor;
  const double activity =
      c.mapping ? static_cast<double>(c.mapping->placements.size()) / c.mapping->ii : 0.0;
  std::vector<double> x = {1.0,
                           tiles,
                           wired,
                           tiles * f.config_mem_depth / 10.0,
                           wired * f.config_mem_depth / 10.0,
                           activity * lanes / 10.0,
                           wired * static_cast<double>(f.fu_kinds.size()) * (lanes - 1) / 4.0};
  for (FuKind k : kAllFuKinds) {
    x.push_back(f.fu_kinds.contains(k) ? tiles : 0.0);
    x.push_back(f.fu_kinds.contains(k) ? wired : 0.0);
  }
  return x;
}

double HeuristicFineJudge::predicted_power(const Candidate &c) const {
  const double proxy = static_cast<double>(c.design.fabric.tile_count()) *
                       static_cast<double>(c.design.fabric.fu_kinds.size()) *
                       structural_wiring(c.design.fabric.topology);
  return std::max(proxy + dot(weights_, features(c)), 1e-9);
}

Pick HeuristicFineJudge::select(std::span<const Candidate> k_designs) {
  if (k_designs.empty())
    throw Error(ErrorCode::EmptyCandidateSet, "judge needs at least one candidate");
  Pick best;
  bool first = true;
  for (const Candidate &c : k_designs) {
    const Proxy p = proxy_of(c, original_, obj_);
    const double score = objective_score(obj_, p.speedup, predicted_power(c));
    if (first || score < best.score || (score == best.score && c.design.id < best.choice)) {
      best = {c.design.id, score};
      first = false;
    }
  }
  last_choice_ = best.choice;
  return best;
}

Lesson HeuristicFineJudge::make_lesson(std::span<const Candidate> k_designs,
                                       std::span<const EvalReport> reports) const {
  Lesson l;
  for (const Candidate &c : k_designs) {
    auto r = std::find_if(reports.begin(), reports.end(),
                          [&](const EvalReport &x) { return x.design_id == c.design.id; });
    if (r == reports.end())
      continue;
    const Proxy p = proxy_of(c, original_, obj_);
    l.candidates.push_back(
        {c.design.id, candidate_summary(c), features(c), p.power, p.speedup, r->power_mw, r->score});
  }
  l.tool_choice = reports.empty() ? "" : tool_select(reports).choice;
  l.judge_choice = last_choice_;
  l.correct = l.tool_choice == l.judge_choice;
  return l;
}

void HeuristicFineJudge::learn(const Lesson &lesson) {
  lessons_.push_back(lesson);
  while (lessons_.size() > kLessonCapacity)
    lessons_.pop_front();

  // Refit from scratch so the weights depend only on the stored lessons.
  std::vector<std::vector<double>> gram(kFeatureCount, std::vector<double>(kFeatureCount, 0.0));
  std::vector<double> rhs(kFeatureCount, 0.0);
  for (const Lesson &l : lessons_)
    for (const LessonCandidate &c : l.candidates) {
      if (c.features.size() != kFeatureCount)
        continue;
      const double residual = c.tool_power - c.proxy_power;
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        rhs[i] += c.features[i] * residual;
        for (std::size_t j = 0; j < kFeatureCount; ++j)
          gram[i][j] += c.features[i] * c.features[j];
      }
    }
  weights_ = solve_ridge(std::move(gram), std::move(rhs), kRidge);
}

// ---------------------------------------------------------------------------

LlmFineJudge::LlmFineJudge(std::shared_ptr<ChatTransport> transport, KernelGraph original, Objective obj,
                           int lessons_in_prompt)
    : transport_(std::move(transport)), twin_(original, obj), original_(std::move(original)), obj_(obj),
      lessons_in_prompt_(lessons_in_prompt) {}

Pick LlmFineJudge::select(std::span<const Candidate> k_designs) {
  const Pick fallback = twin_.select(k_designs);
  Pick out = fallback;
  try {
    std::string lines;
    for (const Candidate &c : k_designs) {
      const Proxy p = proxy_of(c, original_, obj_);
      lines += candidate_summary(c) + " speedup=" + nlohmann::json(p.speedup).dump() + "\n";
    }
    std::string lessons;
    const auto &store = twin_.lessons();
    const std::size_t skip =
        store.size() > static_cast<std::size_t>(lessons_in_prompt_) ? store.size() - lessons_in_prompt_ : 0;
    for (std::size_t i = skip; i < store.size(); ++i)
      lessons += lesson_to_json(store[i]).dump() + "\n";
    const auto messages =
        render_prompt("fine_judge", {{"objective", std::string(to_string(obj_.mode))},
                                     {"min_speedup", nlohmann::json(obj_.min_speedup).dump()},
                                     {"candidates", lines},
                                     {"lessons", lessons.empty() ? "(none yet)\n" : lessons}});
    const auto payload = extract_json_payload(transport_->complete(messages));
    const bool ok = payload && payload->is_object() && payload->contains("choice") &&
                    (*payload)["choice"].is_string() && payload->contains("score") &&
                    (*payload)["score"].is_number();
    if (ok) {
      const auto id = (*payload)["choice"].get<std::string>();
      if (std::any_of(k_designs.begin(), k_designs.end(), [&](const Candidate &c) { return c.design.id == id; }))
        out = {id, (*payload)["score"].get<double>()};
      else
        log().warn("fine judge: model chose unknown id '{}', using heuristic pick", id);
    } else {
      log().warn("fine judge: reply lacked choice/score, using heuristic pick");
    }
  } catch (const Error &e) {
    log().warn("fine judge: falling back to heuristic pick: {}", e.what());
  }
  last_choice_ = out.choice;
  return out;
}

Lesson LlmFineJudge::make_lesson(std::span<const Candidate> k_designs,
                                 std::span<const EvalReport> reports) const {
  Lesson l = twin_.make_lesson(k_designs, reports);
  l.judge_choice = last_choice_;
  l.correct = l.tool_choice == l.judge_choice;
  return l;
}

} // namespace malta
