#include <algorithm>
#include <numeric>
#include <random>

#include "malta/agents.hpp"
#include "malta/error.hpp"
#include "malta/log.hpp"

namespace malta {

namespace {

std::mt19937_64 rng_for(std::uint64_t seed, int iteration) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration)};
  return std::mt19937_64(seq);
}

bool seen(const std::vector<DesignPoint> &out, const DesignPoint &d) {
  return std::any_of(out.begin(), out.end(), [&](const DesignPoint &o) { return o.same_parameters(d); });
}

int pick_stratum(int stratum, int strata, int lo, int hi, double u) {
  const int span = hi - lo + 1;
  const int v = lo + static_cast<int>((stratum + u) / strata * span);
  return std::min(v, hi);
}

FuSet base_kinds(const KernelSummary &k, std::mt19937_64 &rng) {
  FuSet s = k.required;
  s.insert(FuKind::Load);
  s.insert(FuKind::Store);
  std::bernoulli_distribution extra(0.1);
  for (FuKind kind : kAllFuKinds)
    if (extra(rng))
      s.insert(kind);
  return s;
}

/// Design from one stratum per axis of a Latin hypercube with `strata` rows.
DesignPoint sample(const ProposalRequest &req, std::mt19937_64 &rng, int s_tiles, int s_topo,
                   int s_unroll, int s_vec, int strata) {
  const DesignSpace &sp = req.space;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DesignPoint d;
  d.fabric.rows = pick_stratum(s_tiles, strata, sp.min_dim, sp.max_dim, u(rng));
  std::uniform_int_distribution<int> skew(-1, 1);
  d.fabric.cols = std::clamp(d.fabric.rows + skew(rng), sp.min_dim, sp.max_dim);
  d.fabric.topology = kAllTopologies[static_cast<std::size_t>(pick_stratum(s_topo, strata, 0, 2, u(rng)))];
  d.sw.unroll_factor = pick_stratum(s_unroll, strata, 1, sp.max_unroll, u(rng));
  d.sw.vectorize_factor = pick_stratum(s_vec, strata, 1, sp.max_vectorize, u(rng));
  d.fabric.fu_kinds = base_kinds(req.kernel, rng);
  d.fabric.config_mem_depth = std::uniform_int_distribution<int>(sp.min_depth, sp.max_depth)(rng);
  std::vector<int> mems;
  for (int kb : {0, 4, 8, 16, 32, 64})
    if (kb <= sp.max_data_mem_kb)
      mems.push_back(kb);
  d.fabric.data_mem_kb = mems[std::uniform_int_distribution<std::size_t>(0, mems.size() - 1)(rng)];
  return sp.clamp(d);
}

std::vector<int> permutation(int n, std::mt19937_64 &rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

std::vector<DesignPoint> latin_hypercube(const ProposalRequest &req, std::mt19937_64 &rng) {
  const int m = req.count;
  const auto p_tiles = permutation(m, rng), p_topo = permutation(m, rng),
             p_unroll = permutation(m, rng), p_vec = permutation(m, rng);
  std::vector<DesignPoint> out;
  for (int i = 0; i < m; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    DesignPoint d = sample(req, rng, p_tiles[idx], p_topo[idx], p_unroll[idx], p_vec[idx], m);
    // Small spaces can run out of distinct points; give up after a while.
    for (int retry = 0; retry < 64 && seen(out, d); ++retry)
      d = sample(req, rng, p_tiles[idx], p_topo[idx], p_unroll[idx], p_vec[idx], m);
    d.note = "lhs";
    out.push_back(std::move(d));
  }
  return out;
}

constexpr const char *kMoves[] = {"rows+1",  "rows-1",   "cols+1",   "cols-1",  "toggle_fu",
                                  "depth+1", "depth-1",  "topology+1", "topology-1",
                                  "unroll+1", "unroll-1", "vectorize+1", "vectorize-1"};

/// One neighbourhood move; returns false when the move changes nothing.
bool mutate(DesignPoint &d, int move, const DesignSpace &sp, std::mt19937_64 &rng) {
  const DesignPoint before = d;
  auto &f = d.fabric;
  switch (move) {
  case 0: ++f.rows; break;
  case 1: --f.rows; break;
  case 2: ++f.cols; break;
  case 3: --f.cols; break;
  case 4: {
    // LOAD/STORE stay: the data path always needs them.
    std::vector<FuKind> pool;
    for (FuKind k : kAllFuKinds)
      if (k != FuKind::Load && k != FuKind::Store)
        pool.push_back(k);
    const FuKind k = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    if (f.fu_kinds.contains(k)) {
      if (f.fu_kinds.size() == 1)
        return false;
      f.fu_kinds.erase(k);
    } else {
      f.fu_kinds.insert(k);
    }
    break;
  }
  case 5: ++f.config_mem_depth; break;
  case 6: --f.config_mem_depth; break;
  case 7:
  case 8: {
    const int t = static_cast<int>(f.topology) + (move == 7 ? 1 : -1);
    if (t < 0 || t > 2)
      return false;
    f.topology = static_cast<Topology>(t);
    break;
  }
  case 9: ++d.sw.unroll_factor; break;
  case 10: --d.sw.unroll_factor; break;
  case 11: ++d.sw.vectorize_factor; break;
  case 12: --d.sw.vectorize_factor; break;
  }
  d = sp.clamp(d);
  return !d.same_parameters(before);
}

} // namespace

std::vector<DesignPoint> HeuristicProposer::propose(const ProposalRequest &req) {
  if (req.count < 1)
    throw Error(ErrorCode::InvalidArgument, "proposal count must be >= 1");
  req.space.validate();
  auto rng = rng_for(seed_, req.iteration);

  if (!req.best)
    return latin_hypercube(req, rng);

  const DesignPoint anchor = req.space.clamp(req.best->design);
  std::vector<DesignPoint> out;
  std::uniform_int_distribution<int> move_dist(0, static_cast<int>(std::size(kMoves)) - 1);
  for (int i = 0; i + 1 < req.count; ++i) {
    DesignPoint d;
    bool fresh = false;
    for (int attempt = 0; attempt < 64 && !fresh; ++attempt) {
      d = anchor;
      const int move = move_dist(rng);
      fresh = mutate(d, move, req.space, rng) && !seen(out, d);
      d.note = std::string("mutate:") + kMoves[move];
    }
    d.provenance = Provenance::Proposed;
    out.push_back(std::move(d));
  }
  ProposalRequest one = req;
  one.count = 1;
  DesignPoint extra = sample(one, rng, 0, 0, 0, 0, 1);
  for (int retry = 0; retry < 64 && (seen(out, extra) || extra.same_parameters(anchor)); ++retry)
    extra = sample(one, rng, 0, 0, 0, 0, 1);
  extra.note = "random";
  out.push_back(std::move(extra));
  return out;
}

namespace {

std::string history_lines(const std::vector<HistoryEntry> &entries) {
  std::string s;
  for (const auto &e : entries)
    s += history_entry_to_json(e).dump() + "\n";
  return s.empty() ? "(none yet)\n" : s;
}

} // namespace

std::vector<DesignPoint> LlmProposer::propose(const ProposalRequest &req) {
  std::vector<DesignPoint> out;
  try {
    const auto messages = render_prompt(
        "propose",
        {{"count", std::to_string(req.count)},
         {"iteration", std::to_string(req.iteration)},
         {"kernel", kernel_summary_to_json(req.kernel).dump()},
         {"objective", std::string(to_string(req.objective.mode))},
         {"min_speedup", nlohmann::json(req.objective.min_speedup).dump()},
         {"space", design_space_to_json(req.space).dump()},
         {"best", req.best ? history_entry_to_json(*req.best).dump() : "none"},
         {"history", history_lines(req.window)}});
    const auto payload = extract_json_payload(transport_->complete(messages));
    nlohmann::json items;
    if (payload && payload->is_array())
      items = *payload;
    else if (payload && payload->is_object() && payload->contains("designs"))
      items = (*payload)["designs"];
    if (!items.is_array())
      log().warn("proposer: reply carried no design list");
    else
      for (const auto &item : items) {
        if (static_cast<int>(out.size()) >= req.count)
          break;
        try {
          DesignPoint d = req.space.clamp(design_from_json(item, "llm"));
          if (d.fabric.fu_kinds.empty() || seen(out, d))
            continue;
          d.note = "llm";
          out.push_back(std::move(d));
        } catch (const Error &e) {
          log().warn("proposer: dropped unparseable design: {}", e.what());
        }
      }
  } catch (const Error &e) {
    log().warn("proposer: falling back to heuristic proposals: {}", e.what());
  }

  if (static_cast<int>(out.size()) < req.count) {
    for (DesignPoint &d : fallback_.propose(req)) {
      if (static_cast<int>(out.size()) >= req.count)
        break;
      if (!seen(out, d))
        out.push_back(std::move(d));
    }
  }
  return out;
}

} // namespace malta
