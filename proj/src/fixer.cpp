#include <algorithm>

#include "malta/agents.hpp"
#include "malta/error.hpp"
#include "malta/log.hpp"

namespace malta {

std::string diagnosis_code(const Diagnosis &d) {
  return std::visit(
      [](const auto &v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::vector<StructuralViolation>>)
          return v.empty() ? "VALID" : std::string(to_string(v.front().code));
        else if constexpr (std::is_same_v<T, TransformFailure>)
          return std::string(to_string(v.code));
        else
          return std::string(to_string(v.code));
      },
      d);
}

std::string describe(const Diagnosis &d) {
  return std::visit(
      [](const auto &v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::vector<StructuralViolation>>) {
          std::string s;
          for (const auto &x : v)
            s += std::string(to_string(x.code)) + " [" + x.field + "]: " + x.message + "\n";
          return s;
        } else if constexpr (std::is_same_v<T, TransformFailure>) {
          return std::string(to_string(v.code)) + ": " + v.message + "\n";
        } else {
          return map_error_to_json(v).dump() + "\n";
        }
      },
      d);
}

nlohmann::json diagnosis_to_json(const Diagnosis &d) {
  return std::visit(
      [](const auto &v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::vector<StructuralViolation>>) {
          nlohmann::json list = nlohmann::json::array();
          for (const auto &x : v)
            list.push_back({{"code", std::string(to_string(x.code))}, {"field", x.field}, {"message", x.message}});
          return {{"kind", "structural"}, {"violations", list}};
        } else if constexpr (std::is_same_v<T, TransformFailure>) {
          return {{"kind", "transform"}, {"code", std::string(to_string(v.code))}, {"message", v.message}};
        } else {
          nlohmann::json j = map_error_to_json(v);
          j["kind"] = "map";
          return j;
        }
      },
      d);
}

CheckResult check_design(const DesignPoint &d, const KernelGraph &original, const MapBudget &budget) {
  CheckResult r;
  if (auto v = validate_design(d); !v.empty()) {
    r.diagnosis = std::move(v);
    return r;
  }
  KernelGraph transformed;
  try {
    transformed = apply_sw(original, d.sw);
  } catch (const Error &e) {
    if (e.code() != ErrorCode::NonDivisibleFactor && e.code() != ErrorCode::CarriedDepBlocksVectorization &&
        e.code() != ErrorCode::InvalidArgument)
      throw;
    r.diagnosis = TransformFailure{e.code(), e.what()};
    return r;
  }
  auto out = map_kernel(transformed, d.fabric, budget);
  if (auto *m = std::get_if<MappingResult>(&out))
    r.mapping = std::move(*m);
  else
    r.diagnosis = std::get<MapError>(std::move(out));
  return r;
}

namespace {

bool legal(const KernelGraph &k, int unroll, int vec) {
  try {
    apply_sw(k, {unroll, vec});
    return true;
  } catch (const Error &) {
    return false;
  }
}

/// Largest legal (unroll, vectorize) not above the current pair, keeping
/// unroll when some vector width works with it.
SwParams largest_legal(const KernelGraph &k, SwParams sw) {
  for (int u = sw.unroll_factor; u >= 1; --u)
    for (int v = sw.vectorize_factor; v >= 1; --v)
      if (legal(k, u, v))
        return {u, v};
  return {1, 1};
}

/// Lowers the unroll factor to the next legal value. False when already 1.
bool lower_unroll(DesignPoint &d, const KernelGraph &k) {
  if (d.sw.unroll_factor <= 1)
    return false;
  d.sw = largest_legal(k, {d.sw.unroll_factor - 1, d.sw.vectorize_factor});
  return true;
}

/// Grows the smaller grid dimension. False when both are at the bound.
bool grow_grid(DesignPoint &d) {
  auto &f = d.fabric;
  if (f.rows >= bounds::kMaxGridDim && f.cols >= bounds::kMaxGridDim)
    return false;
  if ((f.rows <= f.cols && f.rows < bounds::kMaxGridDim) || f.cols >= bounds::kMaxGridDim)
    ++f.rows;
  else
    ++f.cols;
  return true;
}

void clamp_structure(DesignPoint &d, const std::vector<StructuralViolation> &violations,
                     const KernelGraph &k) {
  auto &f = d.fabric;
  for (const auto &v : violations) {
    switch (v.code) {
    case ViolationCode::RowsRange: f.rows = std::clamp(f.rows, 1, bounds::kMaxGridDim); break;
    case ViolationCode::ColsRange: f.cols = std::clamp(f.cols, 1, bounds::kMaxGridDim); break;
    case ViolationCode::FuKindsEmpty:
      f.fu_kinds = required_kinds(k);
      f.fu_kinds.insert(FuKind::Load);
      f.fu_kinds.insert(FuKind::Store);
      break;
    case ViolationCode::MissingLoadStore:
      f.fu_kinds.insert(FuKind::Load);
      f.fu_kinds.insert(FuKind::Store);
      break;
    case ViolationCode::ConfigDepthRange: f.config_mem_depth = std::max(f.config_mem_depth, 1); break;
    case ViolationCode::DataMemRange: f.data_mem_kb = std::max(f.data_mem_kb, 0); break;
    case ViolationCode::UnrollRange:
      d.sw.unroll_factor = std::clamp(d.sw.unroll_factor, 1, bounds::kMaxUnroll);
      break;
    case ViolationCode::VectorizeRange:
      d.sw.vectorize_factor = std::clamp(d.sw.vectorize_factor, 1, bounds::kMaxVectorize);
      break;
    }
  }
}

void repair_map_error(DesignPoint &d, const MapError &e, const KernelGraph &k) {
  auto &f = d.fabric;
  switch (e.code) {
  case MapErrorCode::MissingFuKind:
    for (FuKind kind : e.hint.missing_kinds)
      f.fu_kinds.insert(kind);
    if (e.hint.missing_kinds.empty())
      for (FuKind kind : required_kinds(k).kinds())
        f.fu_kinds.insert(kind);
    break;
  case MapErrorCode::InsufficientTiles: {
    const int target = std::max(e.hint.required_tiles, f.tile_count() + 1);
    bool grew = false;
    while (f.tile_count() < target && grow_grid(d))
      grew = true;
    if (!grew || f.tile_count() < target)
      lower_unroll(d, k);
    break;
  }
  case MapErrorCode::ConfigMemOverflow:
    if (e.hint.required_ii > f.config_mem_depth)
      f.config_mem_depth = e.hint.required_ii;
    else if (!lower_unroll(d, k))
      f.config_mem_depth *= 2;
    break;
  case MapErrorCode::RoutingFailure:
    if (f.topology != Topology::Crossbar)
      f.topology = static_cast<Topology>(static_cast<int>(f.topology) + 1);
    else if (!lower_unroll(d, k))
      grow_grid(d);
    break;
  case MapErrorCode::IiBoundExceeded:
    if (!lower_unroll(d, k))
      grow_grid(d);
    break;
  }
}

} // namespace

DesignPoint HeuristicFixer::repair(const DesignPoint &d, const Diagnosis &diag,
                                   const KernelGraph &original) const {
  DesignPoint out = d;
  std::visit(
      [&](const auto &v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::vector<StructuralViolation>>)
          clamp_structure(out, v, original);
        else if constexpr (std::is_same_v<T, TransformFailure>)
          out.sw = largest_legal(original, out.sw);
        else
          repair_map_error(out, v, original);
      },
      diag);
  out.provenance = Provenance::Repaired;
  out.note = "fix:" + diagnosis_code(diag);
  return out;
}

DesignPoint LlmFixer::repair(const DesignPoint &d, const Diagnosis &diag,
                             const KernelGraph &original) const {
  try {
    const auto messages =
        render_prompt("fix", {{"design", design_to_json(d).dump(2)},
                              {"error", describe(diag)},
                              {"kernel", kernel_summary_to_json(summarize(original)).dump()}});
    auto payload = extract_json_payload(transport_->complete(messages));
    if (payload && payload->is_object() && payload->contains("design"))
      payload = (*payload)["design"];
    if (payload && payload->is_object()) {
      DesignPoint out = design_from_json(*payload, d.id);
      out.provenance = Provenance::Repaired;
      out.note = "llm-fix:" + diagnosis_code(diag);
      return out;
    }
    log().warn("fixer: reply for {} carried no design, using repair rules", d.id);
  } catch (const Error &e) {
    log().warn("fixer: falling back to repair rules for {}: {}", d.id, e.what());
  }
  return fallback_.repair(d, diag, original);
}

FixOutcome fix_design(const DesignPoint &d, const Diagnosis &diag, const Fixer &fixer,
                      const KernelGraph &original, const MapBudget &budget, int max_rounds) {
  if (max_rounds < 1)
    throw Error(ErrorCode::InvalidArgument, "max_rounds must be >= 1");
  if (auto *v = std::get_if<std::vector<StructuralViolation>>(&diag); v && v->empty())
    throw Error(ErrorCode::InvalidArgument, "fix_design needs a non-empty error");

  DesignPoint current = d;
  Diagnosis error = diag;
  for (int round = 1; round <= max_rounds; ++round) {
    current = fixer.repair(current, error, original);
    current.id = d.id;
    current.provenance = Provenance::Repaired;
    CheckResult r = check_design(current, original, budget);
    if (r.mapping)
      return FixSuccess{current, std::move(*r.mapping), round};
    error = std::move(*r.diagnosis);
  }
  return FixFailure{current, error, max_rounds};
}

} // namespace malta
