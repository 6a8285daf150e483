//===-- costs.cpp - Analytic power/area surrogate and scoring ------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//

#include "malta/costs.hpp"

#include <algorithm>
#include <cctype>

#include "json_util.hpp"
#include "malta/data.hpp"
#include "malta/error.hpp"

namespace malta {

namespace {

constexpr std::string_view kCoeffFile = "cost coefficients";

std::string normalize_token(std::string_view s) {
  std::string out;
  for (char c : s)
    out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

CostCoeffs::Pair read_pair(const nlohmann::json &j, std::string_view key) {
  using namespace detail;
  const auto &obj = require(j, key, kCoeffFile);
  reject_unknown_keys(obj, {"area_kum2", "power_mw"}, kCoeffFile);
  return {get_number(require(obj, "area_kum2", kCoeffFile), "area_kum2", kCoeffFile),
          get_number(require(obj, "power_mw", kCoeffFile), "power_mw", kCoeffFile)};
}

nlohmann::json pair_json(const CostCoeffs::Pair &p) {
  return {{"area_kum2", p.area_kum2}, {"power_mw", p.power_mw}};
}

} // namespace

std::string_view to_string(ObjectiveMode m) {
  return m == ObjectiveMode::MinPower ? "MIN_POWER" : "MAX_POWER_EFFICIENCY";
}

ObjectiveMode parse_objective_mode(std::string_view token) {
  const std::string t = normalize_token(token);
  if (t == "MIN_POWER")
    return ObjectiveMode::MinPower;
  if (t == "MAX_POWER_EFFICIENCY")
    return ObjectiveMode::MaxPowerEfficiency;
  throw Error(ErrorCode::UnknownEnum, "unknown objective '" + std::string(token) + "'");
}

void validate_cost_coeffs(const CostCoeffs &c) {
  auto positive = [](double v, const std::string &what) {
    if (!(v > 0))
      throw Error(ErrorCode::Config, "cost coefficient " + what + " must be positive");
  };
  positive(c.tile.area_kum2, "tile.area_kum2");
  positive(c.tile.power_mw, "tile.power_mw");
  positive(c.config_context.area_kum2, "config_context.area_kum2");
  positive(c.config_context.power_mw, "config_context.power_mw");
  for (FuKind k : kAllFuKinds) {
    positive(c.fu_of(k).area_kum2, "fu." + std::string(to_string(k)) + ".area_kum2");
    positive(c.fu_of(k).power_mw, "fu." + std::string(to_string(k)) + ".power_mw");
  }
  for (Topology t : kAllTopologies)
    positive(c.wiring_of(t), "wiring." + std::string(to_string(t)));
  positive(c.lane_area_factor, "vector_lane.area_factor");
  positive(c.lane_power_factor, "vector_lane.power_factor");
  positive(c.activity_power_mw, "activity_power_mw");
  positive(c.data_mem_area_kum2_per_kb, "data_mem_area_kum2_per_kb");
  if (!(c.wiring_of(Topology::Mesh) < c.wiring_of(Topology::KingMesh) &&
        c.wiring_of(Topology::KingMesh) < c.wiring_of(Topology::Crossbar)))
    throw Error(ErrorCode::Config,
                "wiring multipliers must increase MESH < KINGMESH < CROSSBAR");
}

CostCoeffs cost_coeffs_from_json(const nlohmann::json &j) {
  using namespace detail;
  reject_unknown_keys(j,
                      {"schema_version", "description", "tile", "config_context",
                       "fu", "wiring", "vector_lane", "activity_power_mw",
                       "data_mem_area_kum2_per_kb"},
                      kCoeffFile);
  if (j.contains("schema_version") &&
      get_integer(j["schema_version"], "schema_version", kCoeffFile) != 1)
    throw Error(ErrorCode::SchemaVersion, "cost coefficients: unsupported schema_version");
  CostCoeffs c;
  c.tile = read_pair(j, "tile");
  c.config_context = read_pair(j, "config_context");
  const auto &fu = require(j, "fu", kCoeffFile);
  if (!fu.is_object())
    throw Error(ErrorCode::TypeMismatch, "cost coefficients: 'fu' must be an object");
  for (const auto &[key, value] : fu.items())
    (void)parse_fu_kind(key);
  for (FuKind k : kAllFuKinds)
    c.fu[static_cast<std::size_t>(k)] = read_pair(fu, to_string(k));
  const auto &wiring = require(j, "wiring", kCoeffFile);
  reject_unknown_keys(wiring, {"MESH", "KINGMESH", "CROSSBAR"}, kCoeffFile);
  for (Topology t : kAllTopologies)
    c.wiring[static_cast<std::size_t>(t)] =
        get_number(require(wiring, to_string(t), kCoeffFile), to_string(t), kCoeffFile);
  const auto &lane = require(j, "vector_lane", kCoeffFile);
  reject_unknown_keys(lane, {"area_factor", "power_factor"}, kCoeffFile);
  c.lane_area_factor =
      get_number(require(lane, "area_factor", kCoeffFile), "area_factor", kCoeffFile);
  c.lane_power_factor =
      get_number(require(lane, "power_factor", kCoeffFile), "power_factor", kCoeffFile);
  c.activity_power_mw = get_number(require(j, "activity_power_mw", kCoeffFile),
                                   "activity_power_mw", kCoeffFile);
  c.data_mem_area_kum2_per_kb =
      get_number(require(j, "data_mem_area_kum2_per_kb", kCoeffFile),
                 "data_mem_area_kum2_per_kb", kCoeffFile);
  validate_cost_coeffs(c);
  return c;
}

nlohmann::json cost_coeffs_to_json(const CostCoeffs &c) {
  nlohmann::json fu = nlohmann::json::object();
  for (FuKind k : kAllFuKinds)
    fu[std::string(to_string(k))] = pair_json(c.fu_of(k));
  nlohmann::json wiring = nlohmann::json::object();
  for (Topology t : kAllTopologies)
    wiring[std::string(to_string(t))] = c.wiring_of(t);
  return {{"schema_version", 1},
          {"tile", pair_json(c.tile)},
          {"config_context", pair_json(c.config_context)},
          {"fu", std::move(fu)},
          {"wiring", std::move(wiring)},
          {"vector_lane",
           {{"area_factor", c.lane_area_factor}, {"power_factor", c.lane_power_factor}}},
          {"activity_power_mw", c.activity_power_mw},
          {"data_mem_area_kum2_per_kb", c.data_mem_area_kum2_per_kb}};
}

CostCoeffs load_cost_coeffs(const std::filesystem::path &path) {
  return cost_coeffs_from_json(
      detail::parse_json_text(detail::read_file(path.string()), kCoeffFile));
}

std::filesystem::path default_cost_coeffs_path() { return data_dir() / "cost_coeffs.json"; }

Ppa estimate_ppa(const DesignPoint &d, const MappingResult &m, const CostCoeffs &c) {
  const FabricSpec &f = d.fabric;
  const double lanes_extra = d.sw.vectorize_factor - 1;
  const double area_lane = 1.0 + c.lane_area_factor * lanes_extra;
  const double power_lane = 1.0 + c.lane_power_factor * lanes_extra;

  double tile_area = c.tile.area_kum2 + f.config_mem_depth * c.config_context.area_kum2;
  double tile_power = c.tile.power_mw + f.config_mem_depth * c.config_context.power_mw;
  for (FuKind k : f.fu_kinds.kinds()) {
    tile_area += c.fu_of(k).area_kum2 * area_lane;
    tile_power += c.fu_of(k).power_mw * power_lane;
  }
  const double wiring = c.wiring_of(f.topology);
  const double tiles = f.tile_count();
  const double ops_per_cycle =
      static_cast<double>(m.placements.size()) / static_cast<double>(m.ii);

  Ppa p;
  p.area_kum2 = wiring * tiles * tile_area + f.data_mem_kb * c.data_mem_area_kum2_per_kb;
  p.power_mw = wiring * tiles * tile_power + c.activity_power_mw * ops_per_cycle * power_lane;
  return p;
}

double objective_score(const Objective &obj, double speedup, double power_mw) {
  if (speedup < obj.min_speedup)
    return kInfeasiblePenalty + (obj.min_speedup - speedup);
  if (obj.mode == ObjectiveMode::MinPower)
    return power_mw;
  return -(speedup / power_mw);
}

int trip_after_transforms(const KernelGraph &original, const SwParams &sw) {
  return original.trip_count / (sw.unroll_factor * sw.vectorize_factor);
}

EvalReport evaluate_design(const Candidate &c, const KernelGraph &original,
                           const Objective &obj, const CostCoeffs &coeffs) {
  if (!c.mapping)
    throw Error(ErrorCode::EvalOnUnmapped,
                "design " + c.design.id + " has no mapping to evaluate");
  EvalReport r;
  r.design_id = c.design.id;
  r.speedup = speedup(original, *c.mapping, trip_after_transforms(original, c.design.sw));
  const Ppa ppa = estimate_ppa(c.design, *c.mapping, coeffs);
  r.power_mw = ppa.power_mw;
  r.area_kum2 = ppa.area_kum2;
  r.power_efficiency = r.speedup / r.power_mw;
  r.feasible = r.speedup >= obj.min_speedup;
  r.score = objective_score(obj, r.speedup, r.power_mw);
  return r;
}

std::vector<EvalReport> tool_evaluate(std::span<const Candidate> candidates,
                                      const KernelGraph &original,
                                      const Objective &obj,
                                      const CostCoeffs &coeffs) {
  for (const Candidate &c : candidates)
    if (!c.mapping)
      throw Error(ErrorCode::EvalOnUnmapped,
                  "design " + c.design.id + " has no mapping to evaluate");
  std::vector<EvalReport> out;
  out.reserve(candidates.size());
  for (const Candidate &c : candidates)
    out.push_back(evaluate_design(c, original, obj, coeffs));
  return out;
}

Pick tool_select(std::span<const EvalReport> reports) {
  if (reports.empty())
    throw Error(ErrorCode::EmptyCandidateSet, "tool_select on an empty report list");
  const EvalReport *best = &reports.front();
  for (const EvalReport &r : reports.subspan(1))
    if (r.score < best->score || (r.score == best->score && r.design_id < best->design_id))
      best = &r;
  return {best->design_id, best->score};
}

nlohmann::json report_to_json(const EvalReport &r) {
  return {{"design_id", r.design_id},   {"speedup", r.speedup},
          {"power_mw", r.power_mw},     {"area_kum2", r.area_kum2},
          {"power_efficiency", r.power_efficiency},
          {"score", r.score},           {"feasible", r.feasible}};
}

EvalReport report_from_json(const nlohmann::json &j) {
  EvalReport r;
  r.design_id = j.at("design_id").get<std::string>();
  r.speedup = j.at("speedup").get<double>();
  r.power_mw = j.at("power_mw").get<double>();
  r.area_kum2 = j.at("area_kum2").get<double>();
  r.power_efficiency = j.at("power_efficiency").get<double>();
  r.score = j.at("score").get<double>();
  r.feasible = j.at("feasible").get<bool>();
  return r;
}

} // namespace malta
