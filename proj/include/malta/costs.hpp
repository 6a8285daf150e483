//===-- costs.hpp - Analytic power/area surrogate and scoring ------*- C++ -*-===//
//
// Part of the malta project.
//
//===----------------------------------------------------------------------===//
//
// Power and area are first-order analytic estimates:
//
//   lane_mult(x)  = 1 + x * (vectorize_factor - 1)
//   tile_area     = tile_base + sum_k area(k) * lane_mult(area) + depth * ctx
//   area          = wiring * tiles * tile_area + data_mem_kb * mem_area
//   tile_power    = tile_base + sum_k power(k) * lane_mult(power) + depth * ctx
//   power         = wiring * tiles * tile_power
//                   + activity * (nodes / ii) * lane_mult(power)
//
// Data memory contributes area only: SRAM power is not modelled.
//
// Scores are "lower is better". A design below the speedup floor scores
// kInfeasiblePenalty + shortfall so selection stays total.
//
//===----------------------------------------------------------------------===//

#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "malta/arch.hpp"
#include "malta/kernel.hpp"
#include "malta/mapper.hpp"

namespace malta {

enum class ObjectiveMode : std::uint8_t { MinPower, MaxPowerEfficiency };

std::string_view to_string(ObjectiveMode m);
/// Accepts "MIN_POWER" / "min-power" and "MAX_POWER_EFFICIENCY" /
/// "max-power-efficiency".
ObjectiveMode parse_objective_mode(std::string_view token);

struct Objective {
  ObjectiveMode mode = ObjectiveMode::MinPower;
  double min_speedup = 1.5;
};

inline constexpr double kInfeasiblePenalty = 1e6;

struct CostCoeffs {
  struct Pair {
    double area_kum2 = 0;
    double power_mw = 0;
  };
  Pair tile;
  Pair config_context;
  std::array<Pair, kFuKindCount> fu{};
  std::array<double, 3> wiring{}; // indexed by Topology
  double lane_area_factor = 0;
  double lane_power_factor = 0;
  double activity_power_mw = 0; // per scheduled op per cycle
  double data_mem_area_kum2_per_kb = 0;

  double wiring_of(Topology t) const { return wiring[static_cast<std::size_t>(t)]; }
  const Pair &fu_of(FuKind k) const { return fu[static_cast<std::size_t>(k)]; }
};

/// Throws Error(Config) unless every coefficient is positive and wiring
/// grows strictly MESH < KINGMESH < CROSSBAR.
void validate_cost_coeffs(const CostCoeffs &c);
CostCoeffs cost_coeffs_from_json(const nlohmann::json &j);
nlohmann::json cost_coeffs_to_json(const CostCoeffs &c);
CostCoeffs load_cost_coeffs(const std::filesystem::path &path);
/// data_dir()/cost_coeffs.json
std::filesystem::path default_cost_coeffs_path();

struct Ppa {
  double power_mw = 0;
  double area_kum2 = 0;
};

Ppa estimate_ppa(const DesignPoint &d, const MappingResult &m, const CostCoeffs &c);

struct EvalReport {
  std::string design_id;
  double speedup = 0;
  double power_mw = 0;
  double area_kum2 = 0;
  double power_efficiency = 0; // speedup / power_mw
  double score = 0;
  bool feasible = false;

  friend bool operator==(const EvalReport &, const EvalReport &) = default;
};

nlohmann::json report_to_json(const EvalReport &r);
EvalReport report_from_json(const nlohmann::json &j);

/// Objective score from already computed speedup and PPA figures.
double objective_score(const Objective &obj, double speedup, double power_mw);

/// Trip count left after the design's software transforms.
int trip_after_transforms(const KernelGraph &original, const SwParams &sw);

/// A design with its mapping from the transformed kernel, if it mapped.
struct Candidate {
  DesignPoint design;
  std::optional<MappingResult> mapping;
};

EvalReport evaluate_design(const Candidate &c, const KernelGraph &original,
                           const Objective &obj, const CostCoeffs &coeffs);

/// One report per candidate, in input order. Throws Error(EvalOnUnmapped)
/// when a candidate has no mapping.
std::vector<EvalReport> tool_evaluate(std::span<const Candidate> candidates,
                                      const KernelGraph &original,
                                      const Objective &obj,
                                      const CostCoeffs &coeffs);

struct Pick {
  std::string choice;
  double score = 0;
};

/// Minimal score; ties go to the lexicographically smallest id.
/// Throws Error(EmptyCandidateSet).
Pick tool_select(std::span<const EvalReport> reports);

} // namespace malta
