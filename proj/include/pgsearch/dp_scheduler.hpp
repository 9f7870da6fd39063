#pragma once

// Backward-induction DP over (SOC, previous operation) with fuel, mode-shift and terminal SOC costs.

#include "pgsearch/pears.hpp"

#include <array>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgs {

struct DpConfig {
  double soc_min = 0.4, soc_max = 0.8, soc_step = 0.0025;
  double soc_initial = 0.6;
  double soc_desired = 0.6;
  double alpha = 1.0e-5;                        // shift weight
  std::array<double, 3> shift_weights{1, 1, 1}; // engine, MG1, MG2 speed jumps, s^2/rad^2
  double beta = 3.0e5;                          // terminal SOC weight, g

  void validate() const;
  std::size_t grid_size() const;
  double grid_soc(std::size_t j) const;
};

/// Weighted sum of squared speed jumps (engine, MG1, MG2).
double mode_shift_penalty(const std::array<double, 3>& now, const std::array<double, 3>& next,
                          const std::array<double, 3>& weights);

/// One operation (mode plus engine state) at one stage.
struct DpOpPoint {
  bool feasible = false;
  double fuel_g = 0;                 // over the stage
  double p_batt = 0;                 // W
  std::array<double, 3> speeds{};    // engine, MG1, MG2, rad/s
};

struct DpProblem {
  std::size_t stages = 0;
  std::size_t ops = 0;
  std::vector<double> dt;             // per stage, s
  std::vector<DpOpPoint> points;      // stage-major, stages * ops
  std::vector<int> op_mode;           // per op
  std::vector<bool> op_engine_on;     // per op
  /// SOC rate (1/s) for battery power at SOC; nullopt when infeasible.
  std::function<std::optional<double>(double p_batt, double soc)> soc_rate;
  double distance_m = 0;
  double fuel_density = 0.749;        // kg/L

  const DpOpPoint& at(std::size_t k, std::size_t op) const { return points[k * ops + op]; }
  void validate() const;
};

/// Engine-off and engine-on operations for every column of `table`, one stage per cycle interval.
DpProblem build_dp_problem(const PearsTable& table, const DriveCycle& cycle, const Plant& plant);

class DpInfeasibleError : public std::runtime_error {
 public:
  DpInfeasibleError(std::size_t stage, const std::string& what) : std::runtime_error(what), stage_(stage) {}
  std::size_t stage() const { return stage_; }

 private:
  std::size_t stage_;
};

struct DpSolution {
  std::vector<int> op;                // per stage
  std::vector<double> soc;            // stages + 1 values
  double cost = 0;                    // realized J along the trajectory
  double fuel_g = 0, fuel_l = 0;
  double mpg = 0;
  std::size_t shifts = 0;             // mode changes between consecutive stages
  std::size_t engine_starts = 0;
  std::vector<double> mode_share;     // time fraction per mode
  double ev_share = 0;                // engine-off time fraction
  double soc_final() const { return soc.back(); }
};

/// Reference solver, one state at a time.
DpSolution solve_dp_serial(const DpProblem& problem, const DpConfig& cfg);
/// Same recursion with the per-stage SOC sweep split across threads; identical output.
DpSolution solve_dp_parallel(const DpProblem& problem, const DpConfig& cfg, int threads);

/// Harmonic 55/45 combination of city and highway mpg.
double weighted_fuel_economy(double city_mpg, double hwy_mpg);

double miles_per_gallon(double distance_m, double fuel_l);

struct CalibrationTrial {
  double alpha = 0, beta = 0;
  double soc_error = 0;       // worst |SOC_f - SOC_desired| over the problems
  double shift_interval = 0;  // seconds per shift on the shift-reference problem
  bool ok = false;
};

struct CalibrationResult {
  double alpha = 0, beta = 0;
  bool met = false;
  std::vector<CalibrationTrial> trials;
};

/// Smallest beta (then alpha) on log grids meeting the SOC tolerance on every problem and the
/// minimum shift interval on problems[shift_ref].
CalibrationResult calibrate_weights(const std::vector<const DpProblem*>& problems, std::size_t shift_ref,
                                    DpConfig base, double soc_tolerance = 0.01, double min_shift_interval = 30.0,
                                    int threads = 1);

}  // namespace pgs
