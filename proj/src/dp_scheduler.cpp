#include "pgsearch/dp_scheduler.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace pgs {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGallon = 3.785411784;  // L
constexpr double kMile = 1609.344;       // m
}  // namespace

void DpConfig::validate() const {
  if (!(soc_step > 0)) throw ConfigError("SOC step must be positive");
  if (!(soc_min < soc_max)) throw ConfigError("SOC window is empty");
  if (!(alpha >= 0 && beta >= 0)) throw ConfigError("DP weights must be >= 0");
  for (double w : shift_weights)
    if (!(w >= 0)) throw ConfigError("shift weights must be >= 0");
  if (soc_desired < soc_min || soc_desired > soc_max) throw ConfigError("desired SOC outside the window");
  if (soc_initial < soc_min || soc_initial > soc_max) throw ConfigError("initial SOC outside the window");
}

std::size_t DpConfig::grid_size() const {
  return static_cast<std::size_t>(std::floor((soc_max - soc_min) / soc_step + 1e-9)) + 1;
}

double DpConfig::grid_soc(std::size_t j) const { return soc_min + static_cast<double>(j) * soc_step; }

double mode_shift_penalty(const std::array<double, 3>& now, const std::array<double, 3>& next,
                          const std::array<double, 3>& weights) {
  double s = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double d = next[i] - now[i];
    s += weights[i] * d * d;
  }
  return s;
}

void DpProblem::validate() const {
  if (dt.size() != stages || points.size() != stages * ops || op_mode.size() != ops || op_engine_on.size() != ops)
    throw std::invalid_argument("DP problem arrays do not match its dimensions");
  if (!soc_rate) throw std::invalid_argument("DP problem has no SOC model");
  if (ops == 0) throw std::invalid_argument("DP problem has no operations");
}

DpProblem build_dp_problem(const PearsTable& table, const DriveCycle& cycle, const Plant& plant) {
  DpProblem p;
  p.stages = cycle.size() - 1;
  p.ops = 2 * table.columns.size();
  p.distance_m = cycle.distance();
  p.fuel_density = plant.fuel_density;
  for (std::size_t m = 0; m < table.columns.size(); ++m) {
    p.op_mode.insert(p.op_mode.end(), 2, static_cast<int>(m));
    p.op_engine_on.push_back(false);
    p.op_engine_on.push_back(true);
  }
  p.points.resize(p.stages * p.ops);
  for (std::size_t k = 0; k < p.stages; ++k) {
    const double dt = cycle.time[k + 1] - cycle.time[k];
    p.dt.push_back(dt);
    const std::size_t cell = table.stc.sample_cell[k];
    for (std::size_t m = 0; m < table.columns.size(); ++m) {
      const auto& ev = table.columns[m]->ev[cell];
      const auto& hy = table.columns[m]->hybrid[cell];
      DpOpPoint& off = p.points[k * p.ops + 2 * m];
      off.feasible = ev.feasible;
      off.p_batt = ev.p_in;
      off.speeds = {ev.w_eng, ev.w_mg1, ev.w_mg2};
      DpOpPoint& on = p.points[k * p.ops + 2 * m + 1];
      on.feasible = hy.feasible;
      on.p_batt = hy.p_batt;
      on.fuel_g = hy.p_fuel * dt / plant.fuel_lhv * 1000.0;
      on.speeds = {hy.w_eng, hy.w_mg1, hy.w_mg2};
    }
  }
  const BatteryModel battery = plant.battery;
  p.soc_rate = [battery](double pb, double soc) { return battery.soc_derivative(pb, soc); };
  return p;
}

double weighted_fuel_economy(double city_mpg, double hwy_mpg) { return 1.0 / (0.55 / city_mpg + 0.45 / hwy_mpg); }

double miles_per_gallon(double distance_m, double fuel_l) {
  if (fuel_l <= 0) return kInf;
  return (distance_m / kMile) / (fuel_l / kGallon);
}

namespace {

class Solver {
 public:
  Solver(const DpProblem& p, const DpConfig& c) : p_(p), c_(c), g_(c.grid_size()) {
    p_.validate();
    c_.validate();
  }

  DpSolution run(int threads) {
    const std::size_t n = p_.stages, ops = p_.ops;
    value_.assign((n + 1) * ops * g_, kInf);
    for (std::size_t o = 0; o < ops; ++o)
      for (std::size_t j = 0; j < g_; ++j) {
        const double d = c_.soc_desired - c_.grid_soc(j);
        value_[(n * ops + o) * g_ + j] = c_.beta * d * d;
      }

    std::vector<double> base(g_ * ops);
    for (std::size_t k = n; k-- > 1;) {
      const long gl = static_cast<long>(g_);
#pragma omp parallel for schedule(static) num_threads(threads) if (threads > 1)
      for (long jl = 0; jl < gl; ++jl) {
        const std::size_t j = static_cast<std::size_t>(jl);
        const double soc = c_.grid_soc(j);
        for (std::size_t u = 0; u < ops; ++u) base[j * ops + u] = step_cost(k, u, soc);
        for (std::size_t o = 0; o < ops; ++o) {
          if (!p_.at(k - 1, o).feasible) continue;
          double best = kInf;
          for (std::size_t u = 0; u < ops; ++u) {
            double v = base[j * ops + u];
            if (v == kInf) continue;
            if (u != o) v += shift_cost(k, o, u);
            best = std::min(best, v);
          }
          value_[(k * ops + o) * g_ + j] = best;
        }
      }
    }
    return forward();
  }

 private:
  // Fuel plus cost-to-go for op u at stage k from SOC `soc`; +inf when infeasible.
  double step_cost(std::size_t k, std::size_t u, double soc, double* soc_next = nullptr) const {
    const DpOpPoint& pt = p_.at(k, u);
    if (!pt.feasible) return kInf;
    const auto rate = p_.soc_rate(pt.p_batt, soc);
    if (!rate) return kInf;
    const double s = soc + *rate * p_.dt[k];
    if (s < c_.soc_min - 1e-12 || s > c_.soc_max + 1e-12) return kInf;
    const double sc = std::clamp(s, c_.soc_min, c_.soc_max);
    if (soc_next) *soc_next = sc;
    const double v = interp(k + 1, u, sc);
    return v == kInf ? kInf : pt.fuel_g + v;
  }

  double shift_cost(std::size_t k, std::size_t prev, std::size_t u) const {
    return c_.alpha * mode_shift_penalty(p_.at(k - 1, prev).speeds, p_.at(k, u).speeds, c_.shift_weights);
  }

  double interp(std::size_t k, std::size_t op, double soc) const {
    const double* v = &value_[(k * p_.ops + op) * g_];
    const double pos = (soc - c_.soc_min) / c_.soc_step;
    std::size_t j0 = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(g_ - 1)));
    double w = pos - static_cast<double>(j0);
    if (j0 + 1 >= g_) return v[g_ - 1];
    if (w <= 1e-9) return v[j0];
    if (w >= 1 - 1e-9) return v[j0 + 1];
    // Next to an unreachable grid point, take the reachable neighbour; strict interpolation would
    // grow the unreachable band by one point per stage.
    if (v[j0] == kInf) return v[j0 + 1];
    if (v[j0 + 1] == kInf) return v[j0];
    return v[j0] + w * (v[j0 + 1] - v[j0]);
  }

  DpSolution forward() const {
    const std::size_t n = p_.stages, ops = p_.ops;
    DpSolution sol;
    double soc = c_.soc_initial;
    sol.soc.push_back(soc);
    std::size_t prev = ops;
    for (std::size_t k = 0; k < n; ++k) {
      double best = kInf, best_soc = soc;
      std::size_t best_u = ops;
      for (std::size_t u = 0; u < ops; ++u) {
        double s_next = soc;
        double v = step_cost(k, u, soc, &s_next);
        if (v == kInf) continue;
        if (prev < ops && u != prev) v += shift_cost(k, prev, u);
        if (v < best) {
          best = v;
          best_u = u;
          best_soc = s_next;
        }
      }
      if (best_u == ops) throw DpInfeasibleError(first_infeasible_stage(), "no feasible operation sequence; first stuck stage " +
                                                                       std::to_string(first_infeasible_stage()));
      const DpOpPoint& pt = p_.at(k, best_u);
      sol.fuel_g += pt.fuel_g;
      if (prev < ops && best_u != prev) {
        sol.cost += shift_cost(k, prev, best_u);
        if (p_.op_mode[prev] != p_.op_mode[best_u]) ++sol.shifts;
        if (p_.op_engine_on[best_u] && !p_.op_engine_on[prev]) ++sol.engine_starts;
      }
      sol.op.push_back(static_cast<int>(best_u));
      soc = best_soc;
      sol.soc.push_back(soc);
      prev = best_u;
    }
    const double d = c_.soc_desired - soc;
    sol.cost += sol.fuel_g + c_.beta * d * d;
    sol.fuel_l = sol.fuel_g / 1000.0 / p_.fuel_density;
    sol.mpg = miles_per_gallon(p_.distance_m, sol.fuel_l);
    int modes = 0;
    for (int m : p_.op_mode) modes = std::max(modes, m + 1);
    sol.mode_share.assign(modes, 0.0);
    double total = 0;
    for (std::size_t k = 0; k < n; ++k) total += p_.dt[k];
    for (std::size_t k = 0; k < n && total > 0; ++k) {
      sol.mode_share[p_.op_mode[sol.op[k]]] += p_.dt[k] / total;
      if (!p_.op_engine_on[sol.op[k]]) sol.ev_share += p_.dt[k] / total;
    }
    return sol;
  }

  // Forward propagation of reachable SOC grid points (operation history ignored); the first stage
  // from which nothing in the window is reachable.
  std::size_t first_infeasible_stage() const {
    std::set<std::size_t> reach{static_cast<std::size_t>(std::lround((c_.soc_initial - c_.soc_min) / c_.soc_step))};
    for (std::size_t k = 0; k < p_.stages; ++k) {
      std::set<std::size_t> next;
      for (std::size_t j : reach)
        for (std::size_t u = 0; u < p_.ops; ++u) {
          const DpOpPoint& pt = p_.at(k, u);
          if (!pt.feasible) continue;
          const double soc = c_.grid_soc(j);
          const auto rate = p_.soc_rate(pt.p_batt, soc);
          if (!rate) continue;
          const double s = soc + *rate * p_.dt[k];
          if (s < c_.soc_min - 1e-12 || s > c_.soc_max + 1e-12) continue;
          next.insert(static_cast<std::size_t>(std::lround((std::clamp(s, c_.soc_min, c_.soc_max) - c_.soc_min) / c_.soc_step)));
        }
      if (next.empty()) return k;
      reach = std::move(next);
    }
    return p_.stages;
  }

  const DpProblem& p_;
  DpConfig c_;
  std::size_t g_;
  std::vector<double> value_;  // [stage][op][soc]; stage k indexed by the op used at k-1
};

}  // namespace

DpSolution solve_dp_serial(const DpProblem& problem, const DpConfig& cfg) { return Solver(problem, cfg).run(1); }

DpSolution solve_dp_parallel(const DpProblem& problem, const DpConfig& cfg, int threads) {
  return Solver(problem, cfg).run(std::max(1, threads));
}

CalibrationResult calibrate_weights(const std::vector<const DpProblem*>& problems, std::size_t shift_ref, DpConfig base,
                                    double soc_tolerance, double min_shift_interval, int threads) {
  if (problems.empty() || shift_ref >= problems.size()) throw std::invalid_argument("calibration needs a reference problem");
  CalibrationResult res;
  const auto trial = [&](double alpha, double beta) {
    CalibrationTrial t;
    t.alpha = alpha;
    t.beta = beta;
    DpConfig c = base;
    c.alpha = alpha;
    c.beta = beta;
    try {
      for (std::size_t i = 0; i < problems.size(); ++i) {
        const DpSolution s = solve_dp_parallel(*problems[i], c, threads);
        t.soc_error = std::max(t.soc_error, std::abs(s.soc_final() - c.soc_desired));
        if (i == shift_ref) {
          double total = 0;
          for (double d : problems[i]->dt) total += d;
          t.shift_interval = total / static_cast<double>(std::max<std::size_t>(1, s.shifts));
        }
      }
      t.ok = t.soc_error < soc_tolerance && t.shift_interval >= min_shift_interval;
    } catch (const DpInfeasibleError&) {
      t.soc_error = kInf;
    }
    res.trials.push_back(t);
    return t;
  };

  const std::vector<double> betas{1e3, 3e3, 1e4, 3e4, 1e5, 3e5, 1e6, 3e6, 1e7};
  const std::vector<double> alphas{0, 1e-7, 3e-7, 1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3};
  double beta = betas.back();
  for (double b : betas)
    if (trial(base.alpha, b).soc_error < soc_tolerance) {
      beta = b;
      break;
    }
  res.alpha = alphas.back();
  res.beta = beta;
  for (double a : alphas) {
    const CalibrationTrial t = trial(a, beta);
    if (t.ok) {
      res.alpha = a;
      res.met = true;
      break;
    }
  }
  return res;
}

}  // namespace pgs
