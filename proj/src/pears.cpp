#include "pgsearch/pears.hpp"
#include "pgsearch/digest.hpp"

#include <omp.h>

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace pgs {

// ---------------------------------------------------------------- cycles

double DriveCycle::distance() const {
  double d = 0;
  for (std::size_t k = 1; k < speed.size(); ++k) d += 0.5 * (speed[k] + speed[k - 1]) * (time[k] - time[k - 1]);
  return d;
}

void DriveCycle::validate() const {
  if (time.size() != speed.size()) throw ConfigError("cycle " + name + ": time and speed lengths differ");
  if (speed.size() < 2) throw ConfigError("cycle " + name + ": needs at least two samples");
  for (std::size_t k = 0; k < speed.size(); ++k) {
    if (!std::isfinite(speed[k]) || speed[k] < 0) throw ConfigError("cycle " + name + ": bad speed at sample " + std::to_string(k));
    if (k > 0 && !(time[k] > time[k - 1]))
      throw ConfigError("cycle " + name + ": time not increasing at sample " + std::to_string(k));
  }
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::string& where) {
  const std::string t = trim(text);
  double v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) throw ConfigError(where + ": cannot parse number '" + t + "'");
  return v;
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

DriveCycle load_cycle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cycle file " + path.string());
  DriveCycle c;
  c.name = path.stem().string();
  double scale = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected two columns");
    const std::string a = trim(line.substr(0, comma)), b = trim(line.substr(comma + 1));
    if (scale == 0) {
      if (b == "speed_mps") scale = 1.0;
      else if (b == "speed_mph") scale = 0.44704;
      else if (b == "speed_kph" || b == "speed_kmh") scale = 1.0 / 3.6;
      else throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown speed column '" + b + "'");
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(lineno);
    c.time.push_back(parse_double(a, where));
    c.speed.push_back(parse_double(b, where) * scale);
  }
  c.validate();

  bool uniform = true;
  for (std::size_t k = 0; k < c.time.size(); ++k)
    if (c.time[k] != std::floor(c.time[k]) || (k > 0 && c.time[k] - c.time[k - 1] != 1.0)) uniform = false;
  if (uniform) return c;

  DriveCycle r;
  r.name = c.name;
  std::size_t j = 0;
  for (double t = std::ceil(c.time.front()); t <= c.time.back(); t += 1.0) {
    while (j + 1 < c.time.size() && c.time[j + 1] < t) ++j;
    const std::size_t j1 = std::min(j + 1, c.time.size() - 1);
    const double w = j1 == j ? 0.0 : (t - c.time[j]) / (c.time[j1] - c.time[j]);
    r.time.push_back(t);
    r.speed.push_back(c.speed[j] + std::clamp(w, 0.0, 1.0) * (c.speed[j1] - c.speed[j]));
  }
  r.validate();
  return r;
}

std::string cycle_key(const DriveCycle& cycle) {
  std::uint64_t h = fnv1a64(cycle.name);
  for (std::size_t k = 0; k < cycle.size(); ++k) h = fnv1a64(num(cycle.time[k]) + "," + num(cycle.speed[k]) + ";", h);
  return cycle.name + "-" + hex64(h);
}

// ---------------------------------------------------------------- grid

SearchGrid SearchGrid::refined() const {
  SearchGrid g = *this;
  g.engine_speed_step_rpm /= 2;
  g.engine_torque_step_nm /= 2;
  g.mg_torque_step_nm /= 2;
  g.mg_speed_step_rpm /= 2;
  return g;
}

std::string SearchGrid::key() const {
  return "v" + num(speed_bin_kmh) + "/t" + num(torque_bin_nm) + "/we" + num(engine_speed_step_rpm) + "/te" +
         num(engine_torque_step_nm) + "/tm" + num(mg_torque_step_nm) + "/wm" + num(mg_speed_step_rpm) + "/soc" +
         num(nominal_soc);
}

std::vector<double> demanded_output_torque(const DriveCycle& cycle, const VehicleParams& vehicle) {
  std::vector<double> t(cycle.size());
  for (std::size_t k = 0; k < cycle.size(); ++k) {
    const double a = k + 1 < cycle.size()
                         ? (cycle.speed[k + 1] - cycle.speed[k]) / (cycle.time[k + 1] - cycle.time[k])
                         : 0.0;
    t[k] = vehicle.road_load(cycle.speed[k]) + vehicle.output_torque(vehicle.mass * a);
  }
  return t;
}

StcGrid build_stc_grid(const DriveCycle& cycle, const VehicleParams& vehicle, const SearchGrid& grid) {
  if (!(grid.speed_bin_kmh > 0 && grid.torque_bin_nm > 0)) throw ConfigError("cell sizes must be positive");
  const auto torque = demanded_output_torque(cycle, vehicle);
  std::map<std::pair<int, int>, std::vector<std::size_t>> members;
  for (std::size_t k = 0; k < cycle.size(); ++k) {
    const int sb = static_cast<int>(std::floor(cycle.speed[k] * 3.6 / grid.speed_bin_kmh + 1e-9));
    const int tb = static_cast<int>(std::floor(torque[k] / grid.torque_bin_nm));
    members[{sb, tb}].push_back(k);
  }
  StcGrid g;
  g.speed_bin = grid.speed_bin_kmh / 3.6;
  g.torque_bin = grid.torque_bin_nm;
  g.sample_cell.resize(cycle.size());
  for (const auto& [key, ks] : members) {
    StcCell c;
    c.speed_bin = key.first;
    c.torque_bin = key.second;
    for (auto k : ks) {
      c.speed += cycle.speed[k];
      c.torque += torque[k];
      g.sample_cell[k] = static_cast<std::uint32_t>(g.cells.size());
    }
    c.weight = static_cast<std::uint32_t>(ks.size());
    c.speed /= c.weight;
    c.torque /= c.weight;
    g.cells.push_back(c);
  }
  return g;
}

// ---------------------------------------------------------------- efficiency metrics

std::optional<double> ev_efficiency(double p_loss, double p_in) {
  if (!(p_in > 0)) return std::nullopt;
  return 1.0 - p_loss / p_in;
}

HybridPowers split_power(double p_engine, std::array<double, 2> p_mg, double p_batt, double p_fuel) {
  HybridPowers p;
  const double p_gen = std::max(0.0, -p_mg[0]) + std::max(0.0, -p_mg[1]);
  p.p_batt = p_batt;
  p.p_fuel = p_fuel;
  p.mu = p_batt >= 0 ? 1 : 0;
  if (p.mu) {
    p.p_e1 = 0;
    p.p_e2 = p_gen;
  } else {
    p.p_e1 = -p_batt;
    p.p_e2 = p_gen - p.p_e1;
  }
  p.p_e3 = p_engine - p_gen;
  return p;
}

std::optional<double> hybrid_efficiency(const HybridPowers& p, const HybridEfficiencies& e) {
  const double den = p.p_fuel + p.mu * p.p_batt;
  if (!(den > 0)) return std::nullopt;
  const double num = p.p_e1 * e.mot * e.batt / (e.engine_peak * e.mot_peak) +
                     p.p_e2 * e.gen * e.mot / (e.engine_peak * e.gen_peak * e.mot_peak) + p.p_e3 / e.engine_peak +
                     p.mu * p.p_batt * e.batt * e.mot / e.mot_peak;
  return num / den;
}

// ---------------------------------------------------------------- kinematics

ModeKinematics::ModeKinematics(const CharacteristicMatrix& a_star) : a_star_(a_star) {
  const KinematicRelation rel = speed_map(a_star);
  dof_ = rel.dof;
  free_device_ = rel.free_device;
  for (std::size_t i = 0; i < 4; ++i) {
    out_[i] = rel.out_coeff[i].get_d();
    free_[i] = dof_ == 2 ? rel.free_coeff[i].get_d() : 0.0;
  }
}

bool ModeKinematics::engine_tied_to_output() const { return free_[idx(Device::engine)] == 0; }

bool ModeKinematics::device_moves(Device d) const { return out_[idx(d)] != 0 || free_[idx(d)] != 0; }

std::array<double, 4> ModeKinematics::speeds(double w_out, double w_free) const {
  std::array<double, 4> w{};
  for (std::size_t i = 0; i < 4; ++i) w[i] = out_[i] * w_out + free_[i] * w_free;
  return w;
}

ModeKinematics::Solver ModeKinematics::solver(std::span<const Device> unknown) const {
  const KinematicRelation rel = speed_map(a_star_);
  std::vector<const std::array<Rational, 4>*> rows{&rel.out_coeff};
  if (dof_ == 2) rows.push_back(&rel.free_coeff);

  // Columns: unknowns, T_dem, then known engine/mg1/mg2 torques.
  const std::size_t nu = unknown.size();
  const std::size_t c_dem = nu;
  RationalMatrix m(rows.size(), nu + 4);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& c = *rows[r];
    for (std::size_t j = 0; j < nu; ++j) m(r, j) = c[idx(unknown[j])];
    m(r, c_dem) = -c[idx(Device::output)];
    for (std::size_t d = 1; d < 4; ++d)
      if (std::find(unknown.begin(), unknown.end(), kDevices[d]) == unknown.end()) m(r, c_dem + d) = c[d];
  }
  const auto pivots = m.rref();

  Solver s;
  s.unknown.assign(unknown.begin(), unknown.end());
  std::vector<bool> is_pivot(nu, false);
  for (auto p : pivots)
    if (p < nu) is_pivot[p] = true;
  std::vector<std::size_t> free_cols;
  for (std::size_t j = 0; j < nu; ++j)
    if (!is_pivot[j]) {
      free_cols.push_back(j);
      s.free_unknowns.push_back(unknown[j]);
    }

  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::size_t lead = m.cols();
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m(r, j) != 0) {
        lead = j;
        break;
      }
    if (lead == m.cols()) continue;
    if (lead < nu) {
      Solver::Pivot p;
      p.device = unknown[lead];
      p.g = -m(r, c_dem).get_d();
      for (auto f : free_cols) p.h.push_back(-m(r, f).get_d());
      for (std::size_t d = 1; d < 4; ++d) p.fixed[d] = -m(r, c_dem + d).get_d();
      s.pivots.push_back(std::move(p));
    } else {
      std::array<double, 4> z{};
      z[0] = m(r, c_dem).get_d();
      bool any_known = false;
      for (std::size_t d = 1; d < 4; ++d) {
        z[d] = m(r, c_dem + d).get_d();
        any_known |= z[d] != 0;
      }
      if (z[0] != 0 && !any_known) s.consistent_nonzero = false;
      s.zero_rows.push_back(z);
    }
  }
  return s;
}

// ---------------------------------------------------------------- cell search

namespace {

std::vector<double> span_grid(double lo, double hi, double step) {
  std::vector<double> v;
  if (hi < lo) return v;
  const long n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long k = 0; k <= n; ++k) v.push_back(lo + k * step);
  return v;
}

// Symmetric torque grid k*step with |k*step| <= limit.
std::vector<double> torque_grid(double limit, double step) {
  std::vector<double> v;
  const long n = static_cast<long>(std::floor(limit / step + 1e-9));
  for (long k = -n; k <= n; ++k) v.push_back(k * step);
  return v;
}

bool zero_rows_hold(const ModeKinematics::Solver& s, double t_dem, const std::array<double, 4>& known) {
  for (const auto& z : s.zero_rows) {
    double r = z[0] * t_dem, scale = 1.0 + std::abs(t_dem);
    for (std::size_t d = 1; d < 4; ++d) {
      r += z[d] * known[d];
      scale += std::abs(known[d]);
    }
    if (std::abs(r) > 1e-9 * scale) return false;
  }
  return true;
}

// Calls fn(tau) for every assignment of the free unknowns from `cand`; tau is indexed by Device
// and starts from `known`.
template <class F>
std::uint64_t enumerate(const ModeKinematics::Solver& s, double t_dem, const std::array<double, 4>& known,
                        const std::vector<std::vector<double>>& cand, F&& fn) {
  if (!zero_rows_hold(s, t_dem, known)) return 0;
  for (const auto& c : cand)
    if (c.empty()) return 0;
  std::vector<std::size_t> at(cand.size(), 0);
  std::vector<double> fv(cand.size());
  std::uint64_t n = 0;
  while (true) {
    std::array<double, 4> tau = known;
    for (std::size_t f = 0; f < cand.size(); ++f) {
      fv[f] = cand[f][at[f]];
      tau[idx(s.free_unknowns[f])] = fv[f];
    }
    for (const auto& p : s.pivots) {
      double t = p.g * t_dem;
      for (std::size_t f = 0; f < fv.size(); ++f) t += p.h[f] * fv[f];
      for (std::size_t d = 1; d < 4; ++d) t += p.fixed[d] * known[d];
      tau[idx(p.device)] = t;
    }
    ++n;
    fn(tau);
    std::size_t f = 0;
    for (; f < cand.size(); ++f) {
      if (++at[f] < cand[f].size()) break;
      at[f] = 0;
    }
    if (f == cand.size()) break;
  }
  return n;
}

constexpr double kSpeedTol = 1e-9;

struct Context {
  const ModeKinematics& mode;
  const Plant& plant;
  const SearchGrid& grid;
  double w_out;
};

bool mg_ok(const MotorModel& m, double w, double t) { return m.within_limits(w, t); }

// Engine-off traction or regeneration at output torque t_dem; returns candidates examined.
std::uint64_t ev_search(const Context& cx, double t_dem, const std::vector<double>& free_speeds,
                        const ModeKinematics::Solver& s, EvPoint& best, bool regen, double available,
                        const CandidateObserver& observer) {
  std::uint64_t n = 0;
  const auto& pl = cx.plant;
  for (double wf : free_speeds) {
    const auto w = cx.mode.speeds(cx.w_out, wf);
    const double we = w[idx(Device::engine)], w1 = w[idx(Device::mg1)], w2 = w[idx(Device::mg2)];
    if (we < -kSpeedTol || we > pl.engine.max_speed() * (1 + 1e-12)) continue;
    if (std::abs(w1) > pl.mg1.max_speed() * (1 + 1e-12) || std::abs(w2) > pl.mg2.max_speed() * (1 + 1e-12)) continue;
    std::vector<std::vector<double>> cand;
    for (Device d : s.free_unknowns) {
      const MotorModel& m = d == Device::mg1 ? pl.mg1 : pl.mg2;
      cand.push_back(torque_grid(m.max_torque(w[idx(d)]), cx.grid.mg_torque_step_nm));
    }
    n += enumerate(s, t_dem, {}, cand, [&](const std::array<double, 4>& tau) {
      const double t1 = tau[idx(Device::mg1)], t2 = tau[idx(Device::mg2)];
      if (!mg_ok(pl.mg1, w1, t1) || !mg_ok(pl.mg2, w2, t2)) return;
      const double p_in = pl.mg1.electrical_power(w1, t1) + pl.mg2.electrical_power(w2, t2);
      if (!pl.battery.power_feasible(p_in, cx.grid.nominal_soc)) return;
      EvPoint c;
      c.feasible = true;
      c.t_mg1 = t1;
      c.t_mg2 = t2;
      c.w_eng = we;
      c.w_mg1 = w1;
      c.w_mg2 = w2;
      c.p_in = p_in;
      if (regen) {
        const double recovered = -p_in;
        c.p_loss = available - recovered;
        c.delta = available > 0 ? recovered / available : 0.0;
        c.friction_torque = 0;  // filled by the caller
        if (observer) observer({false, w, {-t_dem, 0.0, t1, t2}, c.delta});
        if (!best.feasible || recovered > -best.p_in) best = c;
        return;
      }
      const double p_out = t_dem * cx.w_out;
      c.p_loss = p_in - p_out;
      if (p_in == 0 && p_out == 0) {
        c.delta = 1.0;
      } else {
        const auto d = ev_efficiency(c.p_loss, p_in);
        if (!d) return;
        c.delta = *d;
      }
      if (observer) observer({false, w, {-t_dem, 0.0, t1, t2}, c.delta});
      if (!best.feasible || c.delta > best.delta || (c.delta == best.delta && c.p_in < best.p_in)) best = c;
    });
  }
  return n;
}

std::vector<double> mg_speed_grid(const Context& cx) {
  const MotorModel& m = cx.mode.free_device() == Device::mg1 ? cx.plant.mg1 : cx.plant.mg2;
  const double step = rpm_to_rad(cx.grid.mg_speed_step_rpm);
  const double hi = m.max_speed();
  const long n = static_cast<long>(std::floor(hi / step + 1e-9));
  std::vector<double> v;
  for (long k = -n; k <= n; ++k) v.push_back(k * step);
  return v;
}

// Power-weighted efficiency of the machines whose mechanical power has sign `sign`.
double role_efficiency(const Plant& pl, double w1, double t1, double w2, double t2, int sign, double fallback) {
  double wsum = 0, esum = 0;
  const auto add = [&](const MotorModel& m, double w, double t) {
    const double p = w * t;
    if (p == 0 || (p > 0) != (sign > 0)) return;
    wsum += std::abs(p);
    esum += std::abs(p) * m.efficiency(w, t);
  };
  add(pl.mg1, w1, t1);
  add(pl.mg2, w2, t2);
  return wsum > 0 ? esum / wsum : fallback;
}

}  // namespace

CellSearchResult search_cell(const ModeKinematics& mode, double speed, double torque, const Plant& plant,
                             const SearchGrid& grid, const CandidateObserver& observer) {
  CellSearchResult res;
  const Context cx{mode, plant, grid, plant.vehicle.output_speed(speed)};
  const bool mg1_moves = mode.device_moves(Device::mg1), mg2_moves = mode.device_moves(Device::mg2);

  // Engine off.
  {
    std::vector<Device> unknown;
    if (mg2_moves) unknown.push_back(Device::mg2);
    if (mg1_moves) unknown.push_back(Device::mg1);
    const auto s = mode.solver(unknown);
    std::vector<double> free_speeds{0.0};
    if (mode.dof() == 2 && mode.free_device() != Device::engine) free_speeds = mg_speed_grid(cx);
    if (torque >= 0) {
      res.candidates += ev_search(cx, torque, free_speeds, s, res.ev, false, 0.0, observer);
    } else {
      const double available = -torque * cx.w_out;
      const long steps = static_cast<long>(std::ceil(-torque / grid.mg_torque_step_nm - 1e-9));
      for (long k = 0; k <= steps; ++k) {
        const double t_reg = std::min(0.0, torque + k * grid.mg_torque_step_nm);
        EvPoint cand;
        res.candidates += ev_search(cx, t_reg, free_speeds, s, cand, true, available, observer);
        if (cand.feasible && (!res.ev.feasible || -cand.p_in > -res.ev.p_in)) {
          cand.friction_torque = torque - t_reg;
          res.ev = cand;
        }
      }
    }
  }

  // Engine on; not considered while braking.
  if (torque < 0 || !mode.device_moves(Device::engine)) return res;
  std::vector<Device> unknown;
  if (mg2_moves) unknown.push_back(Device::mg2);
  if (mg1_moves) unknown.push_back(Device::mg1);
  unknown.push_back(Device::engine);
  const auto s = mode.solver(unknown);

  std::vector<double> free_speeds{0.0};
  if (mode.dof() == 2) {
    if (mode.free_device() == Device::engine)
      free_speeds = span_grid(plant.engine.idle_speed(), plant.engine.max_speed(), rpm_to_rad(grid.engine_speed_step_rpm));
    else
      free_speeds = mg_speed_grid(cx);
  }
  const auto& eng = plant.engine;
  const double ep = eng.peak_efficiency();
  const double mot_peak = std::max(plant.mg1.peak_efficiency(), plant.mg2.peak_efficiency());
  for (double wf : free_speeds) {
    const auto w = mode.speeds(cx.w_out, wf);
    const double we = w[idx(Device::engine)], w1 = w[idx(Device::mg1)], w2 = w[idx(Device::mg2)];
    if (we < eng.idle_speed() * (1 - 1e-12) || we > eng.max_speed() * (1 + 1e-12)) continue;
    if (std::abs(w1) > plant.mg1.max_speed() * (1 + 1e-12) || std::abs(w2) > plant.mg2.max_speed() * (1 + 1e-12)) continue;
    const double te_max = eng.max_torque(we);
    std::vector<std::vector<double>> cand;
    for (Device d : s.free_unknowns) {
      if (d == Device::engine) {
        std::vector<double> v;
        for (double t = grid.engine_torque_step_nm; t <= te_max * (1 + 1e-12); t += grid.engine_torque_step_nm) v.push_back(t);
        cand.push_back(std::move(v));
      } else {
        const MotorModel& m = d == Device::mg1 ? plant.mg1 : plant.mg2;
        cand.push_back(torque_grid(m.max_torque(w[idx(d)]), grid.mg_torque_step_nm));
      }
    }
    res.candidates += enumerate(s, torque, {}, cand, [&](const std::array<double, 4>& tau) {
      const double te = tau[idx(Device::engine)], t1 = tau[idx(Device::mg1)], t2 = tau[idx(Device::mg2)];
      if (!(te > 0) || te > te_max * (1 + 1e-12)) return;
      if (!mg_ok(plant.mg1, w1, t1) || !mg_ok(plant.mg2, w2, t2)) return;
      const double p_batt = plant.mg1.electrical_power(w1, t1) + plant.mg2.electrical_power(w2, t2);
      if (!plant.battery.power_feasible(p_batt, grid.nominal_soc)) return;
      const double p_fuel = eng.fuel_power(we, te);
      const HybridPowers hp = split_power(te * we, {w1 * t1, w2 * t2}, p_batt, p_fuel);
      HybridEfficiencies e;
      e.engine_peak = ep;
      e.gen_peak = std::max(plant.mg1.peak_efficiency(), plant.mg2.peak_efficiency());
      e.mot_peak = mot_peak;
      e.gen = role_efficiency(plant, w1, t1, w2, t2, -1, e.gen_peak);
      e.mot = role_efficiency(plant, w1, t1, w2, t2, +1, e.mot_peak);
      e.batt = plant.battery.efficiency(p_batt, grid.nominal_soc);
      const auto d = hybrid_efficiency(hp, e);
      if (!d) return;
      if (observer) observer({true, w, {-torque, te, t1, t2}, *d});
      if (res.hybrid.feasible && !(*d > res.hybrid.delta)) return;
      HybridPoint h;
      h.feasible = true;
      h.w_eng = we;
      h.t_eng = te;
      h.t_mg1 = t1;
      h.t_mg2 = t2;
      h.w_mg1 = w1;
      h.w_mg2 = w2;
      h.p_e1 = hp.p_e1;
      h.p_e2 = hp.p_e2;
      h.p_e3 = hp.p_e3;
      h.p_batt = p_batt;
      h.mu = hp.mu;
      h.delta = *d;
      h.p_fuel = p_fuel;
      h.soc_rate = plant.battery.soc_derivative(p_batt, grid.nominal_soc).value_or(0.0);
      res.hybrid = h;
    });
  }
  return res;
}

PearsColumn compute_column_serial(const CharacteristicMatrix& a_star, const StcGrid& stc, const Plant& plant,
                                  const SearchGrid& grid) {
  const ModeKinematics mode(a_star);
  PearsColumn col;
  col.mode_digest = a_star_digest(a_star);
  col.ev.resize(stc.cells.size());
  col.hybrid.resize(stc.cells.size());
  for (std::size_t i = 0; i < stc.cells.size(); ++i) {
    const auto r = search_cell(mode, stc.cells[i].speed, stc.cells[i].torque, plant, grid);
    col.ev[i] = r.ev;
    col.hybrid[i] = r.hybrid;
  }
  return col;
}

PearsColumn compute_column_parallel(const CharacteristicMatrix& a_star, const StcGrid& stc, const Plant& plant,
                                    const SearchGrid& grid, int threads) {
  const ModeKinematics mode(a_star);
  PearsColumn col;
  col.mode_digest = a_star_digest(a_star);
  const long n = static_cast<long>(stc.cells.size());
  col.ev.resize(n);
  col.hybrid.resize(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, threads))
  for (long i = 0; i < n; ++i) {
    const auto r = search_cell(mode, stc.cells[i].speed, stc.cells[i].torque, plant, grid);
    col.ev[i] = r.ev;
    col.hybrid[i] = r.hybrid;
  }
  return col;
}

PearsTable assemble_table(StcGrid stc, std::vector<std::shared_ptr<const PearsColumn>> columns) {
  PearsTable t;
  t.stc = std::move(stc);
  t.columns = std::move(columns);
  const std::size_t n = t.stc.cells.size();
  t.best_ev_mode.assign(n, -1);
  t.best_hybrid_mode.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < t.columns.size(); ++m) {
      const auto& c = *t.columns[m];
      if (c.ev.size() != n || c.hybrid.size() != n) throw std::invalid_argument("column does not match the cell grid");
      if (c.ev[i].feasible && (t.best_ev_mode[i] < 0 || c.ev[i].delta > t.columns[t.best_ev_mode[i]]->ev[i].delta))
        t.best_ev_mode[i] = static_cast<int>(m);
      if (c.hybrid[i].feasible &&
          (t.best_hybrid_mode[i] < 0 || c.hybrid[i].delta > t.columns[t.best_hybrid_mode[i]]->hybrid[i].delta))
        t.best_hybrid_mode[i] = static_cast<int>(m);
    }
  }
  return t;
}

// ---------------------------------------------------------------- cache

namespace {

void write_column(std::ostream& os, const std::string& key, const PearsColumn& c) {
  os << "# " << key << "\n" << hex64(c.mode_digest) << " " << c.ev.size() << "\n";
  for (std::size_t i = 0; i < c.ev.size(); ++i) {
    const auto& e = c.ev[i];
    const auto& h = c.hybrid[i];
    os << e.feasible;
    for (double v : {e.t_mg1, e.t_mg2, e.w_eng, e.w_mg1, e.w_mg2, e.p_in, e.p_loss, e.delta, e.friction_torque}) os << ' ' << num(v);
    os << ' ' << h.feasible << ' ' << h.mu;
    for (double v : {h.w_eng, h.t_eng, h.t_mg1, h.t_mg2, h.w_mg1, h.w_mg2, h.p_e1, h.p_e2, h.p_e3, h.p_batt, h.delta,
                     h.p_fuel, h.soc_rate})
      os << ' ' << num(v);
    os << '\n';
  }
}

std::optional<PearsColumn> read_column(std::istream& is, const std::string& key) {
  std::string line;
  if (!std::getline(is, line) || line != "# " + key) return std::nullopt;
  std::string digest;
  std::size_t n = 0;
  if (!(is >> digest >> n)) return std::nullopt;
  PearsColumn c;
  c.mode_digest = std::stoull(digest, nullptr, 16);
  c.ev.resize(n);
  c.hybrid.resize(n);
  std::string tok;
  const auto next = [&](double& v) {
    if (!(is >> tok)) return false;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    return ec == std::errc() && p == tok.data() + tok.size();
  };
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = c.ev[i];
    auto& h = c.hybrid[i];
    if (!(is >> e.feasible)) return std::nullopt;
    for (double* v : {&e.t_mg1, &e.t_mg2, &e.w_eng, &e.w_mg1, &e.w_mg2, &e.p_in, &e.p_loss, &e.delta, &e.friction_torque})
      if (!next(*v)) return std::nullopt;
    if (!(is >> h.feasible >> h.mu)) return std::nullopt;
    for (double* v : {&h.w_eng, &h.t_eng, &h.t_mg1, &h.t_mg2, &h.w_mg1, &h.w_mg2, &h.p_e1, &h.p_e2, &h.p_e3, &h.p_batt,
                      &h.delta, &h.p_fuel, &h.soc_rate})
      if (!next(*v)) return std::nullopt;
  }
  return c;
}

}  // namespace

PearsCache::PearsCache(std::string context, std::filesystem::path dir) : context_(std::move(context)), dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::shared_ptr<const PearsColumn> PearsCache::get(const CharacteristicMatrix& a_star, const std::string& cycle_key,
                                                   const StcGrid& stc, const Plant& plant, const SearchGrid& grid,
                                                   int threads) {
  const std::string key = hex64(a_star_digest(a_star)) + "|" + cycle_key + "|" + grid.key() + "|" + context_;
  {
    std::lock_guard lock(mu_);
    if (auto it = mem_.find(key); it != mem_.end()) {
      ++hits_;
      return it->second;
    }
  }
  const std::filesystem::path file = dir_.empty() ? std::filesystem::path{} : dir_ / (hex64(fnv1a64(key)) + ".col");
  std::shared_ptr<const PearsColumn> col;
  if (!file.empty()) {
    std::ifstream in(file);
    if (in) {
      if (auto c = read_column(in, key); c && c->ev.size() == stc.cells.size()) col = std::make_shared<PearsColumn>(std::move(*c));
    }
  }
  const bool computed = !col;
  if (computed) {
    col = std::make_shared<PearsColumn>(threads > 1 ? compute_column_parallel(a_star, stc, plant, grid, threads)
                                                    : compute_column_serial(a_star, stc, plant, grid));
    if (!file.empty()) {
      // Best effort: concurrent writers of the same column produce identical bytes.
      static std::atomic<std::uint64_t> serial{0};
      const auto tmp = file.string() + "." + std::to_string(::getpid()) + "." + std::to_string(serial.fetch_add(1)) + "." +
                       hex64(std::hash<std::thread::id>{}(std::this_thread::get_id())) + ".tmp";
      std::error_code ec;
      {
        std::ofstream out(tmp);
        write_column(out, key, *col);
        if (!out) ec = std::make_error_code(std::errc::io_error);
      }
      if (!ec) std::filesystem::rename(tmp, file, ec);
      if (ec) std::filesystem::remove(tmp, ec);
    }
  }
  std::lock_guard lock(mu_);
  if (computed) ++misses_;
  else ++hits_;
  return mem_.emplace(key, col).first->second;
}

}  // namespace pgs
