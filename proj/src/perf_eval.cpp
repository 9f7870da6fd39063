#include "pgsearch/perf_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace pgs {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::size_t LaunchSettings::grid_size() const {
  return static_cast<std::size_t>(std::floor(v_max_kmh / dv_kmh + 1e-9)) + 1;
}

double LaunchSettings::grid_speed(std::size_t i) const { return static_cast<double>(i) * dv_kmh / 3.6; }

void LaunchSettings::validate() const {
  if (!(dv_kmh > 0 && v_max_kmh > 0 && free_speed_step_rpm > 0)) throw ConfigError("launch grid steps must be positive");
  if (!(target_kmh > 0 && target_kmh <= v_max_kmh)) throw ConfigError("launch target must lie on the speed grid");
  if (!(benchmark_s > 0 && cutoff_s >= benchmark_s)) throw ConfigError("launch thresholds must satisfy 0 < benchmark <= cutoff");
}

ModeTorque max_mode_torque(const CharacteristicMatrix& a_star, double v, const Plant& plant, const LaunchSettings& s) {
  ModeTorque best;
  const KinematicRelation rel = speed_map(a_star);
  const double a00 = a_star.at(Device::output, Device::output).get_d();
  const double a0e = a_star.at(Device::output, Device::engine).get_d();
  const double a01 = a_star.at(Device::output, Device::mg1).get_d();
  const double a02 = a_star.at(Device::output, Device::mg2).get_d();
  if (!(a00 > 0)) return best;
  const auto& veh = plant.vehicle;
  const double w_out = veh.output_speed(v);
  const double t_road = veh.road_load(v);

  std::vector<double> free_speeds{0.0};
  if (rel.dof == 2) {
    free_speeds.clear();
    const double step = rpm_to_rad(s.free_speed_step_rpm);
    if (rel.free_device == Device::engine) {
      const long n = static_cast<long>(std::floor(plant.engine.max_speed() / step + 1e-9));
      for (long k = 0; k <= n; ++k) free_speeds.push_back(k * step);
    } else {
      const MotorModel& m = rel.free_device == Device::mg1 ? plant.mg1 : plant.mg2;
      const long n = static_cast<long>(std::floor(m.max_speed() / step + 1e-9));
      for (long k = -n; k <= n; ++k) free_speeds.push_back(k * step);
    }
  }
  std::array<double, 4> oc{}, fc{};
  for (std::size_t i = 0; i < 4; ++i) {
    oc[i] = rel.out_coeff[i].get_d();
    fc[i] = rel.dof == 2 ? rel.free_coeff[i].get_d() : 0.0;
  }
  const double cap = plant.battery.params().max_power;
  const auto sgn = [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); };

  for (double wf : free_speeds) {
    const double we = oc[1] * w_out + fc[1] * wf;
    const double w1 = oc[2] * w_out + fc[2] * wf;
    const double w2 = oc[3] * w_out + fc[3] * wf;
    if (we < -1e-9 || we > plant.engine.max_speed() * (1 + 1e-12)) continue;
    if (std::abs(w1) > plant.mg1.max_speed() * (1 + 1e-12) || std::abs(w2) > plant.mg2.max_speed() * (1 + 1e-12)) continue;
    const double te = a0e > 0 && we >= plant.engine.idle_speed() * (1 - 1e-12) ? plant.engine.max_torque(we) : 0.0;
    const double t1 = sgn(a01) * plant.mg1.max_torque(w1);
    const double t2 = sgn(a02) * plant.mg2.max_torque(w2);
    double scale = 1.0;
    const auto elec = [&](double f) { return plant.mg1.electrical_power(w1, f * t1) + plant.mg2.electrical_power(w2, f * t2); };
    if (s.battery_cap && elec(1.0) > cap) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (elec(mid) > cap ? hi : lo) = mid;
      }
      scale = lo;
    }
    const double drive = a0e * te + a01 * scale * t1 + a02 * scale * t2;
    double accel;
    if (s.rotating_inertia) {
      accel = (drive - a00 * t_road) * veh.tire_radius / veh.final_drive;
    } else {
      accel = (drive / a00 - t_road) * veh.final_drive / (veh.tire_radius * veh.mass);
    }
    if (best.feasible && !(accel > best.accel)) continue;
    best.feasible = true;
    best.accel = accel;
    best.torque = t_road + veh.output_torque(veh.mass * accel);
    best.w_free = wf;
    best.t_eng = te;
    best.t_mg1 = scale * t1;
    best.t_mg2 = scale * t2;
    best.scale = scale;
  }
  return best;
}

ModeEnvelope compute_mode_envelope(const CharacteristicMatrix& a_star, const Plant& plant, const LaunchSettings& s) {
  ModeEnvelope e;
  e.digest = a_star_digest(a_star);
  const std::size_t n = s.grid_size();
  e.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) e.points.push_back(max_mode_torque(a_star, s.grid_speed(i), plant, s));
  return e;
}

EnvelopeMemo::EnvelopeMemo(Plant plant, LaunchSettings settings) : plant_(std::move(plant)), s_(settings) { s_.validate(); }

std::shared_ptr<const ModeEnvelope> EnvelopeMemo::get(const CharacteristicMatrix& a_star) {
  const std::uint64_t d = a_star_digest(a_star);
  {
    std::lock_guard lock(mu_);
    if (auto it = memo_.find(d); it != memo_.end()) return it->second;
  }
  auto env = std::make_shared<const ModeEnvelope>(compute_mode_envelope(a_star, plant_, s_));
  std::lock_guard lock(mu_);
  return memo_.emplace(d, std::move(env)).first->second;
}

std::size_t EnvelopeMemo::size() const {
  std::lock_guard lock(mu_);
  return memo_.size();
}

TractiveEnvelope combine_envelopes(const std::vector<std::shared_ptr<const ModeEnvelope>>& modes,
                                   const LaunchSettings& s) {
  TractiveEnvelope env;
  const std::size_t n = s.grid_size();
  for (std::size_t i = 0; i < n; ++i) {
    env.speed.push_back(s.grid_speed(i));
    double torque = 0, accel = -kInf;
    int mode = -1;
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const ModeTorque& p = modes[m]->points.at(i);
      if (p.feasible && (mode < 0 || p.accel > accel)) {
        accel = p.accel;
        torque = p.torque;
        mode = static_cast<int>(m);
      }
    }
    env.torque.push_back(mode < 0 ? 0.0 : torque);
    env.accel.push_back(accel);
    env.mode.push_back(mode);
  }
  return env;
}

double accel_time(const TractiveEnvelope& env, const LaunchSettings& s) {
  const double dv = s.dv_kmh / 3.6;
  const std::size_t steps = static_cast<std::size_t>(std::lround(s.target_kmh / s.dv_kmh));
  if (steps >= env.accel.size() + 1) throw std::invalid_argument("envelope does not reach the launch target");
  double t = 0;
  for (std::size_t i = 0; i < steps; ++i) {
    if (!(env.accel[i] > 0)) return kInf;
    t += dv / env.accel[i];
  }
  return t;
}

LaunchClass classify_launch(double t, double benchmark_s, double cutoff_s) {
  if (t < benchmark_s) return LaunchClass::better;
  if (t <= cutoff_s) return LaunchClass::worse;
  return LaunchClass::rejected;
}

const char* launch_class_name(LaunchClass c) {
  switch (c) {
    case LaunchClass::better: return "better";
    case LaunchClass::worse: return "worse";
    case LaunchClass::rejected: return "rejected";
  }
  return "?";
}

LaunchScreen screen_launch(const std::vector<double>& times, double benchmark_s, double cutoff_s) {
  LaunchScreen s;
  for (std::size_t i = 0; i < times.size(); ++i) {
    switch (classify_launch(times[i], benchmark_s, cutoff_s)) {
      case LaunchClass::better: s.better.push_back(i); break;
      case LaunchClass::worse: s.worse.push_back(i); break;
      case LaunchClass::rejected: s.rejected.push_back(i); break;
    }
  }
  return s;
}

Histogram accel_histogram(const std::vector<double>& times, double lo, double hi, double width) {
  if (!(width > 0 && hi > lo)) throw std::invalid_argument("histogram range must be non-empty");
  Histogram h;
  const std::size_t bins = static_cast<std::size_t>(std::ceil((hi - lo) / width - 1e-9));
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + static_cast<double>(b) * width);
  h.counts.assign(bins, 0);
  for (double t : times) {
    if (t < lo) ++h.below;
    else if (!(t < h.edges.back())) ++h.above;
    else h.counts[std::min(bins - 1, static_cast<std::size_t>((t - lo) / width))]++;
  }
  return h;
}

std::string histogram_text(const Histogram& h) {
  std::ostringstream os;
  os << "bin_lo\tbin_hi\tcount\n";
  os << "-inf\t" << h.edges.front() << "\t" << h.below << "\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) os << h.edges[b] << "\t" << h.edges[b + 1] << "\t" << h.counts[b] << "\n";
  os << h.edges.back() << "\tinf\t" << h.above << "\n";
  return os.str();
}

}  // namespace pgs
