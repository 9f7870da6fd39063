#include "pgsearch/plant.hpp"
#include "pgsearch/pg_dynamics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pgs {

void VehicleParams::validate() const {
  if (!(mass > 0)) throw ConfigError("vehicle mass must be positive");
  if (!(tire_radius > 0)) throw ConfigError("tire radius must be positive");
  if (!(final_drive > 0)) throw ConfigError("final drive must be positive");
  if (rolling_coeff < 0 || drag_area < 0 || air_density < 0) throw ConfigError("road-load coefficients must be >= 0");
}

double VehicleParams::road_load(double v) const { return output_torque(rolling_force() + aero_force(v)); }

double VehicleParams::reflected_inertia() const {
  return mass * tire_radius * tire_radius / (final_drive * final_drive);
}

Grid2D::Grid2D(std::vector<double> xs, std::vector<double> ys, std::vector<double> values)
    : xs_(std::move(xs)), ys_(std::move(ys)), v_(std::move(values)) {
  if (xs_.size() < 2 || ys_.size() < 2) throw ConfigError("grid needs at least two breakpoints per axis");
  if (v_.size() != xs_.size() * ys_.size()) throw ConfigError("grid value count does not match its axes");
  if (!std::is_sorted(xs_.begin(), xs_.end()) || std::adjacent_find(xs_.begin(), xs_.end()) != xs_.end() ||
      !std::is_sorted(ys_.begin(), ys_.end()) || std::adjacent_find(ys_.begin(), ys_.end()) != ys_.end())
    throw ConfigError("grid breakpoints must be strictly increasing");
}

namespace {

// Bracket index and weight for x on sorted axis `a`; sets `clamped` when x lies outside.
std::pair<std::size_t, double> bracket(const std::vector<double>& a, double x, bool& clamped) {
  if (x <= a.front()) {
    clamped |= x < a.front();
    return {0, 0.0};
  }
  if (x >= a.back()) {
    clamped |= x > a.back();
    return {a.size() - 2, 1.0};
  }
  const std::size_t i = static_cast<std::size_t>(std::upper_bound(a.begin(), a.end(), x) - a.begin()) - 1;
  return {i, (x - a[i]) / (a[i + 1] - a[i])};
}

}  // namespace

double Grid2D::operator()(double x, double y) const {
  bool clamped = false;
  const auto [i, tx] = bracket(xs_, x, clamped);
  const auto [j, ty] = bracket(ys_, y, clamped);
  if (clamped) clamped_.fetch_add(1, std::memory_order_relaxed);
  const std::size_t nx = xs_.size();
  const double v00 = v_[j * nx + i], v01 = v_[j * nx + i + 1];
  const double v10 = v_[(j + 1) * nx + i], v11 = v_[(j + 1) * nx + i + 1];
  return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
}

double Grid2D::min_value() const { return *std::min_element(v_.begin(), v_.end()); }
double Grid2D::max_value() const { return *std::max_element(v_.begin(), v_.end()); }

Grid2D load_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open map file " + path.string());
  std::vector<double> xs, ys, vals;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    return ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  auto split = [&](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(s);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    return cells;
  };
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (s.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw fail("not a number: '" + s + "'");
    }
  };
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (header) {
      if (cells.size() < 3) throw fail("header needs a corner cell and at least two speeds");
      for (std::size_t i = 1; i < cells.size(); ++i) xs.push_back(number(cells[i]));
      header = false;
      continue;
    }
    if (cells.size() != xs.size() + 1)
      throw fail("expected " + std::to_string(xs.size() + 1) + " cells, found " + std::to_string(cells.size()));
    ys.push_back(number(cells[0]));
    for (std::size_t i = 1; i < cells.size(); ++i) vals.push_back(number(cells[i]));
  }
  try {
    return Grid2D(std::move(xs), std::move(ys), std::move(vals));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

EngineModel::EngineModel(Params p, std::optional<Grid2D> fuel_map) : p_(std::move(p)), fuel_map_(std::move(fuel_map)) {
  if (p_.wot_rpm.size() < 2 || p_.wot_rpm.size() != p_.wot_torque.size())
    throw ConfigError("engine full-load curve needs matching speed and torque lists");
  if (!std::is_sorted(p_.wot_rpm.begin(), p_.wot_rpm.end())) throw ConfigError("engine full-load speeds must increase");
  if (!(p_.peak_efficiency > 0 && p_.peak_efficiency < 1)) throw ConfigError("engine peak efficiency must lie in (0, 1)");
  if (!(p_.idle_rpm > 0 && p_.idle_rpm < p_.max_rpm)) throw ConfigError("engine idle speed must be below max speed");
  // Indicated efficiency chosen so the best brake efficiency on the full-load curve is the peak.
  double best = 0;
  for (double rpm = p_.idle_rpm; rpm <= p_.max_rpm; rpm += 1.0) {
    const double w = rpm_to_rad(rpm), t = max_torque(w);
    const double tf = p_.friction_c0 + p_.friction_c2 * w * w;
    best = std::max(best, t / (t + tf));
  }
  eta_ind_ = p_.peak_efficiency / best;
}

double EngineModel::max_torque(double w) const {
  const double rpm = rad_to_rpm(w);
  if (rpm < p_.idle_rpm - 1e-9 || rpm > p_.max_rpm + 1e-9) return 0.0;
  const auto& xs = p_.wot_rpm;
  const auto& ys = p_.wot_torque;
  if (rpm <= xs.front()) return ys.front();
  if (rpm >= xs.back()) return ys.back();
  const std::size_t i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), rpm) - xs.begin()) - 1;
  const double t = (rpm - xs[i]) / (xs[i + 1] - xs[i]);
  return ys[i] + t * (ys[i + 1] - ys[i]);
}

double EngineModel::fuel_power(double w, double torque) const {
  const double brake = std::max(0.0, torque) * w;
  double p;
  if (fuel_map_) {
    p = (*fuel_map_)(w, torque);
  } else {
    const double tf = p_.friction_c0 + p_.friction_c2 * w * w;
    p = (std::max(0.0, torque) + tf) * w / eta_ind_;
  }
  return std::max(p, brake / p_.peak_efficiency);
}

double EngineModel::efficiency(double w, double torque) const {
  const double pf = fuel_power(w, torque);
  return pf > 0 ? std::max(0.0, torque) * w / pf : 0.0;
}

MotorModel::MotorModel(Params p, std::optional<Grid2D> efficiency_map) : p_(p), map_(std::move(efficiency_map)) {
  if (!(p_.max_torque > 0 && p_.max_power > 0 && p_.max_rpm > 0)) throw ConfigError("motor limits must be positive");
  if (!(p_.peak_efficiency > 0 && p_.peak_efficiency <= 1)) throw ConfigError("motor peak efficiency must lie in (0, 1]");
  if (!(p_.min_efficiency > 0 && p_.min_efficiency <= p_.peak_efficiency))
    throw ConfigError("motor efficiency floor must lie in (0, peak]");
  if (map_ && (map_->min_value() <= 0 || map_->max_value() > 1))
    throw ConfigError("motor efficiency map values must lie in (0, 1]");
}

double MotorModel::max_torque(double w) const {
  const double aw = std::abs(w);
  if (aw > max_speed() * (1 + 1e-12)) return 0.0;
  if (aw <= 0) return p_.max_torque;
  return std::min(p_.max_torque, p_.max_power / aw);
}

bool MotorModel::within_limits(double w, double torque) const {
  return std::abs(w) <= max_speed() * (1 + 1e-12) && std::abs(torque) <= max_torque(w) * (1 + 1e-9) + 1e-9;
}

double MotorModel::efficiency(double w, double torque) const {
  const double aw = std::abs(w), at = std::abs(torque);
  if (map_) return std::clamp((*map_)(aw, at), p_.min_efficiency, p_.peak_efficiency);
  const double pm = aw * at;
  if (pm <= 0) return p_.peak_efficiency;
  const double loss = p_.copper * at * at + p_.iron * aw + p_.windage * aw * aw + p_.fixed;
  // Motoring and generating losses are taken equal in magnitude; efficiency is quoted from the
  // motoring side so the surface is one function of (|w|, |T|).
  return std::clamp(pm / (pm + loss), p_.min_efficiency, p_.peak_efficiency);
}

double MotorModel::electrical_power(double w, double torque) const {
  const double pm = w * torque;
  if (pm == 0) return 0.0;
  const double eta = efficiency(w, torque);
  return pm > 0 ? pm / eta : pm * eta;
}

BatteryModel::BatteryModel(Params p) : p_(p) {
  if (!(p_.voltage > 0 && p_.capacity_ah > 0 && p_.resistance > 0 && p_.max_power > 0))
    throw ConfigError("battery voltage, capacity, resistance and power limit must be positive");
  if (!(0 <= p_.soc_min && p_.soc_min < p_.soc_max && p_.soc_max <= 1)) throw ConfigError("battery SOC window invalid");
}

bool BatteryModel::power_feasible(double p_batt, double soc) const {
  return std::abs(p_batt) <= p_.max_power * (1 + 1e-12) && current(p_batt, soc).has_value();
}

std::optional<double> BatteryModel::current(double p_batt, double soc) const {
  const double v = open_circuit(soc);
  const double disc = v * v - 4 * p_.resistance * p_batt;
  if (disc < 0) return std::nullopt;
  return (v - std::sqrt(disc)) / (2 * p_.resistance);
}

std::optional<double> BatteryModel::soc_derivative(double p_batt, double soc) const {
  if (std::abs(p_batt) > p_.max_power * (1 + 1e-12)) return std::nullopt;
  const auto i = current(p_batt, soc);
  if (!i) return std::nullopt;
  return -*i / (p_.capacity_ah * 3600.0);
}

double BatteryModel::efficiency(double p_batt, double soc) const {
  if (p_batt == 0) return 1.0;
  const auto i = current(p_batt, soc);
  if (!i) return 0.0;
  const double internal = open_circuit(soc) * *i;
  return p_batt > 0 ? p_batt / internal : internal / p_batt;
}

namespace {

using nlohmann::json;

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::optional<Grid2D> read_map(const json& j, const char* key, const std::filesystem::path& dir) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  std::filesystem::path p = j.at(key).get<std::string>();
  if (p.is_relative()) p = dir / p;
  return load_grid_csv(p);
}

MotorModel read_motor(const json& j, const std::filesystem::path& dir) {
  MotorModel::Params p;
  read(j, "max_torque_nm", p.max_torque);
  read(j, "max_power_w", p.max_power);
  read(j, "max_speed_rpm", p.max_rpm);
  read(j, "peak_efficiency", p.peak_efficiency);
  read(j, "min_efficiency", p.min_efficiency);
  read(j, "copper_loss", p.copper);
  read(j, "iron_loss", p.iron);
  read(j, "windage_loss", p.windage);
  read(j, "fixed_loss_w", p.fixed);
  return MotorModel(p, read_map(j, "efficiency_map", dir));
}

}  // namespace

Plant load_plant(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plant file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const auto dir = path.parent_path();
  Plant plant;
  try {
    if (j.contains("vehicle")) {
      const auto& v = j.at("vehicle");
      read(v, "mass_kg", plant.vehicle.mass);
      read(v, "tire_radius_m", plant.vehicle.tire_radius);
      read(v, "final_drive", plant.vehicle.final_drive);
      read(v, "rolling_coeff", plant.vehicle.rolling_coeff);
      read(v, "drag_area_m2", plant.vehicle.drag_area);
      read(v, "air_density", plant.vehicle.air_density);
    }
    plant.vehicle.validate();
    if (j.contains("engine")) {
      const auto& e = j.at("engine");
      EngineModel::Params p;
      read(e, "wot_rpm", p.wot_rpm);
      read(e, "wot_torque_nm", p.wot_torque);
      read(e, "idle_rpm", p.idle_rpm);
      read(e, "max_rpm", p.max_rpm);
      read(e, "peak_efficiency", p.peak_efficiency);
      read(e, "friction_c0_nm", p.friction_c0);
      read(e, "friction_c2", p.friction_c2);
      read(e, "inertia", p.inertia);
      plant.engine = EngineModel(p, read_map(e, "fuel_map", dir));
    }
    if (j.contains("mg1")) plant.mg1 = read_motor(j.at("mg1"), dir);
    if (j.contains("mg2")) plant.mg2 = read_motor(j.at("mg2"), dir);
    if (j.contains("battery")) {
      const auto& b = j.at("battery");
      BatteryModel::Params p;
      read(b, "voltage_v", p.voltage);
      read(b, "voc_slope_v", p.voc_slope);
      read(b, "capacity_ah", p.capacity_ah);
      read(b, "resistance_ohm", p.resistance);
      read(b, "max_power_w", p.max_power);
      read(b, "soc_min", p.soc_min);
      read(b, "soc_max", p.soc_max);
      plant.battery = BatteryModel(p);
    }
    if (j.contains("fuel")) {
      read(j.at("fuel"), "lhv_j_per_kg", plant.fuel_lhv);
      read(j.at("fuel"), "density_kg_per_l", plant.fuel_density);
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return plant;
}

}  // namespace pgs
