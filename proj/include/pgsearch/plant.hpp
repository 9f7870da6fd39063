#pragma once

// Vehicle, engine, motor/generator and battery models.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pgs {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double rpm_to_rad(double rpm) { return rpm * kPi / 30.0; }
inline constexpr double rad_to_rpm(double w) { return w * 30.0 / kPi; }

struct VehicleParams {
  double mass = 2680.0;        // kg
  double tire_radius = 0.4;    // m
  double final_drive = 3.42;
  double rolling_coeff = 0.009;
  double drag_area = 1.2;      // Cd*A, m^2
  double air_density = 1.2;    // kg/m^3
  double gravity = 9.81;

  void validate() const;

  double rolling_force() const { return mass * gravity * rolling_coeff; }
  double aero_force(double v) const { return 0.5 * air_density * drag_area * v * v; }
  /// Rolling plus aerodynamic resistance reflected to the output node, N m.
  double road_load(double v) const;
  /// Output-node speed (rad/s) for vehicle speed v (m/s).
  double output_speed(double v) const { return v * final_drive / tire_radius; }
  /// Output-node torque that produces wheel force f.
  double output_torque(double f) const { return f * tire_radius / final_drive; }
  /// Vehicle mass moved to the output node, kg m^2.
  double reflected_inertia() const;
};

/// Regular rectilinear table with bilinear interpolation; queries outside clamp to the edge
/// and bump a counter.
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(std::vector<double> xs, std::vector<double> ys, std::vector<double> values);
  Grid2D(const Grid2D& o) : xs_(o.xs_), ys_(o.ys_), v_(o.v_) {}
  Grid2D& operator=(const Grid2D& o) {
    xs_ = o.xs_;
    ys_ = o.ys_;
    v_ = o.v_;
    return *this;
  }

  double operator()(double x, double y) const;
  bool empty() const { return v_.empty(); }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  double min_value() const;
  double max_value() const;
  std::uint64_t clamp_count() const { return clamped_.load(std::memory_order_relaxed); }

 private:
  std::vector<double> xs_, ys_;
  std::vector<double> v_;  // row-major over ys then xs
  mutable std::atomic<std::uint64_t> clamped_{0};
};

/// Reads a delimited grid: the first data row holds speeds (rad/s) after a corner cell, every
/// following row a torque (N m) and its values. Lines starting with '#' are comments.
Grid2D load_grid_csv(const std::filesystem::path& path);

class EngineModel {
 public:
  struct Params {
    std::vector<double> wot_rpm{800, 1500, 2500, 4100, 5100};
    std::vector<double> wot_torque{300, 400, 460, 498, 248000.0 / rpm_to_rad(5100)};
    double idle_rpm = 800;
    double max_rpm = 5100;
    double peak_efficiency = 0.36;
    double friction_c0 = 40.0;     // N m
    double friction_c2 = 1.0e-4;   // N m s^2
    double inertia = 0.22;
  };

  EngineModel() : EngineModel(Params{}) {}
  explicit EngineModel(Params p, std::optional<Grid2D> fuel_map = std::nullopt);

  const Params& params() const { return p_; }
  double idle_speed() const { return rpm_to_rad(p_.idle_rpm); }
  double max_speed() const { return rpm_to_rad(p_.max_rpm); }
  double peak_efficiency() const { return p_.peak_efficiency; }
  double indicated_efficiency() const { return eta_ind_; }

  /// Wide-open-throttle torque; 0 outside [idle, max].
  double max_torque(double w) const;
  /// Fuel energy rate, W; never below T w / peak efficiency.
  double fuel_power(double w, double torque) const;
  double efficiency(double w, double torque) const;

 private:
  Params p_;
  std::optional<Grid2D> fuel_map_;
  double eta_ind_ = 0.0;
};

class MotorModel {
 public:
  struct Params {
    double max_torque = 300.0;
    double max_power = 60000.0;
    double max_rpm = 9000.0;
    double peak_efficiency = 0.92;
    double min_efficiency = 0.3;
    double copper = 0.08;    // W / (N m)^2
    double iron = 3.0;       // W / (rad/s)
    double windage = 1.0e-3; // W / (rad/s)^2
    double fixed = 300.0;    // W while torque is applied
  };

  MotorModel() : MotorModel(Params{}) {}
  explicit MotorModel(Params p, std::optional<Grid2D> efficiency_map = std::nullopt);

  const Params& params() const { return p_; }
  double max_speed() const { return rpm_to_rad(p_.max_rpm); }
  double peak_efficiency() const { return p_.peak_efficiency; }

  /// Torque limit magnitude at speed w: min(T_max, P_max/|w|); 0 beyond the speed limit.
  double max_torque(double w) const;
  bool within_limits(double w, double torque) const;
  /// Conversion efficiency, symmetric in (w, T) -> (-w, -T).
  double efficiency(double w, double torque) const;
  /// Electrical power drawn (positive) or delivered (negative), W.
  double electrical_power(double w, double torque) const;

 private:
  Params p_;
  std::optional<Grid2D> map_;
};

class BatteryModel {
 public:
  struct Params {
    double voltage = 300.0;         // open circuit at soc_ref
    double voc_slope = 0.0;         // V per unit SOC
    double soc_ref = 0.6;
    double capacity_ah = 6.5;
    double resistance = 0.3;
    double max_power = 40000.0;
    double soc_min = 0.4;
    double soc_max = 0.8;
  };

  BatteryModel() : BatteryModel(Params{}) {}
  explicit BatteryModel(Params p);

  const Params& params() const { return p_; }
  double open_circuit(double soc) const { return p_.voltage + p_.voc_slope * (soc - p_.soc_ref); }
  bool power_feasible(double p_batt, double soc) const;
  /// Terminal current for terminal power p (discharge positive); nullopt if beyond the circuit limit.
  std::optional<double> current(double p_batt, double soc) const;
  /// SOC rate, 1/s; nullopt when |P| exceeds the limit.
  std::optional<double> soc_derivative(double p_batt, double soc) const;
  /// Terminal over internal power when discharging, internal over terminal when charging.
  double efficiency(double p_batt, double soc) const;

 private:
  Params p_;
};

struct Plant {
  VehicleParams vehicle;
  EngineModel engine;
  MotorModel mg1;
  MotorModel mg2;
  BatteryModel battery;
  double fuel_lhv = 42.6e6;          // J/kg
  double fuel_density = 0.749;       // kg/L
};

/// Loads a JSON parameter file; relative map paths resolve against the file's directory.
/// Missing sections fall back to the built-in defaults.
Plant load_plant(const std::filesystem::path& path);

}  // namespace pgs
