#pragma once

// Full-throttle tractive envelopes per mode and per design, 0-100 km/h times and launch screening.

#include "pgsearch/mode_engine.hpp"
#include "pgsearch/plant.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace pgs {

struct LaunchSettings {
  double v_max_kmh = 180.0;
  double dv_kmh = 1.0;
  double free_speed_step_rpm = 100.0;
  bool battery_cap = true;
  bool rotating_inertia = true;  // false: plain vehicle mass
  double target_kmh = 100.0;
  double benchmark_s = 6.69;
  double cutoff_s = 7.0;

  std::size_t grid_size() const;
  double grid_speed(std::size_t i) const;  // m/s
  void validate() const;
};

/// Best full-throttle point of one mode at one vehicle speed. `torque` is the output-node torque
/// that would give the same vehicle acceleration acting on the vehicle mass alone.
struct ModeTorque {
  bool feasible = false;
  double torque = 0;
  double accel = 0;  // m/s^2
  double w_free = 0;
  double t_eng = 0, t_mg1 = 0, t_mg2 = 0;
  double scale = 1;  // MG torque factor applied for the battery cap
};

ModeTorque max_mode_torque(const CharacteristicMatrix& a_star, double v, const Plant& plant, const LaunchSettings& s);

struct ModeEnvelope {
  std::uint64_t digest = 0;
  std::vector<ModeTorque> points;  // one per grid speed
};

ModeEnvelope compute_mode_envelope(const CharacteristicMatrix& a_star, const Plant& plant, const LaunchSettings& s);

/// Thread-safe memo of mode envelopes keyed by A* digest.
class EnvelopeMemo {
 public:
  EnvelopeMemo(Plant plant, LaunchSettings settings);
  std::shared_ptr<const ModeEnvelope> get(const CharacteristicMatrix& a_star);
  const LaunchSettings& settings() const { return s_; }
  const Plant& plant() const { return plant_; }
  std::size_t size() const;

 private:
  Plant plant_;
  LaunchSettings s_;
  mutable std::mutex mu_;
  std::map<std::uint64_t, std::shared_ptr<const ModeEnvelope>> memo_;
};

struct TractiveEnvelope {
  std::vector<double> speed;    // m/s
  std::vector<double> torque;   // N m, 0 where no mode is feasible
  std::vector<double> accel;    // m/s^2
  std::vector<int> mode;        // index into the mode list, -1 where none
};

/// Pointwise maximum over the given envelopes (ties to the lower index).
TractiveEnvelope combine_envelopes(const std::vector<std::shared_ptr<const ModeEnvelope>>& modes,
                                   const LaunchSettings& s);

/// Time from rest to `target_kmh`, constant acceleration per grid interval taken at its lower
/// speed; infinity when some interval cannot accelerate.
double accel_time(const TractiveEnvelope& env, const LaunchSettings& s);

enum class LaunchClass { better, worse, rejected };
LaunchClass classify_launch(double t, double benchmark_s, double cutoff_s);
const char* launch_class_name(LaunchClass c);

struct LaunchScreen {
  std::vector<std::size_t> better, worse, rejected;  // indices into the input
};
LaunchScreen screen_launch(const std::vector<double>& times, double benchmark_s, double cutoff_s);

struct Histogram {
  std::vector<double> edges;  // counts.size() + 1 values
  std::vector<std::uint64_t> counts;
  std::uint64_t below = 0, above = 0;  // outside [edges.front(), edges.back()), infinities included in above
};
Histogram accel_histogram(const std::vector<double>& times, double lo, double hi, double width);
std::string histogram_text(const Histogram& h);

}  // namespace pgs
