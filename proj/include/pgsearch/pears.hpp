#pragma once

// Speed-torque cell discretization of a drive cycle and per-cell best operating points
// (engine-off and engine-on) for each mode, ranked by power-weighted efficiency.

#include "pgsearch/mode_engine.hpp"
#include "pgsearch/plant.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace pgs {

struct DriveCycle {
  std::string name;
  std::vector<double> time;   // s
  std::vector<double> speed;  // m/s

  std::size_t size() const { return speed.size(); }
  double distance() const;  // m, trapezoidal
  void validate() const;
};

/// Reads "time,speed" rows. The header line names the speed unit: speed_mps, speed_mph or speed_kph.
/// Lines starting with '#' are comments. Non-integer sample times are resampled to 1 Hz.
DriveCycle load_cycle(const std::filesystem::path& path);

struct SearchGrid {
  double speed_bin_kmh = 2.0;
  double torque_bin_nm = 100.0;
  double engine_speed_step_rpm = 100.0;
  double engine_torque_step_nm = 10.0;
  double mg_torque_step_nm = 10.0;
  double mg_speed_step_rpm = 100.0;
  double nominal_soc = 0.6;

  SearchGrid refined() const;  // every search step halved, bins unchanged
  std::string key() const;
};

struct StcCell {
  int speed_bin = 0;
  int torque_bin = 0;
  double speed = 0;   // m/s, mean of member samples
  double torque = 0;  // N m at the output node, mean of member samples
  std::uint32_t weight = 0;
};

struct StcGrid {
  std::vector<StcCell> cells;             // sorted by (speed_bin, torque_bin)
  std::vector<std::uint32_t> sample_cell; // cell index of each cycle sample
  double speed_bin = 0, torque_bin = 0;   // m/s, N m
};

/// Demanded output torque per sample: road load plus m dv/dt (forward difference), at the output node.
std::vector<double> demanded_output_torque(const DriveCycle& cycle, const VehicleParams& vehicle);

StcGrid build_stc_grid(const DriveCycle& cycle, const VehicleParams& vehicle, const SearchGrid& grid);

/// Engine-off operating point. Regenerative cells carry the friction-brake share separately.
struct EvPoint {
  bool feasible = false;
  double t_mg1 = 0, t_mg2 = 0;
  double w_eng = 0, w_mg1 = 0, w_mg2 = 0;
  double p_in = 0;     // battery terminal power, W (negative while recovering)
  double p_loss = 0;
  double delta = 0;
  double friction_torque = 0;  // output-node torque left to the friction brakes
};

struct HybridPoint {
  bool feasible = false;
  double w_eng = 0, t_eng = 0;
  double t_mg1 = 0, t_mg2 = 0, w_mg1 = 0, w_mg2 = 0;
  double p_e1 = 0, p_e2 = 0, p_e3 = 0, p_batt = 0;
  int mu = 0;
  double delta = 0;
  double p_fuel = 0;
  double soc_rate = 0;  // at the grid's nominal SOC
};

/// Engine-off efficiency: 1 - loss / input. Returns nullopt when p_in <= 0.
std::optional<double> ev_efficiency(double p_loss, double p_in);

struct HybridPowers {
  double p_e1 = 0, p_e2 = 0, p_e3 = 0;
  double p_batt = 0;
  int mu = 0;
  double p_fuel = 0;
};

struct HybridEfficiencies {
  double engine_peak = 0.36;
  double gen = 0.92, gen_peak = 0.92;  // machine on the generating path
  double mot = 0.92, mot_peak = 0.92;  // machine on the motoring path
  double batt = 1.0;
};

/// Power-weighted efficiency over the battery, split and direct paths. Nullopt if the
/// denominator is not positive.
std::optional<double> hybrid_efficiency(const HybridPowers& p, const HybridEfficiencies& e);

/// Splits engine power into battery, electrical and mechanical paths from machine powers.
/// p_mg are mechanical machine powers (negative while generating).
HybridPowers split_power(double p_engine, std::array<double, 2> p_mg, double p_batt, double p_fuel);

/// Double-precision view of a mode's kinematics and quasi-static torque balance.
class ModeKinematics {
 public:
  explicit ModeKinematics(const CharacteristicMatrix& a_star);

  int dof() const { return dof_; }
  Device free_device() const { return free_device_; }
  bool engine_tied_to_output() const;  // engine speed fixed by output speed
  bool device_moves(Device d) const;

  /// Device speeds (output, engine, mg1, mg2) for an output speed and (dof 2) a free-device speed.
  std::array<double, 4> speeds(double w_out, double w_free) const;

  /// Solves the torque balance for the unknown machine torques. `fixed` holds known torques for
  /// devices not in `unknown`; `free_values` assign the free unknowns in free_unknowns() order.
  struct Solver {
    std::vector<Device> unknown;
    std::vector<Device> free_unknowns;
    bool consistent_nonzero = true;  // false: only zero demand is admissible
    // torque = g * T_dem + sum_f h[f] * free_f + sum_d fixed[d] * T_d over known devices d
    struct Pivot {
      Device device = Device::engine;
      double g = 0;
      std::vector<double> h;
      std::array<double, 4> fixed{};
    };
    std::vector<Pivot> pivots;
    // Rows with no unknowns left: slot 0 multiplies T_dem, slots 1..3 the known device torques.
    std::vector<std::array<double, 4>> zero_rows;
  };
  Solver solver(std::span<const Device> unknown) const;

 private:
  int dof_ = 0;
  Device free_device_ = Device::engine;
  std::array<double, 4> out_{}, free_{};
  CharacteristicMatrix a_star_;
};

struct CellSearchResult {
  EvPoint ev;
  HybridPoint hybrid;
  std::uint64_t candidates = 0;
};

/// One admissible candidate seen by search_cell; speeds and torques are indexed by Device.
struct CellCandidate {
  bool engine_on = false;
  std::array<double, 4> speed{};
  std::array<double, 4> torque{};
  double delta = 0;
};
using CandidateObserver = std::function<void(const CellCandidate&)>;

/// Best engine-off and engine-on points of one mode at one (speed, torque) demand. `observer`,
/// when set, sees every candidate that passed the limit checks.
CellSearchResult search_cell(const ModeKinematics& mode, double speed, double torque, const Plant& plant,
                             const SearchGrid& grid, const CandidateObserver& observer = {});

/// One mode's results over every cell of a grid.
struct PearsColumn {
  std::uint64_t mode_digest = 0;
  std::vector<EvPoint> ev;
  std::vector<HybridPoint> hybrid;
};

PearsColumn compute_column_serial(const CharacteristicMatrix& a_star, const StcGrid& stc, const Plant& plant,
                                  const SearchGrid& grid);
PearsColumn compute_column_parallel(const CharacteristicMatrix& a_star, const StcGrid& stc, const Plant& plant,
                                    const SearchGrid& grid, int threads);

/// Cells x modes with the best mode per cell for each branch (ties to the lower mode index).
struct PearsTable {
  StcGrid stc;
  std::vector<std::shared_ptr<const PearsColumn>> columns;  // one per design mode
  std::vector<int> best_ev_mode;      // -1 when no mode is feasible
  std::vector<int> best_hybrid_mode;
};

PearsTable assemble_table(StcGrid stc, std::vector<std::shared_ptr<const PearsColumn>> columns);

/// Column cache keyed by (A* digest, cycle, grid settings); optional on-disk persistence.
class PearsCache {
 public:
  /// `context` identifies everything else the columns depend on (the plant parameters).
  explicit PearsCache(std::string context, std::filesystem::path dir = {});

  std::shared_ptr<const PearsColumn> get(const CharacteristicMatrix& a_star, const std::string& cycle_key,
                                         const StcGrid& stc, const Plant& plant, const SearchGrid& grid,
                                         int threads);
  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }

 private:
  std::string context_;
  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const PearsColumn>> mem_;
  std::uint64_t hits_ = 0, misses_ = 0;
};

/// Digest of the cycle samples, used in cache keys and run manifests.
std::string cycle_key(const DriveCycle& cycle);

}  // namespace pgs
