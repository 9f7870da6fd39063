#pragma once

// Clutch catalog, mode derivation, the 14-way mode classification and mode sets.

#include "pgsearch/pg_dynamics.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace pgs {

struct ClutchCatalog {
  std::vector<Connection> locations;
  int n_pg = 0;
  NodeId output;

  /// Position of `c` in `locations`, or -1.
  int index_of(const Connection& c) const;
};

/// All node pairs minus the two redundant locking pairs per gear set (sun-ring is kept),
/// then every grounding clutch except on the output node. Node pairs come first.
ClutchCatalog build_clutch_catalog(int n_pg, NodeId output_node);

std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Sum of C(catalog_size, k) for k in [k_min, k_max].
std::uint64_t count_mode_candidates(std::uint64_t catalog_size, int k_min, int k_max);

enum class ModeType : int {
  series = 1,
  compound_split_3dof = 2,
  compound_split_2dof = 3,
  input_split = 4,
  output_split = 5,
  parallel_ecvt_1mg = 6,
  parallel_ecvt_2mg_serial = 7,
  engine_only_fixed_gear = 8,
  fixed_gear_2mg_2dof = 9,
  fixed_gear_2mg_1dof = 10,
  fixed_gear_1mg_1dof = 11,
  ev_2mg_2dof = 12,
  ev_2mg_1dof = 13,
  ev_1mg_1dof = 14,
};

inline constexpr int kModeTypeCount = 14;
const char* mode_type_name(ModeType t);
inline int type_number(ModeType t) { return static_cast<int>(t); }

class ClassificationError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// The scalar features the classification criteria are written in.
struct ModeFeatures {
  int dof = 0;
  int c_eng = 0, c_mg1 = 0, c_mg2 = 0;        // signs of row-1 entries 2..4
  int v_eng3 = 0, v_eng4 = 0;                 // signs of engine-row entries 3 and 4
  int r_ve = 0, r_vmg1 = 0, r_vmg2 = 0;       // ranks of stacked row pairs
  int r_emg1 = 0, r_emg2 = 0, r_mg1mg2 = 0;
};

ModeFeatures mode_features(const CharacteristicMatrix& a_star);

/// True when the literal criteria row for `type` holds.
bool criteria_hold(ModeType type, const ModeFeatures& f);

/// Every type whose criteria row holds literally (may be empty or plural).
std::vector<ModeType> matching_criteria(const ModeFeatures& f);

/// Binary-tree classification: series first, then DoF, engine coupling and motor coupling.
/// Throws ClassificationError when no leaf applies.
ModeType classify_mode(const CharacteristicMatrix& a_star);

/// Expected DoF for each type: 1, 2 or 3.
int type_dof(ModeType t);

struct Mode {
  std::vector<Connection> engaged;  // permanent connections plus engaged clutches, sorted
  CharacteristicMatrix a_star;
  ModeType type = ModeType::series;
  bool forward_capable = false;
  bool backward_capable = false;
};

struct Infeasible {
  std::string reason;
};

/// Feasible iff the reduced system is non-degenerate, dof is 1..3, and some device torque reaches the output.
std::variant<Mode, Infeasible> derive_mode(const FullSystemModel& model, std::span<const Connection> permanent,
                                           std::span<const Connection> engaged_clutches);

bool in_backward_set(const CharacteristicMatrix& a_star, ModeType type);
bool in_ecvt_set(const CharacteristicMatrix& a_star, ModeType type);

/// Keeps one mode per distinct characteristic matrix (the lexicographically smallest engaged set);
/// output sorted by engaged set.
std::vector<Mode> dedupe_modes(std::vector<Mode> modes);

struct ModeSets {
  std::vector<std::size_t> all;
  std::vector<std::size_t> backward;
  std::vector<std::size_t> ecvt;
};

ModeSets mode_sets(std::span<const Mode> modes);

/// 64-bit FNV-1a digest of the canonical fraction text of A*.
std::uint64_t a_star_digest(const CharacteristicMatrix& a_star);

/// Cached per-partition mode outcome. Modes depend only on the merged-node partition.
struct ModeRecord {
  enum class Status : std::uint8_t { feasible, infeasible };
  Status status = Status::infeasible;
  std::string reason;
  CharacteristicMatrix a_star;
  std::uint64_t digest = 0;
  ModeType type = ModeType::series;
  int dof = 0;
  bool forward = false;
  bool backward = false;
  bool ecvt = false;

  bool feasible() const { return status == Status::feasible; }
};

/// Thread-compatible cache keyed by NodePartition::key(). Population is explicit so the
/// parallel scan kernels can read it without locks.
class ModeLibrary {
 public:
  explicit ModeLibrary(FullSystemModel model);

  const FullSystemModel& model() const { return model_; }

  /// Computes records for keys not yet present; `partitions` supplies the representative
  /// connection sets. Runs in parallel over new keys when `parallel` is set.
  void populate(std::span<const std::pair<std::uint64_t, std::vector<Connection>>> partitions, bool parallel);

  /// Computes (if absent) and returns the record for one connection set.
  const ModeRecord& resolve(std::span<const Connection> connections);

  const ModeRecord* find(std::uint64_t key) const;
  std::size_t size() const { return records_.size(); }

  static ModeRecord evaluate(const FullSystemModel& model, std::span<const Connection> connections);

 private:
  FullSystemModel model_;
  std::unordered_map<std::uint64_t, std::unique_ptr<ModeRecord>> records_;
};

struct ModeClassCounts {
  std::array<std::uint64_t, kModeTypeCount> original{};
  std::array<std::uint64_t, kModeTypeCount> unique{};
  std::array<std::uint64_t, kModeTypeCount> forward{};
  std::uint64_t candidates = 0;
  std::uint64_t infeasible = 0;
};

/// Every subset of `catalog` with size in [k_min, k_max], classified and counted by type.
ModeClassCounts count_mode_classes(ModeLibrary& library, const ClutchCatalog& catalog, int k_min, int k_max);

/// Delimiter-separated mode report row: engaged list, 16 A* entries, dof, type, set flags.
std::string mode_report_header();
std::string mode_report_row(const Mode& mode);

}  // namespace pgs
