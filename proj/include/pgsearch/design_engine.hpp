#pragma once

// Design index space (three inter-PG permanent connections plus three clutches),
// per-design mode sets, inferior screening and signature deduplication.

#include "pgsearch/mode_engine.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace pgs {

/// Unrestricted design count: n_conf * C(catalog, 3) * C(catalog - 3, 3).
std::uint64_t count_design_space(std::uint64_t n_conf, std::uint64_t catalog_size);

/// Ordered placements of 4 devices on 3 * n_pg nodes.
std::uint64_t count_configurations(int n_pg);

/// A design: permanent connections, clutch locations and (optionally) the clutch states it uses.
struct DesignSpec {
  std::uint64_t index = 0;  // position in the enumeration, or 0 for hand-written designs
  std::string name;
  std::vector<Connection> permanent;
  std::vector<Connection> clutches;
  /// Engagement states as clutch-index lists; empty means every one- and two-clutch state.
  std::vector<std::vector<int>> states;
};

/// The restricted space of one configuration: PG1-PG2 link (3x3), PG2-PG3 link (3x3), a third
/// permanent connection from the catalog minus those two, then a clutch triple from the rest.
class DesignSpace {
 public:
  explicit DesignSpace(PowertrainConfiguration base);

  const PowertrainConfiguration& base() const { return base_; }
  const ClutchCatalog& catalog() const { return catalog_; }

  std::uint64_t skeleton_count() const { return skeletons_; }
  std::uint64_t triples_per_skeleton() const { return triples_; }
  std::uint64_t size() const { return skeletons_ * triples_; }

  /// Permanent connections of one skeleton, and the catalog positions still open for clutches.
  std::vector<Connection> skeleton_permanent(std::uint64_t skeleton) const;
  std::vector<int> skeleton_free_locations(std::uint64_t skeleton) const;

  DesignSpec decode(std::uint64_t index) const;

  /// Inverse of decode for a design that lies in the space; nullopt otherwise.
  std::optional<std::uint64_t> encode(std::span<const Connection> permanent, std::span<const Connection> clutches) const;

  /// Calls `fn` for every design in [begin, end) in index order.
  void for_each(std::uint64_t begin, std::uint64_t end, const std::function<void(const DesignSpec&)>& fn) const;

 private:
  PowertrainConfiguration base_;
  ClutchCatalog catalog_;
  std::uint64_t skeletons_ = 0;
  std::uint64_t triples_ = 0;
};

/// Index of the k-subset `comb` (sorted, values < n) in lexicographic order, and its inverse.
std::uint64_t combination_rank(std::span<const int> comb, int n);
std::vector<int> combination_unrank(std::uint64_t rank, int n, int k);

struct DesignMode {
  std::vector<int> engaged;  // clutch indices into DesignSpec::clutches
  const ModeRecord* record = nullptr;
};

struct DesignEvaluation {
  std::uint64_t index = 0;
  std::vector<DesignMode> modes;          // dof 1 or 2, feasible, one per distinct A*
  std::vector<std::uint64_t> signature;   // sorted A* digests of `modes`

  bool has_power_split() const;  // some mode in the ECVT set
  bool has_backward() const;     // some mode in the backward set
};

/// Derives the clutch states of `spec`, keeping feasible 1- and 2-DoF modes deduplicated by A*.
/// Uses library records (computing any that are missing).
DesignEvaluation evaluate_design(ModeLibrary& library, const DesignSpec& spec);

/// Keep iff the design has a forward power-split mode and an engine-on backward mode.
bool screen_inferior(const DesignEvaluation& design);

struct DesignGroup {
  std::uint64_t representative = 0;  // smallest design index in the group
  std::uint64_t members = 0;
  std::vector<std::uint64_t> signature;
};

/// Groups designs by signature; output sorted by representative index.
std::vector<DesignGroup> dedupe_designs(std::span<const DesignEvaluation> designs);

struct ScanStats {
  std::uint64_t enumerated = 0;
  std::uint64_t kept = 0;  // passed screen_inferior
  std::array<std::uint64_t, 8> mode_count_histogram{};
};

/// Screened designs from one index range, in index order.
struct ScanResult {
  std::uint64_t begin = 0, end = 0;
  ScanStats stats;
  std::vector<DesignEvaluation> kept;
};

/// Reference kernel: one design at a time through evaluate_design.
ScanResult scan_designs_serial(const DesignSpace& space, ModeLibrary& library, std::uint64_t begin,
                               std::uint64_t end);

/// Skeleton-blocked kernel: library populated per block, then designs evaluated in parallel
/// against read-only records. Output identical to the serial kernel.
ScanResult scan_designs_parallel(const DesignSpace& space, ModeLibrary& library, std::uint64_t begin,
                                 std::uint64_t end, int threads);

/// Text record: index, permanent list, clutch list, then mask:type:digest per mode.
std::string survivor_record(const DesignSpace& space, const DesignEvaluation& design);
std::string survivor_header();

/// Parses the index and signature back out of a survivor record line.
DesignEvaluation parse_survivor_signature(const std::string& line);

}  // namespace pgs
