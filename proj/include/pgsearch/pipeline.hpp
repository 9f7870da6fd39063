#pragma once

// Study configuration, single-design analysis and the resumable search pipeline
// (enumerate/screen -> dedupe -> launch screen -> fuel economy -> ranking).

#include "pgsearch/design_engine.hpp"
#include "pgsearch/dp_scheduler.hpp"
#include "pgsearch/pears.hpp"
#include "pgsearch/perf_eval.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace pgs {

/// Raised when a pipeline stage cannot complete (exit code 3).
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReferenceFunnel {
  std::uint64_t unique = 0, launch_ok = 0, beat_both = 0, beat_and_faster = 0;
};

struct Study {
  std::filesystem::path config_path;
  PowertrainConfiguration base;
  InertiaSet inertias;
  Plant plant;
  std::map<std::string, std::filesystem::path> cycles;  // name -> file
  SearchGrid grid;
  DpConfig dp;
  LaunchSettings launch;
  std::filesystem::path benchmark_design;
  ReferenceFunnel reference;
  std::map<std::string, std::string> input_digests;  // logical input -> FNV digest of its bytes

  /// Canonical text of every setting that affects results; part of the run manifest.
  std::string settings_text() const;
};

/// Reads the study JSON; relative paths resolve against its directory. Throws ConfigError.
Study load_study(const std::filesystem::path& path);

/// Design file: name, permanent and clutch connection names, states as lists of 1-based clutch numbers.
DesignSpec load_design(const std::filesystem::path& path);

std::string file_digest(const std::filesystem::path& path);

struct CycleEconomy {
  std::string cycle;
  bool ok = false;
  std::string error;
  DpSolution solution;
};

struct DesignReport {
  std::string name;
  DesignEvaluation evaluation;
  std::vector<ModeType> mode_types;
  TractiveEnvelope envelope;
  double accel_s = 0;
  std::vector<CycleEconomy> cycles;
};

/// Shared state for evaluating many designs of one study.
class Evaluator {
 public:
  Evaluator(const Study& study, std::filesystem::path cache_dir = {}, int threads = 1);

  const Study& study() const { return study_; }
  ModeLibrary& library() { return library_; }
  const DesignSpace& space() const { return space_; }
  PearsCache& pears_cache() { return *pears_; }
  EnvelopeMemo& envelopes() { return *envelopes_; }

  /// Not thread-safe (populates the mode library).
  DesignEvaluation evaluate(const DesignSpec& spec);

  /// The remaining calls are safe to run concurrently once `design`'s records exist.
  double accel_time(const DesignEvaluation& design, TractiveEnvelope* envelope = nullptr);
  const DriveCycle& cycle(const std::string& name);
  DpProblem dp_problem(const DesignEvaluation& design, const std::string& cycle_name, int threads = 1);
  CycleEconomy economy(const DesignEvaluation& design, const std::string& cycle_name, const DpConfig& cfg, int threads = 1);

  DesignReport analyze(const DesignSpec& spec, const std::vector<std::string>& cycles);

 private:
  struct CycleData {
    DriveCycle cycle;
    std::string key;
    StcGrid stc;
  };
  const CycleData& cycle_data(const std::string& name);

  Study study_;
  ModeLibrary library_;
  DesignSpace space_;
  int threads_;
  std::unique_ptr<PearsCache> pears_;
  std::unique_ptr<EnvelopeMemo> envelopes_;
  std::mutex cycles_mu_;
  std::map<std::string, std::unique_ptr<CycleData>> cycles_;
};

struct SearchOptions {
  std::filesystem::path run_dir;
  std::uint64_t begin = 0, end = 0;
  std::uint64_t chunk = 1u << 20;  // designs per checkpointed partition
  int workers = 1;
  std::filesystem::path cache_dir;  // PEARS columns; empty keeps them in memory
};

struct FunnelCounts {
  std::uint64_t enumerated = 0, kept = 0, unique = 0, launch_ok = 0, launch_better = 0, evaluated = 0,
                beat_both = 0, beat_and_faster = 0, quarantined = 0;
};

struct SearchSummary {
  FunnelCounts funnel;
  double benchmark_accel_s = 0, benchmark_fuds_mpg = 0, benchmark_hwfet_mpg = 0;
  std::filesystem::path results;
  bool empty = false;
};

/// Runs (or resumes) the search pipeline for [begin, end). Completed partitions are not recomputed;
/// later stages are rebuilt from every partition recorded in the run manifest.
SearchSummary run_search(const Study& study, const SearchOptions& options);

/// Human-readable report of a run directory: funnel beside the reference numbers, launch-time
/// histogram and the top-ranked designs.
std::string search_report(const std::filesystem::path& run_dir, std::size_t top = 20);

}  // namespace pgs
