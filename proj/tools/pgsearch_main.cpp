// pgsearch: counts, single-design analysis, design search, DP weight calibration, run reports.

#include "pgsearch/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace pgs;

namespace {

constexpr int kConfigError = 2;
constexpr int kStageError = 3;

std::string default_config() { return std::string(PGSEARCH_DATA_DIR) + "/base_config.json"; }

std::string f2(double v, int prec = 2) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_counts(int n_pg, int k_min, int k_max, bool classify, const std::string& config) {
  if (n_pg < 1 || n_pg > 5) throw ConfigError("n_pg must be in 1..5");
  const ClutchCatalog cat = build_clutch_catalog(n_pg, NodeId::of(n_pg, GearNode::carrier));
  const std::uint64_t n_clutch = cat.locations.size();
  const std::uint64_t n_conf = count_configurations(n_pg);
  std::cout << "n_pg\t" << n_pg << "\n";
  std::cout << "clutch_locations\t" << n_clutch << "\n";
  std::cout << "mode_candidates\t" << count_mode_candidates(n_clutch, k_min, k_max) << "\t(k " << k_min << ".." << k_max
            << ")\n";
  std::cout << "configurations\t" << n_conf << "\n";
  if (n_pg == 3) {
    PowertrainConfiguration base;
    for (int k = 1; k <= 3; ++k) base.gears.push_back({k, 1, 2});
    base.placement = {NodeId::of(3, GearNode::carrier), NodeId::of(1, GearNode::ring), NodeId::of(1, GearNode::sun),
                      NodeId::of(2, GearNode::sun)};
    std::cout << "designs\t" << DesignSpace(base).size() << "\t(per configuration)\n";
  }
  if (n_clutch >= 6) std::cout << "designs_unrestricted\t" << count_design_space(n_conf, n_clutch) << "\n";
  else std::cout << "designs_unrestricted\t0\t(fewer than six clutch locations)\n";
  if (!classify) return 0;

  const Study study = load_study(config);
  Evaluator ev(study);
  const ClutchCatalog full = build_clutch_catalog(static_cast<int>(study.base.gears.size()), study.base.node_of(Device::output));
  const ModeClassCounts c = count_mode_classes(ev.library(), full, k_min, k_max);
  std::cout << "\ncandidates\t" << c.candidates << "\ninfeasible\t" << c.infeasible << "\npartitions\t" << ev.library().size()
            << "\n";
  std::cout << "type\tname\toriginal\tunique\tforward\n";
  std::uint64_t to = 0, tu = 0, tf = 0;
  for (int t = 1; t <= kModeTypeCount; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    std::cout << t << '\t' << mode_type_name(static_cast<ModeType>(t)) << '\t' << c.original[i] << '\t' << c.unique[i] << '\t'
              << c.forward[i] << "\n";
    to += c.original[i];
    tu += c.unique[i];
    tf += c.forward[i];
  }
  std::cout << "total\t-\t" << to << '\t' << tu << '\t' << tf << "\n";
  return 0;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw StageError("cannot write " + p.string());
  out << text;
}

std::string state_text(const DesignMode& m) {
  std::string s;
  for (int c : m.engaged) s += "C" + std::to_string(c + 1);
  return s;
}

int cmd_analyze(const std::string& config, const std::vector<std::string>& designs, const std::string& cycles_arg,
                const std::string& out_dir, int threads) {
  const Study study = load_study(config);
  const auto cycles = split(cycles_arg, ',');
  for (const auto& c : cycles)
    if (!study.cycles.count(c)) throw ConfigError("cycle '" + c + "' is not configured");
  Evaluator ev(study, {}, threads);
  std::vector<DesignReport> reports;
  int status = 0;
  for (const auto& path : designs) {
    const DesignSpec spec = load_design(path);
    DesignReport r = ev.analyze(spec, cycles);
    std::cout << "design\t" << r.name << "\n";
    std::cout << "modes\tstate\ttype\tdof\tforward\tbackward\tecvt\n";
    for (const auto& m : r.evaluation.modes)
      std::cout << "\t" << state_text(m) << '\t' << type_number(m.record->type) << '\t' << m.record->dof << '\t'
                << m.record->forward << '\t' << m.record->backward << '\t' << m.record->ecvt << "\n";
    std::cout << "accel_0_100_s\t" << f2(r.accel_s) << "\t" << launch_class_name(classify_launch(r.accel_s, study.launch.benchmark_s, study.launch.cutoff_s)) << "\n";
    std::cout << "cycle\tmpg\tfuel_l\tsoc_f\tshifts\tengine_starts\tev_share\tmode_share\n";
    double city = 0, hwy = 0;
    for (const auto& c : r.cycles) {
      if (!c.ok) {
        std::cout << c.cycle << "\tinfeasible\t" << c.error << "\n";
        status = kStageError;
        continue;
      }
      const auto& s = c.solution;
      std::cout << c.cycle << '\t' << f2(s.mpg) << '\t' << f2(s.fuel_l, 4) << '\t' << f2(s.soc_final(), 4) << '\t' << s.shifts
                << '\t' << s.engine_starts << '\t' << f2(s.ev_share, 3) << '\t';
      for (std::size_t m = 0; m < s.mode_share.size(); ++m)
        std::cout << (m ? "," : "") << state_text(r.evaluation.modes[m]) << "=" << f2(s.mode_share[m], 3);
      std::cout << "\n";
      if (c.cycle == "fuds") city = s.mpg;
      if (c.cycle == "hwfet") hwy = s.mpg;
    }
    if (city > 0 && hwy > 0) std::cout << "weighted_mpg\t" << f2(weighted_fuel_economy(city, hwy)) << "\n";
    std::cout << "\n";

    if (!out_dir.empty()) {
      const fs::path dir = fs::path(out_dir) / r.name;
      std::ostringstream env;
      env << "speed_kmh\ttorque_nm\taccel_mps2\tmode\n";
      for (std::size_t i = 0; i < r.envelope.speed.size(); ++i)
        env << f2(r.envelope.speed[i] * 3.6, 1) << '\t' << f2(r.envelope.torque[i], 3) << '\t' << f2(r.envelope.accel[i], 5) << '\t'
            << r.envelope.mode[i] << '\n';
      write_file(dir / "envelope.tsv", env.str());
      for (const auto& c : r.cycles) {
        if (!c.ok) continue;
        const DriveCycle& cyc = ev.cycle(c.cycle);
        std::ostringstream tr;
        tr << "time_s\tspeed_kmh\tmode\tstate\tengine\tsoc\n";
        for (std::size_t k = 0; k < c.solution.op.size(); ++k) {
          const int op = c.solution.op[k];
          tr << f2(cyc.time[k], 1) << '\t' << f2(cyc.speed[k] * 3.6, 2) << '\t' << op / 2 << '\t'
             << state_text(r.evaluation.modes[op / 2]) << '\t' << (op % 2 ? "on" : "off") << '\t' << f2(c.solution.soc[k + 1], 5)
             << '\n';
        }
        write_file(dir / ("trace_" + c.cycle + ".tsv"), tr.str());
      }
    }
    reports.push_back(std::move(r));
  }
  if (reports.size() >= 2) {
    const auto& a = reports[0];
    const auto& b = reports[1];
    std::cout << "comparison\t" << a.name << " vs " << b.name << "\n";
    std::cout << "cycle\t" << a.name << "_mpg\t" << b.name << "_mpg\timprovement_pct\n";
    for (std::size_t i = 0; i < cycles.size(); ++i) {
      if (!a.cycles[i].ok || !b.cycles[i].ok) continue;
      const double ma = a.cycles[i].solution.mpg, mb = b.cycles[i].solution.mpg;
      std::cout << cycles[i] << '\t' << f2(ma) << '\t' << f2(mb) << '\t' << f2(100.0 * (ma - mb) / mb) << "\n";
    }
    std::cout << "accel_0_100_s\t" << f2(a.accel_s) << '\t' << f2(b.accel_s) << "\n";
  }
  return status;
}

int cmd_search(const std::string& config, const SearchOptions& opt) {
  const Study study = load_study(config);
  const SearchSummary s = run_search(study, opt);
  if (s.empty) {
    std::cout << "empty range: nothing to do\n";
    return 0;
  }
  const auto& f = s.funnel;
  std::cout << "enumerated\t" << f.enumerated << "\nscreened\t" << f.kept << "\nunique\t" << f.unique << "\nlaunch_ok\t"
            << f.launch_ok << "\nlaunch_better\t" << f.launch_better << "\nfuel_evaluated\t" << f.evaluated
            << "\nbeat_benchmark_both\t" << f.beat_both << "\nbeat_and_faster\t" << f.beat_and_faster << "\nquarantined\t"
            << f.quarantined << "\n";
  std::cout << "benchmark\taccel " << f2(s.benchmark_accel_s) << " s\tfuds " << f2(s.benchmark_fuds_mpg) << " mpg\thwfet "
            << f2(s.benchmark_hwfet_mpg) << " mpg\n";
  std::cout << "results\t" << s.results.string() << "\n";
  return 0;
}

int cmd_calibrate(const std::string& config, const std::string& design, double soc_tol, double min_interval, int threads) {
  const Study study = load_study(config);
  Evaluator ev(study, {}, threads);
  const DesignEvaluation d = ev.evaluate(load_design(design));
  const DpProblem fuds = ev.dp_problem(d, "fuds", threads);
  const DpProblem hwfet = ev.dp_problem(d, "hwfet", threads);
  const CalibrationResult r = calibrate_weights({&fuds, &hwfet}, 1, study.dp, soc_tol, min_interval, threads);
  std::cout << "alpha\tbeta\tworst_soc_error\thwfet_s_per_shift\tok\n";
  for (const auto& t : r.trials)
    std::cout << t.alpha << '\t' << t.beta << '\t' << f2(t.soc_error, 5) << '\t' << f2(t.shift_interval, 1) << '\t' << t.ok << "\n";
  std::cout << "chosen\talpha " << r.alpha << "\tbeta " << r.beta << "\t" << (r.met ? "targets met" : "targets not met") << "\n";
  return r.met ? 0 : kStageError;
}

int cmd_report(const std::string& run_dir, const std::string& out, std::size_t top) {
  const std::string text = search_report(run_dir, top);
  if (out.empty()) std::cout << text;
  else write_file(out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Planetary-gear hybrid powertrain design search"};
  app.require_subcommand(1);

  auto* counts = app.add_subcommand("counts", "Clutch, mode, configuration and design counts");
  int n_pg = 3, k_min = 3, k_max = 5;
  bool classify = false;
  std::string config = default_config();
  counts->add_option("--n-pg", n_pg, "Number of planetary gear sets");
  counts->add_option("--k-min", k_min, "Smallest engaged-clutch count");
  counts->add_option("--k-max", k_max, "Largest engaged-clutch count");
  counts->add_flag("--classify", classify, "Also derive and classify every mode of the configured base powertrain");
  counts->add_option("--config", config, "Study configuration");

  auto* analyze = app.add_subcommand("analyze", "Launch time and drive-cycle fuel economy of hand-written designs");
  std::vector<std::string> designs;
  std::string cycles = "fuds,hwfet,us06", out_dir;
  int threads = 1;
  analyze->add_option("--config", config, "Study configuration");
  analyze->add_option("--design", designs, "Design file (repeat to compare; the first is compared against the second)")->required();
  analyze->add_option("--cycles", cycles, "Comma-separated cycle names");
  analyze->add_option("--out", out_dir, "Directory for envelope and mode-trace exports");
  analyze->add_option("--threads", threads, "Worker threads");

  auto* search = app.add_subcommand("search", "Enumerate, screen, dedupe and rank a design-index range");
  SearchOptions sopt;
  std::string range, run_dir = "run", cache_dir;
  search->add_option("--config", config, "Study configuration");
  search->add_option("--run-dir", run_dir, "Run directory holding the manifest and result files");
  search->add_option("--range", range, "Design index range BEGIN:END (END exclusive) or 'all'")->required();
  search->add_option("--chunk", sopt.chunk, "Designs per checkpointed partition");
  search->add_option("--workers", sopt.workers, "Worker threads");
  search->add_option("--cache-dir", cache_dir, "Directory for persisted cell tables");

  auto* calibrate = app.add_subcommand("calibrate", "Tune the shift and terminal-SOC weights on one design");
  std::string cal_design = std::string(PGSEARCH_DATA_DIR) + "/designs/gm_2mode.json";
  double soc_tol = 0.01, min_interval = 30.0;
  calibrate->add_option("--config", config, "Study configuration");
  calibrate->add_option("--design", cal_design, "Design file");
  calibrate->add_option("--soc-tolerance", soc_tol, "Allowed |SOC_f - SOC_desired|");
  calibrate->add_option("--min-shift-interval", min_interval, "Minimum seconds per mode shift on the highway cycle");
  calibrate->add_option("--threads", threads, "Worker threads");

  auto* report = app.add_subcommand("export-report", "Summarize a search run directory");
  std::string report_out;
  std::size_t top = 20;
  report->add_option("--run-dir", run_dir, "Run directory")->required();
  report->add_option("--out", report_out, "Output file (default stdout)");
  report->add_option("--top", top, "Number of ranked designs to list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    if (*counts) return cmd_counts(n_pg, k_min, k_max, classify, config);
    if (*analyze) return cmd_analyze(config, designs, cycles, out_dir, threads);
    if (*search) {
      sopt.run_dir = run_dir;
      sopt.cache_dir = cache_dir;
      if (range == "all") {
        sopt.begin = 0;
        sopt.end = DesignSpace(load_study(config).base).size();
      } else {
        const auto colon = range.find(':');
        if (colon == std::string::npos) throw ConfigError("range must be BEGIN:END");
        try {
          sopt.begin = std::stoull(range.substr(0, colon));
          sopt.end = std::stoull(range.substr(colon + 1));
        } catch (const std::logic_error&) {
          throw ConfigError("range must be BEGIN:END with non-negative integers");
        }
      }
      return cmd_search(config, sopt);
    }
    if (*calibrate) return cmd_calibrate(config, cal_design, soc_tol, min_interval, threads);
    if (*report) return cmd_report(run_dir, report_out, top);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kStageError;
  }
  return 0;
}
