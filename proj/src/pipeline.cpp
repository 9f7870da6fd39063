#include "pgsearch/pipeline.hpp"
#include "pgsearch/digest.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace pgs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw StageError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, p);
}

std::string fmt(double v, int prec = 4) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

Rational json_rational(const json& v, const std::string& what) {
  try {
    if (v.is_string()) return parse_rational(v.get<std::string>());
    if (v.is_number_integer()) return Rational(v.get<long>());
    if (v.is_number()) return rational_from_double(v.get<double>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(what + ": " + e.what());
  }
  throw ConfigError(what + ": expected a number or a fraction string");
}

Device device_from_name(const std::string& s) {
  const auto lower = [](std::string x) {
    for (char& c : x) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return x;
  };
  for (Device d : kDevices)
    if (lower(s) == lower(device_name(d))) return d;
  throw ConfigError("unknown device '" + s + "'");
}

template <class T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("setting '") + key + "': " + e.what());
    }
  }
}

}  // namespace

std::string file_digest(const fs::path& path) { return hex64(fnv1a64(read_text(path))); }

std::string Study::settings_text() const {
  std::ostringstream os;
  os << "gears";
  for (const auto& g : base.gears) os << ' ' << g.index << ':' << to_fraction_string(g.sun_teeth) << '/' << to_fraction_string(g.ring_teeth);
  os << "\nplacement";
  for (Device d : kDevices) os << ' ' << device_name(d) << '=' << node_name(base.node_of(d));
  os << "\npermanent";
  for (const auto& c : base.permanent) os << ' ' << c.name();
  os << "\ninertia " << to_fraction_string(inertias.engine) << ' ' << to_fraction_string(inertias.mg1) << ' '
     << to_fraction_string(inertias.mg2) << ' ' << to_fraction_string(inertias.vehicle_reflected);
  for (const auto& q : inertias.node_parasitic) os << ' ' << to_fraction_string(q);
  os << "\ngrid " << grid.key();
  os << "\ndp " << dp.soc_min << ' ' << dp.soc_max << ' ' << dp.soc_step << ' ' << dp.soc_initial << ' ' << dp.soc_desired
     << ' ' << dp.alpha << ' ' << dp.shift_weights[0] << ' ' << dp.shift_weights[1] << ' ' << dp.shift_weights[2] << ' '
     << dp.beta;
  os << "\nlaunch " << launch.v_max_kmh << ' ' << launch.dv_kmh << ' ' << launch.free_speed_step_rpm << ' '
     << launch.battery_cap << ' ' << launch.rotating_inertia << ' ' << launch.target_kmh << ' ' << launch.benchmark_s
     << ' ' << launch.cutoff_s << '\n';
  return os.str();
}

Study load_study(const fs::path& path) {
  Study s;
  s.config_path = path;
  const fs::path dir = path.parent_path();
  const json j = read_json(path);
  s.input_digests["config"] = file_digest(path);
  try {
    const json& pt = j.at("powertrain");
    for (const auto& g : pt.at("gears")) {
      PlanetaryGearSet set;
      set.index = g.at("pg").get<int>();
      set.sun_teeth = json_rational(g.at("sun"), "gear sun");
      set.ring_teeth = json_rational(g.at("ring"), "gear ring");
      s.base.gears.push_back(set);
    }
    for (const auto& [dev, node] : pt.at("placement").items())
      s.base.placement[idx(device_from_name(dev))] = parse_node_name(node.get<std::string>());
    if (pt.contains("permanent"))
      for (const auto& c : pt.at("permanent")) s.base.permanent.push_back(parse_connection(c.get<std::string>()));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": powertrain: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": powertrain: " + e.what());
  }
  s.base.validate();

  if (j.contains("plant")) {
    const fs::path pp = dir / j.at("plant").get<std::string>();
    s.plant = load_plant(pp);
    s.input_digests["plant"] = file_digest(pp);
  }
  const auto& v = s.plant.vehicle;
  const Rational r = rational_from_double(v.tire_radius), fd = rational_from_double(v.final_drive);
  s.inertias = default_inertias(s.base.node_count(), rational_from_double(v.mass) * r * r / (fd * fd));
  if (j.contains("inertias")) {
    const json& in = j.at("inertias");
    if (in.contains("engine")) s.inertias.engine = json_rational(in.at("engine"), "engine inertia");
    if (in.contains("mg1")) s.inertias.mg1 = json_rational(in.at("mg1"), "mg1 inertia");
    if (in.contains("mg2")) s.inertias.mg2 = json_rational(in.at("mg2"), "mg2 inertia");
    if (in.contains("node_parasitic"))
      s.inertias.node_parasitic.assign(s.base.node_count(), json_rational(in.at("node_parasitic"), "node inertia"));
  }
  s.inertias.validate(s.base.node_count());

  if (j.contains("cycles"))
    for (const auto& [name, file] : j.at("cycles").items()) {
      s.cycles[name] = dir / file.get<std::string>();
      s.input_digests["cycle:" + name] = file_digest(s.cycles[name]);
    }
  if (j.contains("pears")) {
    const json& p = j.at("pears");
    get_opt(p, "speed_bin_kmh", s.grid.speed_bin_kmh);
    get_opt(p, "torque_bin_nm", s.grid.torque_bin_nm);
    get_opt(p, "engine_speed_step_rpm", s.grid.engine_speed_step_rpm);
    get_opt(p, "engine_torque_step_nm", s.grid.engine_torque_step_nm);
    get_opt(p, "mg_torque_step_nm", s.grid.mg_torque_step_nm);
    get_opt(p, "mg_speed_step_rpm", s.grid.mg_speed_step_rpm);
    get_opt(p, "nominal_soc", s.grid.nominal_soc);
  }
  if (!(s.grid.engine_speed_step_rpm > 0 && s.grid.engine_torque_step_nm > 0 && s.grid.mg_torque_step_nm > 0 &&
        s.grid.mg_speed_step_rpm > 0 && s.grid.speed_bin_kmh > 0 && s.grid.torque_bin_nm > 0))
    throw ConfigError("search grid steps must be positive");
  if (j.contains("dp")) {
    const json& d = j.at("dp");
    get_opt(d, "soc_min", s.dp.soc_min);
    get_opt(d, "soc_max", s.dp.soc_max);
    get_opt(d, "soc_step", s.dp.soc_step);
    get_opt(d, "soc_initial", s.dp.soc_initial);
    get_opt(d, "soc_desired", s.dp.soc_desired);
    get_opt(d, "alpha", s.dp.alpha);
    get_opt(d, "beta", s.dp.beta);
    get_opt(d, "shift_weights", s.dp.shift_weights);
  }
  s.dp.validate();
  if (j.contains("launch")) {
    const json& l = j.at("launch");
    get_opt(l, "v_max_kmh", s.launch.v_max_kmh);
    get_opt(l, "dv_kmh", s.launch.dv_kmh);
    get_opt(l, "free_speed_step_rpm", s.launch.free_speed_step_rpm);
    get_opt(l, "battery_cap", s.launch.battery_cap);
    get_opt(l, "rotating_inertia", s.launch.rotating_inertia);
    get_opt(l, "target_kmh", s.launch.target_kmh);
    get_opt(l, "benchmark_s", s.launch.benchmark_s);
    get_opt(l, "cutoff_s", s.launch.cutoff_s);
  }
  s.launch.validate();
  if (j.contains("benchmark_design")) {
    s.benchmark_design = dir / j.at("benchmark_design").get<std::string>();
    s.input_digests["benchmark_design"] = file_digest(s.benchmark_design);
  }
  if (j.contains("reference_funnel")) {
    const json& r = j.at("reference_funnel");
    get_opt(r, "unique", s.reference.unique);
    get_opt(r, "launch_ok", s.reference.launch_ok);
    get_opt(r, "beat_both", s.reference.beat_both);
    get_opt(r, "beat_and_faster", s.reference.beat_and_faster);
  }
  return s;
}

DesignSpec load_design(const fs::path& path) {
  const json j = read_json(path);
  DesignSpec d;
  try {
    d.name = j.value("name", path.stem().string());
    for (const auto& c : j.at("permanent")) d.permanent.push_back(parse_connection(c.get<std::string>()));
    for (const auto& c : j.at("clutches")) d.clutches.push_back(parse_connection(c.get<std::string>()));
    if (j.contains("states"))
      for (const auto& st : j.at("states")) {
        std::vector<int> s;
        for (const auto& c : st) {
          const int k = c.get<int>();
          if (k < 1 || k > static_cast<int>(d.clutches.size()))
            throw ConfigError(path.string() + ": state names clutch " + std::to_string(k) + " which does not exist");
          s.push_back(k - 1);
        }
        std::sort(s.begin(), s.end());
        d.states.push_back(std::move(s));
      }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return d;
}

// ---------------------------------------------------------------- evaluator

Evaluator::Evaluator(const Study& study, fs::path cache_dir, int threads)
    : study_(study),
      library_(assemble_full_dynamics(study.base, study.inertias)),
      space_(study.base),
      threads_(std::max(1, threads)) {
  std::ostringstream ctx;
  ctx << study.input_digests.count("plant") << (study.input_digests.count("plant") ? study.input_digests.at("plant") : "default");
  pears_ = std::make_unique<PearsCache>(hex64(fnv1a64(ctx.str() + "|" + study.settings_text())), std::move(cache_dir));
  envelopes_ = std::make_unique<EnvelopeMemo>(study.plant, study.launch);
}

DesignEvaluation Evaluator::evaluate(const DesignSpec& spec) { return evaluate_design(library_, spec); }

double Evaluator::accel_time(const DesignEvaluation& design, TractiveEnvelope* envelope) {
  std::vector<std::shared_ptr<const ModeEnvelope>> envs;
  for (const auto& m : design.modes)
    if (m.record->forward) envs.push_back(envelopes_->get(m.record->a_star));
  TractiveEnvelope env = combine_envelopes(envs, study_.launch);
  const double t = pgs::accel_time(env, study_.launch);
  if (envelope) *envelope = std::move(env);
  return t;
}

const Evaluator::CycleData& Evaluator::cycle_data(const std::string& name) {
  std::lock_guard lock(cycles_mu_);
  auto it = cycles_.find(name);
  if (it != cycles_.end()) return *it->second;
  const auto p = study_.cycles.find(name);
  if (p == study_.cycles.end()) throw ConfigError("cycle '" + name + "' is not configured");
  auto d = std::make_unique<CycleData>();
  d->cycle = load_cycle(p->second);
  d->key = cycle_key(d->cycle);
  d->stc = build_stc_grid(d->cycle, study_.plant.vehicle, study_.grid);
  return *cycles_.emplace(name, std::move(d)).first->second;
}

const DriveCycle& Evaluator::cycle(const std::string& name) { return cycle_data(name).cycle; }

DpProblem Evaluator::dp_problem(const DesignEvaluation& design, const std::string& cycle_name, int threads) {
  const CycleData& cd = cycle_data(cycle_name);
  std::vector<std::shared_ptr<const PearsColumn>> cols;
  for (const auto& m : design.modes)
    cols.push_back(pears_->get(m.record->a_star, cd.key, cd.stc, study_.plant, study_.grid, threads));
  return build_dp_problem(assemble_table(cd.stc, std::move(cols)), cd.cycle, study_.plant);
}

CycleEconomy Evaluator::economy(const DesignEvaluation& design, const std::string& cycle_name, const DpConfig& cfg,
                                int threads) {
  CycleEconomy e;
  e.cycle = cycle_name;
  try {
    const DpProblem p = dp_problem(design, cycle_name, threads);
    e.solution = threads > 1 ? solve_dp_parallel(p, cfg, threads) : solve_dp_serial(p, cfg);
    e.ok = true;
  } catch (const DpInfeasibleError& err) {
    e.error = err.what();
  }
  return e;
}

DesignReport Evaluator::analyze(const DesignSpec& spec, const std::vector<std::string>& cycles) {
  DesignReport r;
  r.name = spec.name;
  r.evaluation = evaluate(spec);
  if (r.evaluation.modes.empty()) throw StageError("design '" + spec.name + "' has no usable modes");
  for (const auto& m : r.evaluation.modes) r.mode_types.push_back(m.record->type);
  r.accel_s = accel_time(r.evaluation, &r.envelope);
  for (const auto& c : cycles) r.cycles.push_back(economy(r.evaluation, c, study_.dp, threads_));
  return r;
}

// ---------------------------------------------------------------- search

namespace {

struct PartitionEntry {
  std::uint64_t begin = 0, end = 0, enumerated = 0, kept = 0;
  std::string file, digest;
};

struct Manifest {
  std::map<std::string, std::string> inputs;
  std::string settings;
  std::vector<PartitionEntry> partitions;
  std::map<std::string, std::pair<std::string, std::string>> stages;  // name -> (file, digest)

  json to_json() const {
    json j;
    j["format"] = 1;
    j["inputs"] = inputs;
    j["settings_digest"] = settings;
    j["partitions"] = json::array();
    for (const auto& p : partitions)
      j["partitions"].push_back({{"begin", p.begin}, {"end", p.end}, {"enumerated", p.enumerated}, {"kept", p.kept},
                                 {"file", p.file}, {"digest", p.digest}, {"status", "complete"}});
    j["stages"] = json::object();
    for (const auto& [name, fd] : stages) j["stages"][name] = {{"file", fd.first}, {"digest", fd.second}, {"status", "complete"}};
    return j;
  }

  static Manifest from_json(const json& j) {
    Manifest m;
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.settings = j.at("settings_digest").get<std::string>();
    for (const auto& p : j.at("partitions"))
      m.partitions.push_back({p.at("begin").get<std::uint64_t>(), p.at("end").get<std::uint64_t>(),
                              p.at("enumerated").get<std::uint64_t>(), p.at("kept").get<std::uint64_t>(),
                              p.at("file").get<std::string>(), p.at("digest").get<std::string>()});
    for (const auto& [name, s] : j.at("stages").items())
      m.stages[name] = {s.at("file").get<std::string>(), s.at("digest").get<std::string>()};
    return m;
  }
};

void save_manifest(const fs::path& dir, const Manifest& m) { write_text(dir / "manifest.json", m.to_json().dump(2) + "\n"); }

std::string partition_name(std::uint64_t b, std::uint64_t e) {
  return "partitions/part_" + std::to_string(b) + "_" + std::to_string(e) + ".tsv";
}

std::string join_connections(const std::vector<Connection>& cs) {
  std::string s;
  for (std::size_t i = 0; i < cs.size(); ++i) s += (i ? ";" : "") + cs[i].name();
  return s;
}

std::string mode_types_text(const DesignEvaluation& d) {
  std::string s;
  for (std::size_t i = 0; i < d.modes.size(); ++i) s += (i ? "," : "") + std::to_string(type_number(d.modes[i].record->type));
  return s;
}

struct FuelRow {
  bool ok = false;
  double fuds = 0, hwfet = 0, weighted = 0, fuds_soc = 0, hwfet_soc = 0;
  std::size_t fuds_shifts = 0, hwfet_shifts = 0;
  std::string error;
};

std::string fuel_line(std::uint64_t index, const FuelRow& r) {
  std::ostringstream os;
  os << index << '\t' << (r.ok ? "ok" : "failed") << '\t' << fmt(r.fuds) << '\t' << fmt(r.hwfet) << '\t' << fmt(r.weighted)
     << '\t' << fmt(r.fuds_soc) << '\t' << fmt(r.hwfet_soc) << '\t' << r.fuds_shifts << '\t' << r.hwfet_shifts << '\t'
     << (r.error.empty() ? "-" : r.error);
  return os.str();
}

std::map<std::uint64_t, std::string> read_fuel_rows(const fs::path& p) {
  std::map<std::uint64_t, std::string> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows[std::stoull(line.substr(0, line.find('\t')))] = line;
  }
  return rows;
}

FuelRow parse_fuel_line(const std::string& line) {
  std::istringstream is(line);
  std::string tok;
  std::vector<std::string> f;
  while (std::getline(is, tok, '\t')) f.push_back(tok);
  FuelRow r;
  if (f.size() < 10) return r;
  r.ok = f[1] == "ok";
  r.fuds = std::stod(f[2]);
  r.hwfet = std::stod(f[3]);
  r.weighted = std::stod(f[4]);
  r.fuds_soc = std::stod(f[5]);
  r.hwfet_soc = std::stod(f[6]);
  r.fuds_shifts = std::stoul(f[7]);
  r.hwfet_shifts = std::stoul(f[8]);
  r.error = f[9] == "-" ? "" : f[9];
  return r;
}

}  // namespace

SearchSummary run_search(const Study& study, const SearchOptions& opt) {
  SearchSummary summary;
  if (opt.end < opt.begin) throw ConfigError("range end precedes its begin");
  if (opt.chunk == 0) throw ConfigError("partition size must be positive");
  if (opt.begin == opt.end) {
    summary.empty = true;
    return summary;
  }
  Evaluator ev(study, opt.cache_dir, 1);
  if (opt.end > ev.space().size()) throw ConfigError("range end beyond the design space (" + std::to_string(ev.space().size()) + ")");
  for (const char* c : {"fuds", "hwfet"})
    if (!study.cycles.count(c)) throw ConfigError(std::string("search needs a '") + c + "' cycle");

  const fs::path dir = opt.run_dir;
  fs::create_directories(dir);
  Manifest man;
  const std::string settings = hex64(fnv1a64(study.settings_text()));
  if (fs::exists(dir / "manifest.json")) {
    try {
      man = Manifest::from_json(read_json(dir / "manifest.json"));
    } catch (const json::exception& e) {
      throw ConfigError("unreadable manifest: " + std::string(e.what()));
    }
    if (man.inputs != study.input_digests || man.settings != settings)
      throw ConfigError("configuration drift: inputs or settings differ from the run manifest in " + dir.string());
  } else {
    man.inputs = study.input_digests;
    man.settings = settings;
  }

  // Stage 1: enumerate and screen, one checkpointed partition per chunk.
  for (std::uint64_t b = opt.begin; b < opt.end;) {
    const std::uint64_t e = std::min(opt.end, (b / opt.chunk + 1) * opt.chunk);
    auto it = std::find_if(man.partitions.begin(), man.partitions.end(), [&](const PartitionEntry& p) { return p.begin == b && p.end == e; });
    if (it == man.partitions.end())
      for (const auto& p : man.partitions)
        if (p.begin < e && b < p.end)
          throw ConfigError("range [" + std::to_string(b) + ", " + std::to_string(e) + ") overlaps recorded partition [" +
                          std::to_string(p.begin) + ", " + std::to_string(p.end) + ")");
    const bool done = it != man.partitions.end() && fs::exists(dir / it->file) && file_digest(dir / it->file) == it->digest;
    if (!done) {
      const ScanResult r = scan_designs_parallel(ev.space(), ev.library(), b, e, opt.workers);
      std::ostringstream os;
      os << survivor_header() << "\n";
      for (const auto& d : r.kept) os << survivor_record(ev.space(), d) << "\n";
      os << "# enumerated " << r.stats.enumerated << " kept " << r.stats.kept << "\n";
      const std::string name = partition_name(b, e);
      write_text(dir / name, os.str());
      PartitionEntry entry{b, e, r.stats.enumerated, r.stats.kept, name, file_digest(dir / name)};
      if (it != man.partitions.end()) *it = entry;
      else man.partitions.push_back(entry);
      std::sort(man.partitions.begin(), man.partitions.end(), [](const auto& x, const auto& y) { return x.begin < y.begin; });
      save_manifest(dir, man);
    }
    b = e;
  }

  // Stage 2: signature dedupe over every recorded partition.
  std::vector<DesignEvaluation> kept;
  for (const auto& p : man.partitions) {
    summary.funnel.enumerated += p.enumerated;
    summary.funnel.kept += p.kept;
    std::ifstream in(dir / p.file);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty() && line[0] != '#') kept.push_back(parse_survivor_signature(line));
  }
  const auto groups = dedupe_designs(kept);
  summary.funnel.unique = groups.size();
  {
    std::ostringstream os;
    os << "# representative\tmembers\tsignature\n";
    for (const auto& g : groups) {
      os << g.representative << '\t' << g.members << '\t';
      for (std::size_t i = 0; i < g.signature.size(); ++i) os << (i ? ";" : "") << hex64(g.signature[i]);
      os << '\n';
    }
    write_text(dir / "unique.tsv", os.str());
    man.stages["dedupe"] = {"unique.tsv", file_digest(dir / "unique.tsv")};
  }

  // Stage 3: launch screen.
  std::vector<DesignSpec> specs;
  std::vector<DesignEvaluation> evals;
  for (const auto& g : groups) {
    specs.push_back(ev.space().decode(g.representative));
    evals.push_back(ev.evaluate(specs.back()));
  }
  const long n = static_cast<long>(evals.size());
  std::vector<double> accel(n);
  std::vector<std::string> launch_err(n);
#pragma omp parallel for schedule(dynamic, 16) num_threads(std::max(1, opt.workers))
  for (long i = 0; i < n; ++i) {
    try {
      accel[i] = ev.accel_time(evals[i]);
    } catch (const std::exception& e) {
      accel[i] = std::numeric_limits<double>::infinity();
      launch_err[i] = e.what();
    }
  }
  std::ostringstream quarantine;
  quarantine << "# index\tstage\tmessage\n";
  {
    std::ostringstream os;
    os << "# index\taccel_s\tclass\n";
    for (long i = 0; i < n; ++i) {
      const auto cls = classify_launch(accel[i], study.launch.benchmark_s, study.launch.cutoff_s);
      os << evals[i].index << '\t' << fmt(accel[i]) << '\t' << launch_class_name(cls) << '\n';
      if (!launch_err[i].empty()) {
        quarantine << evals[i].index << "\tlaunch\t" << launch_err[i] << '\n';
        ++summary.funnel.quarantined;
      }
      if (cls != LaunchClass::rejected) ++summary.funnel.launch_ok;
      if (cls == LaunchClass::better) ++summary.funnel.launch_better;
    }
    write_text(dir / "launch.tsv", os.str());
    man.stages["launch"] = {"launch.tsv", file_digest(dir / "launch.tsv")};
  }

  // Benchmark design.
  if (!study.benchmark_design.empty()) {
    const DesignSpec bspec = load_design(study.benchmark_design);
    const DesignEvaluation bev = ev.evaluate(bspec);
    summary.benchmark_accel_s = ev.accel_time(bev);
    const auto f = ev.economy(bev, "fuds", study.dp, opt.workers);
    const auto h = ev.economy(bev, "hwfet", study.dp, opt.workers);
    if (!f.ok || !h.ok) throw StageError("benchmark design fails the fuel-economy stage: " + f.error + h.error);
    summary.benchmark_fuds_mpg = f.solution.mpg;
    summary.benchmark_hwfet_mpg = h.solution.mpg;
  }

  // Stage 4: fuel economy for launch-acceptable designs; earlier rows are reused.
  std::vector<long> todo;
  for (long i = 0; i < n; ++i)
    if (accel[i] <= study.launch.cutoff_s) todo.push_back(i);
  const auto previous = read_fuel_rows(dir / "fuel.tsv");
  std::vector<FuelRow> rows(n);
  std::vector<long> compute;
  for (long i : todo) {
    auto it = previous.find(evals[i].index);
    if (it != previous.end()) rows[i] = parse_fuel_line(it->second);
    else compute.push_back(i);
  }
  const long nc = static_cast<long>(compute.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, opt.workers))
  for (long c = 0; c < nc; ++c) {
    const long i = compute[c];
    FuelRow& r = rows[i];
    try {
      const auto f = ev.economy(evals[i], "fuds", study.dp);
      const auto h = ev.economy(evals[i], "hwfet", study.dp);
      if (!f.ok || !h.ok) {
        r.error = !f.ok ? "fuds: " + f.error : "hwfet: " + h.error;
        continue;
      }
      r.ok = true;
      r.fuds = f.solution.mpg;
      r.hwfet = h.solution.mpg;
      r.weighted = weighted_fuel_economy(r.fuds, r.hwfet);
      r.fuds_soc = f.solution.soc_final();
      r.hwfet_soc = h.solution.soc_final();
      r.fuds_shifts = f.solution.shifts;
      r.hwfet_shifts = h.solution.shifts;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  }
  {
    std::ostringstream os;
    os << "# index\tstatus\tfuds_mpg\thwfet_mpg\tweighted_mpg\tfuds_soc_f\thwfet_soc_f\tfuds_shifts\thwfet_shifts\terror\n";
    for (long i : todo) {
      os << fuel_line(evals[i].index, rows[i]) << '\n';
      ++summary.funnel.evaluated;
      if (!rows[i].ok) {
        quarantine << evals[i].index << "\tfuel\t" << rows[i].error << '\n';
        ++summary.funnel.quarantined;
      }
    }
    write_text(dir / "fuel.tsv", os.str());
    man.stages["fuel"] = {"fuel.tsv", file_digest(dir / "fuel.tsv")};
  }
  write_text(dir / "quarantine.tsv", quarantine.str());

  // Stage 5: ranking.
  std::vector<long> ranked;
  for (long i : todo)
    if (rows[i].ok) ranked.push_back(i);
  std::sort(ranked.begin(), ranked.end(), [&](long a, long b) {
    if (rows[a].weighted != rows[b].weighted) return rows[a].weighted > rows[b].weighted;
    if (accel[a] != accel[b]) return accel[a] < accel[b];
    return evals[a].index < evals[b].index;
  });
  {
    std::ostringstream os;
    os << "# rank\tindex\taccel_s\tlaunch\tfuds_mpg\thwfet_mpg\tweighted_mpg\tbeats_benchmark\tfaster\tmode_types\tpermanent\tclutches\n";
    std::size_t rank = 0;
    for (long i : ranked) {
      const bool beat = rows[i].fuds > summary.benchmark_fuds_mpg && rows[i].hwfet > summary.benchmark_hwfet_mpg;
      const bool faster = accel[i] < study.launch.benchmark_s;
      if (beat) ++summary.funnel.beat_both;
      if (beat && faster) ++summary.funnel.beat_and_faster;
      os << ++rank << '\t' << evals[i].index << '\t' << fmt(accel[i]) << '\t'
         << launch_class_name(classify_launch(accel[i], study.launch.benchmark_s, study.launch.cutoff_s)) << '\t'
         << fmt(rows[i].fuds) << '\t' << fmt(rows[i].hwfet) << '\t' << fmt(rows[i].weighted) << '\t' << (beat ? "yes" : "no")
         << '\t' << (faster ? "yes" : "no") << '\t' << mode_types_text(evals[i]) << '\t'
         << join_connections(specs[i].permanent) << '\t' << join_connections(specs[i].clutches) << '\n';
    }
    write_text(dir / "results.tsv", os.str());
    man.stages["rank"] = {"results.tsv", file_digest(dir / "results.tsv")};
  }
  summary.results = dir / "results.tsv";

  json sj;
  const auto& f = summary.funnel;
  sj["funnel"] = {{"enumerated", f.enumerated}, {"kept", f.kept}, {"unique", f.unique}, {"launch_ok", f.launch_ok},
                  {"launch_better", f.launch_better}, {"evaluated", f.evaluated}, {"beat_both", f.beat_both},
                  {"beat_and_faster", f.beat_and_faster}, {"quarantined", f.quarantined}};
  sj["reference_funnel"] = {{"unique", study.reference.unique}, {"launch_ok", study.reference.launch_ok},
                            {"beat_both", study.reference.beat_both}, {"beat_and_faster", study.reference.beat_and_faster}};
  sj["benchmark"] = {{"accel_s", fmt(summary.benchmark_accel_s)}, {"fuds_mpg", fmt(summary.benchmark_fuds_mpg)},
                     {"hwfet_mpg", fmt(summary.benchmark_hwfet_mpg)},
                     {"weighted_mpg", fmt(summary.benchmark_fuds_mpg > 0 ? weighted_fuel_economy(summary.benchmark_fuds_mpg, summary.benchmark_hwfet_mpg) : 0.0)}};
  sj["launch_thresholds"] = {{"benchmark_s", study.launch.benchmark_s}, {"cutoff_s", study.launch.cutoff_s}};
  write_text(dir / "summary.json", sj.dump(2) + "\n");
  man.stages["summary"] = {"summary.json", file_digest(dir / "summary.json")};
  save_manifest(dir, man);
  return summary;
}

std::string search_report(const fs::path& run_dir, std::size_t top) {
  if (!fs::exists(run_dir / "summary.json")) throw ConfigError("no completed run in " + run_dir.string());
  const json s = read_json(run_dir / "summary.json");
  std::ostringstream os;
  const auto& f = s.at("funnel");
  const auto& r = s.at("reference_funnel");
  os << "funnel\tthis_run\treference\n";
  os << "enumerated\t" << f.at("enumerated") << "\t-\n";
  os << "screened\t" << f.at("kept") << "\t-\n";
  os << "unique\t" << f.at("unique") << '\t' << r.at("unique") << '\n';
  os << "launch_ok\t" << f.at("launch_ok") << '\t' << r.at("launch_ok") << '\n';
  os << "beat_both\t" << f.at("beat_both") << '\t' << r.at("beat_both") << '\n';
  os << "beat_and_faster\t" << f.at("beat_and_faster") << '\t' << r.at("beat_and_faster") << '\n';
  os << "quarantined\t" << f.at("quarantined") << "\t-\n\n";
  const auto& b = s.at("benchmark");
  os << "benchmark\taccel_s " << b.at("accel_s").get<std::string>() << "\tfuds_mpg " << b.at("fuds_mpg").get<std::string>()
     << "\thwfet_mpg " << b.at("hwfet_mpg").get<std::string>() << "\tweighted_mpg " << b.at("weighted_mpg").get<std::string>()
     << "\n\n";

  std::vector<double> times;
  {
    std::ifstream in(run_dir / "launch.tsv");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string idx, t;
      std::getline(ls, idx, '\t');
      std::getline(ls, t, '\t');
      times.push_back(t == "inf" ? std::numeric_limits<double>::infinity() : std::stod(t));
    }
  }
  os << "launch time histogram (s)\n" << histogram_text(accel_histogram(times, 4.0, 12.0, 0.25)) << '\n';

  os << "top designs\n";
  std::ifstream in(run_dir / "results.tsv");
  std::string line;
  std::size_t shown = 0;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      os << line.substr(2) << '\n';
      continue;
    }
    if (shown++ >= top) break;
    os << line << '\n';
  }
  return os.str();
}

}  // namespace pgs
