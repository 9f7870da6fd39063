#include "pgsearch/mode_engine.hpp"
#include "pgsearch/digest.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

namespace pgs {

int ClutchCatalog::index_of(const Connection& c) const {
  auto it = std::find(locations.begin(), locations.end(), c);
  return it == locations.end() ? -1 : static_cast<int>(it - locations.begin());
}

ClutchCatalog build_clutch_catalog(int n_pg, NodeId output_node) {
  if (n_pg < 1) throw ConfigError("clutch catalog needs at least one planetary gear set");
  ClutchCatalog cat;
  cat.n_pg = n_pg;
  cat.output = output_node;
  const int n = 3 * n_pg;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const NodeId a{i}, b{j};
      if (a.pg_number() == b.pg_number()) {
        // Locking any two nodes of one gear set gives the same dynamics; keep sun-ring only.
        const bool sun_ring = a.gear_node() == GearNode::sun && b.gear_node() == GearNode::ring;
        if (!sun_ring) continue;
      }
      cat.locations.push_back(Connection::link(a, b));
    }
  }
  for (int i = 0; i < n; ++i)
    if (NodeId{i} != output_node) cat.locations.push_back(Connection::ground(NodeId{i}));
  return cat;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::uint64_t count_mode_candidates(std::uint64_t catalog_size, int k_min, int k_max) {
  std::uint64_t total = 0;
  for (int k = std::max(0, k_min); k <= k_max; ++k) total += binomial(catalog_size, static_cast<std::uint64_t>(k));
  return total;
}

const char* mode_type_name(ModeType t) {
  switch (t) {
    case ModeType::series: return "Series Mode";
    case ModeType::compound_split_3dof: return "Compound Split (3 DoF)";
    case ModeType::compound_split_2dof: return "Compound Split (2 DoF)";
    case ModeType::input_split: return "Input Split";
    case ModeType::output_split: return "Output Split";
    case ModeType::parallel_ecvt_1mg: return "Parallel with ECVT (Engine + 1MG)";
    case ModeType::parallel_ecvt_2mg_serial: return "Parallel with ECVT (Engine + 2 MGs in serial)";
    case ModeType::engine_only_fixed_gear: return "Engine Only (Fixed Gear)";
    case ModeType::fixed_gear_2mg_2dof: return "Parallel with Fixed Gear (Engine + 2MGs, 2 DoF)";
    case ModeType::fixed_gear_2mg_1dof: return "Parallel with Fixed Gear (Engine + 2MGs, 1 DoF)";
    case ModeType::fixed_gear_1mg_1dof: return "Parallel with Fixed Gear (Engine + 1MG, 1 DoF)";
    case ModeType::ev_2mg_2dof: return "EV (2MGs, 2 DoF)";
    case ModeType::ev_2mg_1dof: return "EV (2MGs, 1 DoF)";
    case ModeType::ev_1mg_1dof: return "EV (1MG, 1 DoF)";
  }
  return "?";
}

int type_dof(ModeType t) {
  switch (t) {
    case ModeType::compound_split_3dof: return 3;
    case ModeType::engine_only_fixed_gear:
    case ModeType::fixed_gear_2mg_1dof:
    case ModeType::fixed_gear_1mg_1dof:
    case ModeType::ev_2mg_1dof:
    case ModeType::ev_1mg_1dof: return 1;
    default: return 2;
  }
}

ModeFeatures mode_features(const CharacteristicMatrix& a_star) {
  const auto& A = a_star.entries;
  ModeFeatures f;
  f.dof = a_star.dof;
  f.c_eng = sgn(A(0, 1));
  f.c_mg1 = sgn(A(0, 2));
  f.c_mg2 = sgn(A(0, 3));
  f.v_eng3 = sgn(A(1, 2));
  f.v_eng4 = sgn(A(1, 3));
  auto r = [&](Device a, Device b) { return static_cast<int>(A.stack_rows(idx(a), idx(b)).rank()); };
  f.r_ve = r(Device::output, Device::engine);
  f.r_vmg1 = r(Device::output, Device::mg1);
  f.r_vmg2 = r(Device::output, Device::mg2);
  f.r_emg1 = r(Device::engine, Device::mg1);
  f.r_emg2 = r(Device::engine, Device::mg2);
  f.r_mg1mg2 = r(Device::mg1, Device::mg2);
  return f;
}

bool criteria_hold(ModeType type, const ModeFeatures& f) {
  const bool ce = f.c_eng != 0;
  const bool both_mg = f.c_mg1 != 0 && f.c_mg2 != 0;  // C_MG1 C_MG2 != 0
  const bool any_mg = f.c_mg1 != 0 || f.c_mg2 != 0;   // C_MG1^2 + C_MG2^2 != 0
  switch (type) {
    case ModeType::series:
      return f.dof == 2 && !ce && !both_mg && (f.v_eng3 == 0 || f.v_eng4 == 0) && any_mg &&
             (f.v_eng3 != 0 || f.v_eng4 != 0);
    case ModeType::compound_split_3dof: return f.dof == 3;
    case ModeType::compound_split_2dof:
      return f.dof == 2 && ce && both_mg && f.r_ve == 2 && f.r_vmg1 * f.r_vmg2 == 4 && f.r_emg1 * f.r_emg2 == 4 &&
             f.r_mg1mg2 == 2;
    case ModeType::input_split: return f.dof == 2 && ce && both_mg && f.r_vmg1 * f.r_vmg2 == 2;
    case ModeType::output_split: return f.dof == 2 && ce && both_mg && f.r_emg1 * f.r_emg2 == 2;
    case ModeType::parallel_ecvt_1mg: return f.dof == 2 && ce && !both_mg && any_mg;
    case ModeType::parallel_ecvt_2mg_serial: return f.dof == 2 && ce && both_mg && f.r_mg1mg2 == 1;
    case ModeType::engine_only_fixed_gear: return f.dof == 1 && ce && !both_mg && !any_mg;
    case ModeType::fixed_gear_2mg_2dof: return f.dof == 2 && ce && f.r_ve == 1 && both_mg;
    case ModeType::fixed_gear_2mg_1dof: return f.dof == 1 && ce && both_mg;
    case ModeType::fixed_gear_1mg_1dof: return f.dof == 1 && ce && !both_mg && any_mg;
    case ModeType::ev_2mg_2dof: return f.dof == 2 && !ce && both_mg;
    case ModeType::ev_2mg_1dof: return f.dof == 1 && !ce && both_mg;
    case ModeType::ev_1mg_1dof: return f.dof == 1 && !ce && !both_mg && any_mg;
  }
  return false;
}

std::vector<ModeType> matching_criteria(const ModeFeatures& f) {
  std::vector<ModeType> out;
  for (int t = 1; t <= kModeTypeCount; ++t)
    if (criteria_hold(static_cast<ModeType>(t), f)) out.push_back(static_cast<ModeType>(t));
  return out;
}

namespace {

ModeType classify_features(const ModeFeatures& f) {
  if (f.dof == 3) return ModeType::compound_split_3dof;
  if (criteria_hold(ModeType::series, f)) return ModeType::series;
  const bool ce = f.c_eng != 0;
  const bool both_mg = f.c_mg1 != 0 && f.c_mg2 != 0;
  const bool any_mg = f.c_mg1 != 0 || f.c_mg2 != 0;
  if (f.dof == 2) {
    if (ce) {
      if (both_mg) {
        if (f.r_ve == 1) return ModeType::fixed_gear_2mg_2dof;
        if (f.r_mg1mg2 == 1) return ModeType::parallel_ecvt_2mg_serial;
        if (f.r_vmg1 * f.r_vmg2 == 2) return ModeType::input_split;
        if (f.r_emg1 * f.r_emg2 == 2) return ModeType::output_split;
        if (criteria_hold(ModeType::compound_split_2dof, f)) return ModeType::compound_split_2dof;
      } else if (any_mg) {
        return ModeType::parallel_ecvt_1mg;
      }
    } else if (both_mg) {
      return ModeType::ev_2mg_2dof;
    }
  } else if (f.dof == 1) {
    if (ce) {
      if (both_mg) return ModeType::fixed_gear_2mg_1dof;
      if (any_mg) return ModeType::fixed_gear_1mg_1dof;
      return ModeType::engine_only_fixed_gear;
    }
    if (both_mg) return ModeType::ev_2mg_1dof;
    if (any_mg) return ModeType::ev_1mg_1dof;
  }
  std::ostringstream msg;
  msg << "no mode class matches: dof=" << f.dof << " C_eng=" << f.c_eng << " C_MG1=" << f.c_mg1
      << " C_MG2=" << f.c_mg2 << " V_eng(3)=" << f.v_eng3 << " V_eng(4)=" << f.v_eng4 << " R_VE=" << f.r_ve;
  throw ClassificationError(msg.str());
}

}  // namespace

ModeType classify_mode(const CharacteristicMatrix& a_star) { return classify_features(mode_features(a_star)); }

bool in_backward_set(const CharacteristicMatrix& a_star, ModeType type) {
  return type == ModeType::series || sgn(a_star.at(Device::output, Device::engine)) < 0;
}

bool in_ecvt_set(const CharacteristicMatrix& a_star, ModeType type) {
  const bool split = type == ModeType::compound_split_2dof || type == ModeType::input_split ||
                     type == ModeType::output_split;
  return split && sgn(a_star.at(Device::output, Device::engine)) > 0;
}

namespace {

// Engine torque is non-negative, so the engine never drives the output backwards when A*(1,2) >= 0.
bool forward_capable(const CharacteristicMatrix& a_star) {
  return sgn(a_star.at(Device::output, Device::engine)) >= 0;
}

bool powered(const CharacteristicMatrix& a_star) {
  return sgn(a_star.at(Device::output, Device::engine)) != 0 || sgn(a_star.at(Device::output, Device::mg1)) != 0 ||
         sgn(a_star.at(Device::output, Device::mg2)) != 0;
}

}  // namespace

std::variant<Mode, Infeasible> derive_mode(const FullSystemModel& model, std::span<const Connection> permanent,
                                           std::span<const Connection> engaged_clutches) {
  std::vector<Connection> all(permanent.begin(), permanent.end());
  all.insert(all.end(), engaged_clutches.begin(), engaged_clutches.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  for (const auto& c : all)
    if (c.is_ground() && c.a == model.device_node[idx(Device::output)])
      return Infeasible{"output node grounded"};

  const ModeRecord rec = ModeLibrary::evaluate(model, all);
  if (!rec.feasible()) return Infeasible{rec.reason};
  Mode m;
  m.engaged = std::move(all);
  m.a_star = rec.a_star;
  m.type = rec.type;
  m.forward_capable = rec.forward;
  m.backward_capable = rec.backward;
  return m;
}

std::vector<Mode> dedupe_modes(std::vector<Mode> modes) {
  std::sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) { return a.engaged < b.engaged; });
  std::vector<Mode> kept;
  std::unordered_set<std::string> seen;
  for (auto& m : modes)
    if (seen.insert(m.a_star.entries.to_string()).second) kept.push_back(std::move(m));
  return kept;
}

ModeSets mode_sets(std::span<const Mode> modes) {
  ModeSets sets;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    sets.all.push_back(i);
    if (in_backward_set(modes[i].a_star, modes[i].type)) sets.backward.push_back(i);
    if (in_ecvt_set(modes[i].a_star, modes[i].type)) sets.ecvt.push_back(i);
  }
  return sets;
}

std::uint64_t a_star_digest(const CharacteristicMatrix& a_star) { return fnv1a64(a_star.entries.to_string()); }

ModeLibrary::ModeLibrary(FullSystemModel model) : model_(std::move(model)) {}

ModeRecord ModeLibrary::evaluate(const FullSystemModel& model, std::span<const Connection> connections) {
  ModeRecord rec;
  try {
    rec.a_star = reduce_with_connections(model, connections);
  } catch (const DegenerateModeError& e) {
    rec.reason = e.what();
    return rec;
  }
  rec.dof = rec.a_star.dof;
  if (rec.dof < 1 || rec.dof > 3) {
    rec.reason = "dof " + std::to_string(rec.dof) + " outside 1..3";
    return rec;
  }
  if (!powered(rec.a_star)) {
    rec.reason = "no device torque reaches the output";
    return rec;
  }
  try {
    rec.type = classify_mode(rec.a_star);
  } catch (const ClassificationError& e) {
    rec.reason = std::string("unclassified: ") + e.what();
    return rec;
  }
  rec.status = ModeRecord::Status::feasible;
  rec.digest = a_star_digest(rec.a_star);
  rec.forward = forward_capable(rec.a_star);
  rec.backward = in_backward_set(rec.a_star, rec.type);
  rec.ecvt = in_ecvt_set(rec.a_star, rec.type);
  return rec;
}

void ModeLibrary::populate(std::span<const std::pair<std::uint64_t, std::vector<Connection>>> partitions,
                           bool parallel) {
  std::vector<std::size_t> missing;
  std::unordered_set<std::uint64_t> queued;
  for (std::size_t i = 0; i < partitions.size(); ++i)
    if (!records_.count(partitions[i].first) && queued.insert(partitions[i].first).second) missing.push_back(i);
  std::vector<std::unique_ptr<ModeRecord>> fresh(missing.size());
  const auto count = static_cast<long>(missing.size());
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
  for (long i = 0; i < count; ++i) {
    const auto& p = partitions[missing[static_cast<std::size_t>(i)]];
    fresh[static_cast<std::size_t>(i)] = std::make_unique<ModeRecord>(evaluate(model_, p.second));
  }
  for (std::size_t i = 0; i < missing.size(); ++i)
    records_.emplace(partitions[missing[i]].first, std::move(fresh[i]));
}

const ModeRecord& ModeLibrary::resolve(std::span<const Connection> connections) {
  const auto key = merge_nodes(model_.n_nodes, connections).key();
  auto it = records_.find(key);
  if (it != records_.end()) return *it->second;
  auto rec = std::make_unique<ModeRecord>(evaluate(model_, connections));
  return *records_.emplace(key, std::move(rec)).first->second;
}

const ModeRecord* ModeLibrary::find(std::uint64_t key) const {
  auto it = records_.find(key);
  return it == records_.end() ? nullptr : it->second.get();
}

ModeClassCounts count_mode_classes(ModeLibrary& library, const ClutchCatalog& catalog, int k_min, int k_max) {
  const int n = static_cast<int>(catalog.locations.size());
  const int n_nodes = library.model().n_nodes;
  std::vector<std::uint64_t> keys;
  std::vector<std::pair<std::uint64_t, std::vector<Connection>>> reps;
  std::unordered_set<std::uint64_t> seen;

  std::vector<Connection> chosen;
  for (int k = k_min; k <= k_max; ++k) {
    std::vector<int> comb(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) comb[i] = i;
    while (true) {
      chosen.clear();
      for (int i : comb) chosen.push_back(catalog.locations[i]);
      const auto key = merge_nodes(n_nodes, chosen).key();
      keys.push_back(key);
      if (seen.insert(key).second) reps.emplace_back(key, chosen);
      int i = k - 1;
      while (i >= 0 && comb[i] == n - k + i) --i;
      if (i < 0) break;
      ++comb[i];
      for (int j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
    }
  }
  library.populate(reps, true);

  ModeClassCounts counts;
  counts.candidates = keys.size();
  std::array<std::set<std::uint64_t>, kModeTypeCount> unique, forward;
  for (auto key : keys) {
    const ModeRecord* rec = library.find(key);
    if (!rec->feasible()) {
      ++counts.infeasible;
      continue;
    }
    const int t = type_number(rec->type) - 1;
    ++counts.original[t];
    unique[t].insert(rec->digest);
    if (rec->forward) forward[t].insert(rec->digest);
  }
  for (int t = 0; t < kModeTypeCount; ++t) {
    counts.unique[t] = unique[t].size();
    counts.forward[t] = forward[t].size();
  }
  return counts;
}

std::string mode_report_header() {
  std::string h = "engaged";
  for (Device r : kDevices)
    for (Device c : kDevices) h += std::string("\tA_") + device_name(r) + "_" + device_name(c);
  h += "\tdof\ttype\tforward\tbackward_set\tecvt_set";
  return h;
}

std::string mode_report_row(const Mode& mode) {
  std::string row;
  for (std::size_t i = 0; i < mode.engaged.size(); ++i) {
    if (i) row.push_back(';');
    row += mode.engaged[i].name();
  }
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) row += "\t" + to_fraction_string(mode.a_star.entries(r, c));
  row += "\t" + std::to_string(mode.a_star.dof) + "\t" + std::to_string(type_number(mode.type));
  row += mode.forward_capable ? "\t1" : "\t0";
  row += in_backward_set(mode.a_star, mode.type) ? "\t1" : "\t0";
  row += in_ecvt_set(mode.a_star, mode.type) ? "\t1" : "\t0";
  return row;
}

}  // namespace pgs
