#include "pgsearch/design_engine.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <omp.h>

namespace pgs {

std::uint64_t count_design_space(std::uint64_t n_conf, std::uint64_t catalog_size) {
  if (catalog_size < 6) throw std::invalid_argument("design space needs at least 6 catalog locations");
  return n_conf * binomial(catalog_size, 3) * binomial(catalog_size - 3, 3);
}

std::uint64_t count_configurations(int n_pg) {
  const std::uint64_t n = 3 * static_cast<std::uint64_t>(n_pg);
  if (n < 4) return 0;
  return n * (n - 1) * (n - 2) * (n - 3);
}

std::uint64_t combination_rank(std::span<const int> comb, int n) {
  const int k = static_cast<int>(comb.size());
  std::uint64_t rank = 0;
  int prev = -1;
  for (int i = 0; i < k; ++i) {
    for (int v = prev + 1; v < comb[i]; ++v) rank += binomial(static_cast<std::uint64_t>(n - v - 1), static_cast<std::uint64_t>(k - i - 1));
    prev = comb[i];
  }
  return rank;
}

std::vector<int> combination_unrank(std::uint64_t rank, int n, int k) {
  std::vector<int> comb;
  comb.reserve(static_cast<std::size_t>(k));
  int v = 0;
  for (int i = 0; i < k; ++i) {
    while (true) {
      const std::uint64_t block = binomial(static_cast<std::uint64_t>(n - v - 1), static_cast<std::uint64_t>(k - i - 1));
      if (rank < block) break;
      rank -= block;
      ++v;
    }
    comb.push_back(v++);
  }
  return comb;
}

DesignSpace::DesignSpace(PowertrainConfiguration base) : base_(std::move(base)) {
  base_.validate();
  if (base_.gears.size() != 3) throw ConfigError("the restricted design space needs exactly three gear sets");
  catalog_ = build_clutch_catalog(3, base_.node_of(Device::output));
  const std::uint64_t n = catalog_.locations.size();
  skeletons_ = 81 * (n - 2);
  triples_ = binomial(n - 3, 3);
}

namespace {

struct Skeleton {
  Connection link12, link23;
  int third_choice = 0;
};

Skeleton split_skeleton(std::uint64_t s, std::uint64_t third_pool) {
  Skeleton k;
  k.third_choice = static_cast<int>(s % third_pool);
  s /= third_pool;
  const int b2 = static_cast<int>(s % 3);
  s /= 3;
  const int a2 = static_cast<int>(s % 3);
  s /= 3;
  const int b1 = static_cast<int>(s % 3);
  const int a1 = static_cast<int>(s / 3);
  k.link12 = Connection::link(NodeId{a1}, NodeId{3 + b1});
  k.link23 = Connection::link(NodeId{3 + a2}, NodeId{6 + b2});
  return k;
}

}  // namespace

std::vector<Connection> DesignSpace::skeleton_permanent(std::uint64_t skeleton) const {
  if (skeleton >= skeletons_) throw std::out_of_range("skeleton index out of range");
  const auto k = split_skeleton(skeleton, catalog_.locations.size() - 2);
  int seen = 0;
  Connection third;
  for (const auto& c : catalog_.locations) {
    if (c == k.link12 || c == k.link23) continue;
    if (seen++ == k.third_choice) {
      third = c;
      break;
    }
  }
  std::vector<Connection> p{k.link12, k.link23, third};
  std::sort(p.begin(), p.end());
  return p;
}

std::vector<int> DesignSpace::skeleton_free_locations(std::uint64_t skeleton) const {
  const auto perm = skeleton_permanent(skeleton);
  std::vector<int> free;
  for (int i = 0; i < static_cast<int>(catalog_.locations.size()); ++i)
    if (std::find(perm.begin(), perm.end(), catalog_.locations[i]) == perm.end()) free.push_back(i);
  return free;
}

DesignSpec DesignSpace::decode(std::uint64_t index) const {
  if (index >= size()) throw std::out_of_range("design index out of range");
  DesignSpec d;
  d.index = index;
  const std::uint64_t skeleton = index / triples_;
  d.permanent = skeleton_permanent(skeleton);
  const auto free = skeleton_free_locations(skeleton);
  for (int j : combination_unrank(index % triples_, static_cast<int>(free.size()), 3))
    d.clutches.push_back(catalog_.locations[free[j]]);
  d.name = "design-" + std::to_string(index);
  return d;
}

std::optional<std::uint64_t> DesignSpace::encode(std::span<const Connection> permanent,
                                                 std::span<const Connection> clutches) const {
  if (permanent.size() != 3 || clutches.size() != 3) return std::nullopt;
  std::vector<Connection> perm(permanent.begin(), permanent.end());
  std::sort(perm.begin(), perm.end());
  std::vector<Connection> cl(clutches.begin(), clutches.end());
  std::sort(cl.begin(), cl.end());
  // A skeleton may be reachable two ways when the third connection is itself an inter-PG link;
  // the smallest skeleton index is canonical.
  for (std::uint64_t s = 0; s < skeletons_; ++s) {
    if (skeleton_permanent(s) != perm) continue;
    const auto free = skeleton_free_locations(s);
    std::vector<int> comb;
    for (const auto& c : cl) {
      const int at = catalog_.index_of(c);
      auto it = std::find(free.begin(), free.end(), at);
      if (it == free.end()) return std::nullopt;
      comb.push_back(static_cast<int>(it - free.begin()));
    }
    std::sort(comb.begin(), comb.end());
    return s * triples_ + combination_rank(comb, static_cast<int>(free.size()));
  }
  return std::nullopt;
}

void DesignSpace::for_each(std::uint64_t begin, std::uint64_t end,
                           const std::function<void(const DesignSpec&)>& fn) const {
  end = std::min(end, size());
  for (std::uint64_t i = begin; i < end; ++i) fn(decode(i));
}

bool DesignEvaluation::has_power_split() const {
  return std::any_of(modes.begin(), modes.end(), [](const DesignMode& m) { return m.record->ecvt; });
}

bool DesignEvaluation::has_backward() const {
  return std::any_of(modes.begin(), modes.end(), [](const DesignMode& m) { return m.record->backward; });
}

namespace {

// One- and two-clutch states of {0..n-1}, in lexicographic order of their index lists.
std::vector<std::vector<int>> default_states(int n) {
  std::vector<std::vector<int>> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({i});
    for (int j = i + 1; j < n; ++j) out.push_back({i, j});
  }
  return out;
}

const std::vector<std::vector<int>>& triple_states() {
  static const auto s = default_states(3);
  return s;
}

// Shared by both kernels: filter, dedupe by A*, sign the design.
DesignEvaluation assemble(std::uint64_t index, const std::vector<std::vector<int>>& states,
                          std::span<const ModeRecord* const> records) {
  DesignEvaluation ev;
  ev.index = index;
  std::vector<std::uint64_t> seen;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const ModeRecord* r = records[i];
    if (!r->feasible() || r->dof < 1 || r->dof > 2) continue;
    if (std::find(seen.begin(), seen.end(), r->digest) != seen.end()) continue;
    seen.push_back(r->digest);
    ev.modes.push_back({states[i], r});
  }
  std::sort(seen.begin(), seen.end());
  ev.signature = std::move(seen);
  return ev;
}

}  // namespace

DesignEvaluation evaluate_design(ModeLibrary& library, const DesignSpec& spec) {
  const auto states = spec.states.empty() ? default_states(static_cast<int>(spec.clutches.size())) : spec.states;
  std::vector<const ModeRecord*> records;
  for (const auto& st : states) {
    std::vector<Connection> conns = spec.permanent;
    for (int c : st) {
      if (c < 0 || c >= static_cast<int>(spec.clutches.size()))
        throw ConfigError("clutch state refers to clutch " + std::to_string(c + 1) + " which does not exist");
      conns.push_back(spec.clutches[static_cast<std::size_t>(c)]);
    }
    records.push_back(&library.resolve(conns));
  }
  return assemble(spec.index, states, records);
}

bool screen_inferior(const DesignEvaluation& design) { return design.has_power_split() && design.has_backward(); }

std::vector<DesignGroup> dedupe_designs(std::span<const DesignEvaluation> designs) {
  struct SigHash {
    std::size_t operator()(const std::vector<std::uint64_t>& v) const {
      std::uint64_t h = 1469598103934665603ull ^ v.size();
      for (auto x : v) h = (h ^ x) * 1099511628211ull;
      return static_cast<std::size_t>(h);
    }
  };
  std::unordered_map<std::vector<std::uint64_t>, std::size_t, SigHash> where;
  std::vector<DesignGroup> groups;
  for (const auto& d : designs) {
    auto [it, fresh] = where.emplace(d.signature, groups.size());
    if (fresh) {
      groups.push_back({d.index, 1, d.signature});
    } else {
      auto& g = groups[it->second];
      g.representative = std::min(g.representative, d.index);
      ++g.members;
    }
  }
  std::sort(groups.begin(), groups.end(),
            [](const DesignGroup& a, const DesignGroup& b) { return a.representative < b.representative; });
  return groups;
}

namespace {

void tally(ScanResult& out, DesignEvaluation&& ev) {
  ++out.stats.enumerated;
  ++out.stats.mode_count_histogram[std::min<std::size_t>(ev.modes.size(), 7)];
  if (screen_inferior(ev)) {
    ++out.stats.kept;
    out.kept.push_back(std::move(ev));
  }
}

}  // namespace

ScanResult scan_designs_serial(const DesignSpace& space, ModeLibrary& library, std::uint64_t begin,
                               std::uint64_t end) {
  ScanResult out;
  end = std::min(end, space.size());
  begin = std::min(begin, end);
  out.begin = begin;
  out.end = end;
  for (std::uint64_t i = begin; i < end; ++i) tally(out, evaluate_design(library, space.decode(i)));
  return out;
}

namespace {

struct SkeletonTables {
  std::uint64_t skeleton = 0;
  std::vector<Connection> free;              // clutch candidates (35)
  PartitionBuilder base{0};                  // permanent connections applied
  std::vector<std::uint64_t> single_key;     // [i]
  std::vector<std::uint64_t> pair_key;       // [i * n + j], i < j
};

SkeletonTables build_tables(const DesignSpace& space, std::uint64_t skeleton, int n_nodes) {
  SkeletonTables t;
  t.skeleton = skeleton;
  for (int i : space.skeleton_free_locations(skeleton)) t.free.push_back(space.catalog().locations[i]);
  t.base = PartitionBuilder(n_nodes);
  for (const auto& c : space.skeleton_permanent(skeleton)) t.base.add(c);
  const std::size_t n = t.free.size();
  t.single_key.resize(n);
  t.pair_key.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    PartitionBuilder b = t.base;
    b.add(t.free[i]);
    t.single_key[i] = b.key();
    for (std::size_t j = i + 1; j < n; ++j) {
      PartitionBuilder bb = b;
      bb.add(t.free[j]);
      t.pair_key[i * n + j] = bb.key();
    }
  }
  return t;
}

constexpr std::size_t kStates = 6;

// Partition keys of the six states of one design, in triple_states() order.
std::array<std::uint64_t, kStates> state_keys(const SkeletonTables& t, const std::vector<int>& c) {
  const std::size_t n = t.free.size();
  auto pk = [&](int a, int b) { return t.pair_key[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)]; };
  // {0} {0,1} {0,2} {1} {1,2} {2}
  return {t.single_key[c[0]], pk(c[0], c[1]), pk(c[0], c[2]), t.single_key[c[1]], pk(c[1], c[2]), t.single_key[c[2]]};
}

std::vector<Connection> state_connections(const DesignSpace& space, const SkeletonTables& t,
                                          const std::vector<int>& c, const std::vector<int>& state) {
  auto conns = space.skeleton_permanent(t.skeleton);
  for (int s : state) conns.push_back(t.free[static_cast<std::size_t>(c[static_cast<std::size_t>(s)])]);
  return conns;
}

}  // namespace

ScanResult scan_designs_parallel(const DesignSpace& space, ModeLibrary& library, std::uint64_t begin,
                                 std::uint64_t end, int threads) {
  ScanResult out;
  end = std::min(end, space.size());
  begin = std::min(begin, end);
  out.begin = begin;
  out.end = end;
  if (begin == end) return out;
  if (threads < 1) threads = 1;

  const std::uint64_t per = space.triples_per_skeleton();
  const int n_free = static_cast<int>(space.catalog().locations.size()) - 3;
  const int n_nodes = library.model().n_nodes;
  const auto& states = triple_states();
  constexpr std::uint64_t kBlock = 4;  // skeletons per populate/evaluate round

  const std::uint64_t first_skel = begin / per;
  const std::uint64_t last_skel = (end - 1) / per;
  for (std::uint64_t s0 = first_skel; s0 <= last_skel; s0 += kBlock) {
    const std::uint64_t s1 = std::min(last_skel + 1, s0 + kBlock);
    const auto n_skel = static_cast<long>(s1 - s0);
    std::vector<SkeletonTables> tables(static_cast<std::size_t>(n_skel));
#pragma omp parallel for num_threads(threads) schedule(static)
    for (long k = 0; k < n_skel; ++k)
      tables[static_cast<std::size_t>(k)] = build_tables(space, s0 + static_cast<std::uint64_t>(k), n_nodes);

    const std::uint64_t lo = std::max(begin, s0 * per);
    const std::uint64_t hi = std::min(end, s1 * per);
    const auto count = static_cast<long>(hi - lo);
    std::vector<std::array<std::uint64_t, kStates>> keys(static_cast<std::size_t>(count));
#pragma omp parallel for num_threads(threads) schedule(static)
    for (long i = 0; i < count; ++i) {
      const std::uint64_t idx = lo + static_cast<std::uint64_t>(i);
      const auto& t = tables[static_cast<std::size_t>(idx / per - s0)];
      keys[static_cast<std::size_t>(i)] = state_keys(t, combination_unrank(idx % per, n_free, 3));
    }

    // Missing partitions, each with one representative connection set.
    std::vector<std::pair<std::uint64_t, std::vector<Connection>>> missing;
    std::unordered_set<std::uint64_t> queued;
    for (long i = 0; i < count; ++i) {
      const auto& ks = keys[static_cast<std::size_t>(i)];
      for (std::size_t s = 0; s < ks.size(); ++s) {
        if (library.find(ks[s]) || !queued.insert(ks[s]).second) continue;
        const std::uint64_t idx = lo + static_cast<std::uint64_t>(i);
        const auto& t = tables[static_cast<std::size_t>(idx / per - s0)];
        missing.emplace_back(ks[s], state_connections(space, t, combination_unrank(idx % per, n_free, 3), states[s]));
      }
    }
    library.populate(missing, threads > 1);

    std::vector<DesignEvaluation> evals(static_cast<std::size_t>(count));
#pragma omp parallel for num_threads(threads) schedule(static)
    for (long i = 0; i < count; ++i) {
      const auto& ks = keys[static_cast<std::size_t>(i)];
      std::array<const ModeRecord*, kStates> recs{};
      for (std::size_t s = 0; s < kStates; ++s) recs[s] = library.find(ks[s]);
      evals[static_cast<std::size_t>(i)] = assemble(lo + static_cast<std::uint64_t>(i), states, recs);
    }
    for (auto& ev : evals) tally(out, std::move(ev));
  }
  return out;
}

std::string survivor_header() { return "# index\tpermanent\tclutches\tmodes(state:type:digest)"; }

std::string survivor_record(const DesignSpace& space, const DesignEvaluation& design) {
  const auto spec = space.decode(design.index);
  std::ostringstream os;
  os << design.index << '\t';
  for (std::size_t i = 0; i < spec.permanent.size(); ++i) os << (i ? ";" : "") << spec.permanent[i].name();
  os << '\t';
  for (std::size_t i = 0; i < spec.clutches.size(); ++i) os << (i ? ";" : "") << spec.clutches[i].name();
  os << '\t';
  for (std::size_t i = 0; i < design.modes.size(); ++i) {
    const auto& m = design.modes[i];
    if (i) os << ';';
    for (int c : m.engaged) os << 'C' << (c + 1);
    char hex[17];
    auto [p, ec] = std::to_chars(hex, hex + 16, m.record->digest, 16);
    (void)ec;
    os << ':' << type_number(m.record->type) << ':' << std::string(hex, p);
  }
  return os.str();
}

DesignEvaluation parse_survivor_signature(const std::string& line) {
  DesignEvaluation ev;
  std::istringstream is(line);
  std::string index, perm, cl, modes;
  if (!std::getline(is, index, '\t') || !std::getline(is, perm, '\t') || !std::getline(is, cl, '\t'))
    throw std::invalid_argument("malformed survivor record: " + line);
  std::getline(is, modes);
  ev.index = std::stoull(index);
  std::istringstream ms(modes);
  std::string item;
  while (std::getline(ms, item, ';')) {
    const auto colon = item.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("malformed mode entry: " + item);
    ev.signature.push_back(std::stoull(item.substr(colon + 1), nullptr, 16));
  }
  std::sort(ev.signature.begin(), ev.signature.end());
  return ev;
}

}  // namespace pgs
