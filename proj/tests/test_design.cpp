#include "test_util.hpp"

#include <doctest.h>

#include <set>

using namespace pgs;

namespace {

ModeRecord record(ModeType type, bool ecvt, bool backward, std::uint64_t digest) {
  ModeRecord r;
  r.status = ModeRecord::Status::feasible;
  r.type = type;
  r.dof = type_dof(type);
  r.ecvt = ecvt;
  r.backward = backward;
  r.forward = true;
  r.digest = digest;
  return r;
}

DesignEvaluation design_of(std::initializer_list<const ModeRecord*> recs) {
  DesignEvaluation d;
  for (const ModeRecord* r : recs) {
    d.modes.push_back({{}, r});
    d.signature.push_back(r->digest);
  }
  std::sort(d.signature.begin(), d.signature.end());
  return d;
}

}  // namespace

TEST_CASE("design space products") {
  CHECK(count_configurations(3) == 3024);
  CHECK(count_configurations(1) == 0);
  CHECK(count_design_space(3024, 38) == 3024ull * 8436ull * 6545ull);
  CHECK(count_design_space(3024, 38) == 166965986880ull);
  CHECK(count_design_space(1, 6) == 20);

  const auto& s = base_study();
  const DesignSpace space(s.base);
  CHECK(space.skeleton_count() == 2916);
  CHECK(space.triples_per_skeleton() == 6545);
  CHECK(space.size() == 19085220);
}

TEST_CASE("combination ranking round-trips") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const std::uint64_t r = rng() % binomial(35, 3);
    const auto comb = combination_unrank(r, 35, 3);
    CHECK(std::is_sorted(comb.begin(), comb.end()));
    CHECK(combination_rank(comb, 35) == r);
  }
  CHECK(combination_unrank(0, 35, 3) == std::vector<int>{0, 1, 2});
  CHECK(combination_unrank(binomial(35, 3) - 1, 35, 3) == std::vector<int>{32, 33, 34});
}

TEST_CASE("decode and encode are inverse and enumeration order is stable") {
  const auto& s = base_study();
  const DesignSpace space(s.base);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 300; ++t) {
    const std::uint64_t i = rng() % space.size();
    const DesignSpec d = space.decode(i);
    CHECK(d.index == i);
    CHECK(d.permanent.size() == 3);
    CHECK(d.clutches.size() == 3);
    std::set<Connection> all(d.permanent.begin(), d.permanent.end());
    all.insert(d.clutches.begin(), d.clutches.end());
    CHECK(all.size() == 6);
    const auto back = space.encode(d.permanent, d.clutches);
    REQUIRE(back.has_value());
    // Skeletons whose third connection is another inter-gear link are listed twice; encode
    // returns the first listing.
    CHECK(*back <= i);
    const DesignSpec again = space.decode(*back);
    CHECK(again.permanent == d.permanent);
    std::vector<Connection> c1 = d.clutches, c2 = again.clutches;
    std::sort(c1.begin(), c1.end());
    std::sort(c2.begin(), c2.end());
    CHECK(c1 == c2);
    CHECK(space.encode(again.permanent, again.clutches) == back);
  }
  std::vector<std::uint64_t> seen;
  space.for_each(1000, 1010, [&](const DesignSpec& d) { seen.push_back(d.index); });
  REQUIRE(seen.size() == 10);
  for (std::size_t k = 0; k < seen.size(); ++k) CHECK(seen[k] == 1000 + k);
  CHECK(space.decode(0).permanent == space.decode(0).permanent);
}

TEST_CASE("inferior screening") {
  const auto fixed = record(ModeType::fixed_gear_2mg_1dof, false, false, 1);
  const auto ev = record(ModeType::ev_1mg_1dof, false, false, 2);
  const auto split = record(ModeType::input_split, true, false, 3);
  const auto series = record(ModeType::series, false, true, 4);
  const auto reverse_split = record(ModeType::output_split, false, true, 5);

  CHECK_FALSE(screen_inferior(design_of({&fixed, &ev})));
  CHECK(screen_inferior(design_of({&split, &series})));
  CHECK_FALSE(screen_inferior(design_of({&split, &fixed})));
  CHECK(screen_inferior(design_of({&split, &reverse_split, &ev})));

  // Adding modes never turns a kept design into a rejected one.
  const std::vector<const ModeRecord*> pool{&fixed, &ev, &split, &series, &reverse_split};
  for (unsigned mask = 0; mask < 32; ++mask)
    for (unsigned extra = 0; extra < 5; ++extra) {
      DesignEvaluation d, e;
      for (unsigned i = 0; i < 5; ++i)
        if (mask & (1u << i)) d.modes.push_back({{}, pool[i]});
      e = d;
      e.modes.push_back({{}, pool[extra]});
      if (screen_inferior(d)) CHECK(screen_inferior(e));
    }
}

TEST_CASE("the benchmark two-mode design cannot reverse on the engine and is screened out") {
  const auto& s = base_study();
  ModeLibrary lib(assemble_full_dynamics(s.base, s.inertias));
  const DesignSpec gm = load_design(data_path("designs/gm_2mode.json"));
  const DesignEvaluation e = evaluate_design(lib, gm);
  CHECK(e.modes.size() == 6);
  CHECK(e.has_power_split());
  CHECK_FALSE(e.has_backward());
  CHECK_FALSE(screen_inferior(e));
}

TEST_CASE("design dedupe groups equal signatures only") {
  const auto a = record(ModeType::input_split, true, false, 10);
  const auto b = record(ModeType::series, false, true, 20);
  const auto c = record(ModeType::ev_1mg_1dof, false, false, 30);
  std::vector<DesignEvaluation> ds{design_of({&a, &b}), design_of({&b, &a}), design_of({&a, &c}), design_of({&a, &b, &c})};
  for (std::size_t i = 0; i < ds.size(); ++i) ds[i].index = 100 - i;
  const auto groups = dedupe_designs(ds);
  REQUIRE(groups.size() == 3);
  std::uint64_t members = 0;
  for (const auto& g : groups) members += g.members;
  CHECK(members == 4);
  CHECK(std::is_sorted(groups.begin(), groups.end(),
                       [](const DesignGroup& x, const DesignGroup& y) { return x.representative < y.representative; }));
  const auto it = std::find_if(groups.begin(), groups.end(), [](const DesignGroup& g) { return g.members == 2; });
  REQUIRE(it != groups.end());
  CHECK(it->representative == 99);
}

TEST_CASE("serial and parallel scan kernels agree; groups are sound") {
  const auto& s = base_study();
  const DesignSpace space(s.base);
  const std::uint64_t begin = 329 * space.triples_per_skeleton() + 100, end = begin + 3000;
  ModeLibrary lib1(assemble_full_dynamics(s.base, s.inertias));
  ModeLibrary lib2(assemble_full_dynamics(s.base, s.inertias));
  const auto serial = scan_designs_serial(space, lib1, begin, end);
  const auto parallel = scan_designs_parallel(space, lib2, begin, end, 4);
  CHECK(serial.stats.enumerated == 3000);
  CHECK(serial.stats.kept == parallel.stats.kept);
  CHECK(serial.stats.mode_count_histogram == parallel.stats.mode_count_histogram);
  REQUIRE(serial.kept.size() == parallel.kept.size());
  REQUIRE(!serial.kept.empty());
  for (std::size_t i = 0; i < serial.kept.size(); ++i) {
    CHECK(serial.kept[i].index == parallel.kept[i].index);
    CHECK(serial.kept[i].signature == parallel.kept[i].signature);
    CHECK(survivor_record(space, serial.kept[i]) == survivor_record(space, parallel.kept[i]));
  }

  // Re-derive the modes of every member and compare exact matrices, not only digests.
  const auto groups = dedupe_designs(serial.kept);
  CHECK(groups.size() < serial.kept.size());
  std::map<std::vector<std::uint64_t>, std::vector<std::string>> exact;
  for (const auto& d : serial.kept) {
    ModeLibrary fresh(assemble_full_dynamics(s.base, s.inertias));
    const auto e = evaluate_design(fresh, space.decode(d.index));
    std::vector<std::string> mats;
    for (const auto& m : e.modes) mats.push_back(m.record->a_star.entries.to_string());
    std::sort(mats.begin(), mats.end());
    auto [it, fresh_sig] = exact.emplace(d.signature, mats);
    if (!fresh_sig) CHECK(it->second == mats);
  }

  // Survivor records parse back to the same signature.
  for (const auto& d : serial.kept) {
    const auto back = parse_survivor_signature(survivor_record(space, d));
    CHECK(back.index == d.index);
    CHECK(back.signature == d.signature);
  }
}
