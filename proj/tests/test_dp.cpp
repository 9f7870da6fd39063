#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace pgs;

namespace {

double total_shift_penalty(const DpProblem& p, const DpSolution& s, const DpConfig& cfg) {
  double sum = 0;
  for (std::size_t k = 1; k < s.op.size(); ++k)
    if (s.op[k] != s.op[k - 1])
      sum += mode_shift_penalty(p.at(k - 1, s.op[k - 1]).speeds, p.at(k, s.op[k]).speeds, cfg.shift_weights);
  return sum;
}

// Keeps only the operations of the listed modes.
DpProblem restrict_modes(const DpProblem& p, const std::vector<int>& modes) {
  DpProblem q = p;
  std::vector<std::size_t> keep;
  for (std::size_t o = 0; o < p.ops; ++o)
    if (std::find(modes.begin(), modes.end(), p.op_mode[o]) != modes.end()) keep.push_back(o);
  q.ops = keep.size();
  q.op_mode.clear();
  q.op_engine_on.clear();
  q.points.clear();
  for (std::size_t o : keep) {
    q.op_mode.push_back(p.op_mode[o]);
    q.op_engine_on.push_back(p.op_engine_on[o]);
  }
  for (std::size_t k = 0; k < p.stages; ++k)
    for (std::size_t o : keep) q.points.push_back(p.at(k, o));
  return q;
}

}  // namespace

TEST_CASE("shift penalty examples") {
  const std::array<double, 3> w{1, 1, 1};
  CHECK(mode_shift_penalty({100, 200, -50}, {100, 200, -50}, w) == 0);
  CHECK(mode_shift_penalty({0, 0, 0}, {100, 0, 0}, w) == 10000);
  CHECK(mode_shift_penalty({1, 2, 3}, {4, -5, 6}, w) == mode_shift_penalty({4, -5, 6}, {1, 2, 3}, w));
  CHECK(mode_shift_penalty({0, 0, 0}, {1, 2, 3}, {2, 0, 1}) == 11);
}

TEST_CASE("fuel economy arithmetic") {
  CHECK(weighted_fuel_economy(30, 30) == doctest::Approx(30).epsilon(1e-14));
  CHECK(weighted_fuel_economy(29.96, 27.70) == doctest::Approx(28.90).epsilon(1e-3));
  CHECK(miles_per_gallon(1609.344, 3.785411784) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("backward induction matches exhaustive enumeration on small instances") {
  std::mt19937_64 rng(21);
  int feasible = 0;
  for (int t = 0; t < 12; ++t) {
    const std::size_t modes = 1 + t % 3;
    const std::size_t stages = modes == 1 ? 10 : (modes == 2 ? 8 : 6);
    const auto toy = oracle::make_toy_dp(rng, stages, modes);
    const auto ref = oracle::dp_exhaustive(toy.problem, toy.cfg);
    if (!ref.feasible) {
      CHECK_THROWS_AS(solve_dp_serial(toy.problem, toy.cfg), DpInfeasibleError);
      continue;
    }
    ++feasible;
    const auto s = solve_dp_serial(toy.problem, toy.cfg);
    CHECK(s.cost == ref.cost);
    const auto p = solve_dp_parallel(toy.problem, toy.cfg, 3);
    CHECK(p.op == s.op);
    CHECK(p.cost == s.cost);
    CHECK(s.soc.size() == stages + 1);
  }
  CHECK(feasible > 6);
}

TEST_CASE("more operations never cost more") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto toy = oracle::make_toy_dp(rng, 12, 3);
    const auto sub = restrict_modes(toy.problem, {0, 2});
    std::optional<double> full_cost, sub_cost;
    try {
      full_cost = solve_dp_serial(toy.problem, toy.cfg).cost;
    } catch (const DpInfeasibleError&) {
    }
    try {
      sub_cost = solve_dp_serial(sub, toy.cfg).cost;
    } catch (const DpInfeasibleError&) {
    }
    if (sub_cost) {
      REQUIRE(full_cost.has_value());
      CHECK(*full_cost <= *sub_cost);
    }
  }
}

TEST_CASE("terminal and shift weights trade off monotonically") {
  std::mt19937_64 rng(77);
  int checked = 0;
  for (int t = 0; t < 8; ++t) {
    auto toy = oracle::make_toy_dp(rng, 14, 2);
    for (auto& pt : toy.problem.points) pt.feasible = true;
    double last_dev = 1e300, last_shift = 1e300;
    for (double beta : {0.0, 1.0, 16.0, 256.0, 4096.0}) {
      auto cfg = toy.cfg;
      cfg.beta = beta;
      const auto s = solve_dp_serial(toy.problem, cfg);
      const double dev = std::abs(s.soc_final() - cfg.soc_desired);
      CHECK(dev <= last_dev);
      last_dev = dev;
    }
    for (double alpha : {0.0, 0.125, 1.0, 8.0, 64.0}) {
      auto cfg = toy.cfg;
      cfg.alpha = alpha;
      const auto s = solve_dp_serial(toy.problem, cfg);
      const double shift = total_shift_penalty(toy.problem, s, cfg);
      CHECK(shift <= last_shift);
      last_shift = shift;
    }
    ++checked;
  }
  CHECK(checked == 8);
}

TEST_CASE("a prohibitive shift weight holds one operation") {
  std::mt19937_64 rng(31);
  auto toy = oracle::make_toy_dp(rng, 20, 3);
  for (auto& pt : toy.problem.points) {
    pt.feasible = true;
    pt.p_batt = 0;
  }
  auto cfg = toy.cfg;
  cfg.alpha = 1e12;
  const auto s = solve_dp_serial(toy.problem, cfg);
  for (int op : s.op) CHECK(op == s.op.front());
  CHECK(s.shifts == 0);
  CHECK(s.engine_starts == 0);
}

TEST_CASE("a stage with no feasible operation is reported") {
  std::mt19937_64 rng(2);
  auto toy = oracle::make_toy_dp(rng, 10, 2);
  for (std::size_t o = 0; o < toy.problem.ops; ++o) toy.problem.points[6 * toy.problem.ops + o].feasible = false;
  try {
    solve_dp_serial(toy.problem, toy.cfg);
    FAIL("expected an infeasible problem");
  } catch (const DpInfeasibleError& e) {
    CHECK(e.stage() <= 6);
  }
}

TEST_CASE("standing still burns no fuel and holds the charge") {
  const auto& s = base_study();
  Evaluator ev(s);
  const auto design = ev.evaluate(load_design(data_path("designs/gm_2mode.json")));
  DriveCycle idle;
  idle.name = "idle";
  for (int k = 0; k < 60; ++k) {
    idle.time.push_back(k);
    idle.speed.push_back(0);
  }
  const auto stc = build_stc_grid(idle, s.plant.vehicle, s.grid);
  std::vector<std::shared_ptr<const PearsColumn>> cols;
  for (const auto& m : design.modes)
    cols.push_back(std::make_shared<const PearsColumn>(compute_column_serial(m.record->a_star, stc, s.plant, s.grid)));
  const auto problem = build_dp_problem(assemble_table(stc, cols), idle, s.plant);
  const auto sol = solve_dp_serial(problem, s.dp);
  CHECK(sol.fuel_g == 0);
  CHECK(sol.ev_share == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sol.soc_final() == doctest::Approx(s.dp.soc_initial).epsilon(1e-12));
}

TEST_CASE("serial and parallel solvers agree on a real cycle") {
  const auto& s = base_study();
  Evaluator ev(s);
  const auto design = ev.evaluate(load_design(data_path("designs/gm_2ecvt.json")));
  const auto problem = ev.dp_problem(design, "hwfet");
  const auto a = solve_dp_serial(problem, s.dp);
  const auto b = solve_dp_parallel(problem, s.dp, 4);
  CHECK(a.op == b.op);
  CHECK(a.soc == b.soc);
  CHECK(a.cost == b.cost);
  CHECK(std::abs(a.soc_final() - s.dp.soc_desired) < 0.01);
  CHECK(a.mpg > 0);
  double share = 0;
  for (double x : a.mode_share) share += x;
  CHECK(share == doctest::Approx(1.0));
}
