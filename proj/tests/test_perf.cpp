#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace pgs;

namespace {

TractiveEnvelope flat_envelope(const LaunchSettings& s, double accel) {
  TractiveEnvelope e;
  for (std::size_t i = 0; i < s.grid_size(); ++i) {
    e.speed.push_back(s.grid_speed(i));
    e.accel.push_back(accel);
    e.torque.push_back(0);
    e.mode.push_back(0);
  }
  return e;
}

struct GmLaunch {
  Evaluator ev{base_study()};
  DesignEvaluation design = ev.evaluate(load_design(data_path("designs/gm_2mode.json")));
};

GmLaunch& gm() {
  static GmLaunch g;
  return g;
}

}  // namespace

TEST_CASE("launch classes around the benchmark and the cutoff") {
  CHECK(classify_launch(6.5, 6.69, 7.0) == LaunchClass::better);
  CHECK(classify_launch(6.9, 6.69, 7.0) == LaunchClass::worse);
  CHECK(classify_launch(7.0, 6.69, 7.0) == LaunchClass::worse);
  CHECK(classify_launch(7.5, 6.69, 7.0) == LaunchClass::rejected);
  CHECK(classify_launch(INFINITY, 6.69, 7.0) == LaunchClass::rejected);
  const auto screen = screen_launch({6.5, 7.5, 6.9, 6.0}, 6.69, 7.0);
  CHECK(screen.better == std::vector<std::size_t>{0, 3});
  CHECK(screen.worse == std::vector<std::size_t>{2});
  CHECK(screen.rejected == std::vector<std::size_t>{1});
}

TEST_CASE("constant acceleration integrates exactly; zero acceleration never arrives") {
  LaunchSettings s;
  CHECK(accel_time(flat_envelope(s, 4.0), s) == doctest::Approx(100 / 3.6 / 4.0).epsilon(1e-12));
  auto e = flat_envelope(s, 4.0);
  e.accel[37] = 0;
  CHECK(std::isinf(accel_time(e, s)));
  CHECK(std::isinf(accel_time(flat_envelope(s, 0.0), s)));
}

TEST_CASE("engine-only fixed gear delivers wide-open torque times the ratio") {
  const auto a = locked_pair_mode(NodeId::of(1, GearNode::ring), NodeId::of(1, GearNode::sun),
                                  {Connection::ground(NodeId::of(1, GearNode::sun))});
  const Plant& plant = base_study().plant;
  LaunchSettings s;
  s.rotating_inertia = false;
  const double ratio = speed_map(a).out_coeff[idx(Device::engine)].get_d();
  for (double kmh : {30.0, 60.0, 90.0}) {
    const double v = kmh / 3.6;
    const double we = ratio * plant.vehicle.output_speed(v);
    const auto p = max_mode_torque(a, v, plant, s);
    REQUIRE(p.feasible);
    CHECK(p.torque == doctest::Approx(plant.engine.max_torque(we) * ratio).epsilon(1e-9));
    CHECK(p.t_mg1 == 0);
  }
  // Below idle speed the engine gives nothing.
  const auto slow = max_mode_torque(a, 0.5, plant, s);
  CHECK(slow.t_eng == 0);
}

TEST_CASE("machine torque signs follow the output row on one-DoF modes") {
  auto& g = gm();
  const Plant& plant = base_study().plant;
  LaunchSettings s;
  s.battery_cap = false;
  int checked = 0;
  for (const auto& dm : g.design.modes) {
    const auto& a = dm.record->a_star;
    if (a.dof != 1) continue;
    const double a00 = a.at(Device::output, Device::output).get_d();
    const double a0e = a.at(Device::output, Device::engine).get_d();
    const double a01 = a.at(Device::output, Device::mg1).get_d();
    const double a02 = a.at(Device::output, Device::mg2).get_d();
    const auto rel = speed_map(a);
    for (double kmh : {10.0, 40.0, 80.0}) {
      const double v = kmh / 3.6, wo = plant.vehicle.output_speed(v);
      const double we = rel.out_coeff[1].get_d() * wo, w1 = rel.out_coeff[2].get_d() * wo, w2 = rel.out_coeff[3].get_d() * wo;
      if (we > plant.engine.max_speed() || std::abs(w1) > plant.mg1.max_speed() || std::abs(w2) > plant.mg2.max_speed())
        continue;
      double best = -INFINITY;
      for (double te : {0.0, we >= plant.engine.idle_speed() && a0e > 0 ? plant.engine.max_torque(we) : 0.0})
        for (double s1 : {-1.0, 1.0})
          for (double s2 : {-1.0, 1.0}) {
            const double drive = a0e * te + a01 * s1 * plant.mg1.max_torque(w1) + a02 * s2 * plant.mg2.max_torque(w2);
            best = std::max(best, (drive - a00 * plant.vehicle.road_load(v)) * plant.vehicle.tire_radius /
                                      plant.vehicle.final_drive);
          }
      const auto p = max_mode_torque(a, v, plant, s);
      REQUIRE(p.feasible);
      CHECK(p.accel == doctest::Approx(best).epsilon(1e-12));
      ++checked;
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("battery cap limits electrical draw") {
  auto& g = gm();
  const Plant& plant = base_study().plant;
  LaunchSettings capped, free;
  free.battery_cap = false;
  for (const auto& dm : g.design.modes)
    for (double kmh : {20.0, 60.0, 100.0}) {
      const auto a = max_mode_torque(dm.record->a_star, kmh / 3.6, plant, capped);
      const auto b = max_mode_torque(dm.record->a_star, kmh / 3.6, plant, free);
      CHECK(a.feasible == b.feasible);
      if (!a.feasible) continue;
      CHECK(a.accel <= b.accel + 1e-12);
      CHECK(a.scale <= 1.0);
    }
}

TEST_CASE("design envelope dominates each mode and losing a mode never speeds up the launch") {
  auto& g = gm();
  const auto& s = g.ev.envelopes().settings();
  std::vector<std::shared_ptr<const ModeEnvelope>> envs;
  for (const auto& dm : g.design.modes) envs.push_back(g.ev.envelopes().get(dm.record->a_star));
  const auto all = combine_envelopes(envs, s);
  for (std::size_t i = 0; i < all.speed.size(); ++i)
    for (const auto& e : envs)
      if (e->points[i].feasible) CHECK(all.accel[i] >= e->points[i].accel);
  const double t_all = accel_time(all, s);
  CHECK(t_all == doctest::Approx(g.ev.accel_time(g.design)).epsilon(1e-12));
  for (std::size_t drop = 0; drop < envs.size(); ++drop) {
    auto fewer = envs;
    fewer.erase(fewer.begin() + static_cast<long>(drop));
    CHECK(accel_time(combine_envelopes(fewer, s), s) >= t_all);
  }
}

TEST_CASE("launch time is stable under a finer speed grid") {
  auto& g = gm();
  const Plant& plant = base_study().plant;
  LaunchSettings coarse = base_study().launch, fine = coarse;
  fine.dv_kmh = coarse.dv_kmh / 2;
  const auto time_with = [&](const LaunchSettings& s) {
    std::vector<std::shared_ptr<const ModeEnvelope>> envs;
    for (const auto& dm : g.design.modes)
      envs.push_back(std::make_shared<const ModeEnvelope>(compute_mode_envelope(dm.record->a_star, plant, s)));
    return accel_time(combine_envelopes(envs, s), s);
  };
  const double t1 = time_with(coarse), t2 = time_with(fine);
  CHECK(std::isfinite(t1));
  CHECK(std::abs(t1 - t2) / t1 < 0.005);
}

TEST_CASE("histogram bins and overflow") {
  const auto h = accel_histogram({5.0, 5.4, 6.1, 6.99, 7.0, 9.5, INFINITY, 4.0}, 5.0, 7.0, 0.5);
  REQUIRE(h.counts.size() == 4);
  CHECK(h.counts == std::vector<std::uint64_t>{2, 0, 1, 1});
  CHECK(h.below == 1);
  CHECK(h.above == 3);
  CHECK(histogram_text(h).find("bin_lo") == 0);
  CHECK_THROWS(accel_histogram({}, 1, 1, 0.5));
}
