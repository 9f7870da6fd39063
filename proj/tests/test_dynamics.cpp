#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace pgs;

TEST_CASE("lever constraint row and residuals for S=1, R=2") {
  const auto cfg = single_pg({NodeId::of(1, GearNode::ring), NodeId::of(1, GearNode::carrier),
                              NodeId::of(1, GearNode::sun), NodeId::of(1, GearNode::ring)});
  const auto model = assemble_full_dynamics(cfg, default_inertias(3, 1));
  CHECK(model.constraint(0, 0) == 1);
  CHECK(model.constraint(0, 1) == -3);
  CHECK(model.constraint(0, 2) == 2);

  const std::vector<Rational> common{1, 1, 1}, lever{3, 1, 0}, bad{1, 1, 0};
  CHECK(model.residual(common)[0] == 0);
  CHECK(model.residual(lever)[0] == 0);
  CHECK(model.residual(bad)[0] == -2);
}

TEST_CASE("single-gear split arrangement has two DoF and a fully populated matrix") {
  const auto cfg = single_pg({NodeId::of(1, GearNode::ring), NodeId::of(1, GearNode::carrier),
                              NodeId::of(1, GearNode::sun), NodeId::of(1, GearNode::ring)});
  const auto model = assemble_full_dynamics(cfg, default_inertias(3, 1));
  const auto a = reduce_with_connections(model, {});
  CHECK(a.dof == 2);
  for (Device r : kDevices)
    for (Device c : kDevices) CHECK(sgn(a.at(r, c)) != 0);
  CHECK(sgn(a.at(Device::output, Device::engine)) > 0);
  CHECK(a.entries.rank() == 2);
}

TEST_CASE("grounded engine gives a zero engine row and column") {
  const auto cfg = single_pg({NodeId::of(1, GearNode::ring), NodeId::of(1, GearNode::carrier),
                              NodeId::of(1, GearNode::sun), NodeId::of(1, GearNode::ring)});
  const auto model = assemble_full_dynamics(cfg, default_inertias(3, 1));
  const std::vector<Connection> conns{Connection::ground(NodeId::of(1, GearNode::carrier))};
  const auto a = reduce_with_connections(model, conns);
  for (Device d : kDevices) {
    CHECK(a.at(Device::engine, d) == 0);
    CHECK(a.at(d, Device::engine) == 0);
  }
  const auto rel = speed_map(a);
  CHECK(rel.dof == 1);
  CHECK(rel.out_coeff[idx(Device::engine)] == 0);
}

TEST_CASE("one-DoF mode: rank one and every row proportional to the output row") {
  const auto cfg = single_pg({NodeId::of(1, GearNode::carrier), NodeId::of(1, GearNode::ring),
                              NodeId::of(1, GearNode::sun), NodeId::of(1, GearNode::carrier)});
  const auto model = assemble_full_dynamics(cfg, default_inertias(3, 1));
  const std::vector<Connection> conns{Connection::ground(NodeId::of(1, GearNode::sun))};
  const auto a = reduce_with_connections(model, conns);
  CHECK(a.dof == 1);
  CHECK(a.entries.rank() == 1);
  const Rational& pivot = a.at(Device::output, Device::output);
  REQUIRE(sgn(pivot) != 0);
  for (Device r : kDevices) {
    const Rational f = a.at(r, Device::output) / pivot;
    for (Device c : kDevices) CHECK(a.at(r, c) == f * a.at(Device::output, c));
  }
}

TEST_CASE("fixed gear ratio is reported exactly") {
  // Sun grounded, engine on the ring, output on the carrier: w_c = 2/3 w_r.
  const auto cfg = single_pg({NodeId::of(1, GearNode::carrier), NodeId::of(1, GearNode::ring),
                              NodeId::of(1, GearNode::sun), NodeId::of(1, GearNode::carrier)});
  const auto model = assemble_full_dynamics(cfg, default_inertias(3, 1));
  const std::vector<Connection> conns{Connection::ground(NodeId::of(1, GearNode::sun))};
  const auto rel = speed_map(reduce_with_connections(model, conns));
  CHECK(rel.dof == 1);
  CHECK(rel.gear_ratio() == Rational(3, 2));
  CHECK(to_fraction_string(rel.gear_ratio()) == "3/2");
}

TEST_CASE("input split at standstill: machine speeds scale with engine speed") {
  const auto cfg = single_pg({NodeId::of(1, GearNode::ring), NodeId::of(1, GearNode::carrier),
                              NodeId::of(1, GearNode::sun), NodeId::of(1, GearNode::ring)});
  const auto model = assemble_full_dynamics(cfg, default_inertias(3, 1));
  const auto rel = speed_map(reduce_with_connections(model, {}));
  REQUIRE(rel.dof == 2);
  REQUIRE(rel.free_device == Device::engine);
  // Ring held: S w_s = (S + R) w_c, so the sun turns three times the carrier.
  CHECK(rel.free_coeff[idx(Device::mg1)] == 3);
  CHECK(rel.free_coeff[idx(Device::mg2)] == 0);
  const double we = rpm_to_rad(2000);
  const auto w = ModeKinematics(reduce_with_connections(model, {})).speeds(0.0, we);
  CHECK(w[idx(Device::mg1)] == doctest::Approx(3 * we).epsilon(1e-14));
}

TEST_CASE("recomputing the matrix is bit-identical") {
  const auto study = base_study();
  const auto model = assemble_full_dynamics(study.base, study.inertias);
  std::mt19937_64 rng(7);
  const auto cat = build_clutch_catalog(3, study.base.node_of(Device::output));
  for (int t = 0; t < 20; ++t) {
    const auto conns = random_subset(rng, cat.locations, 3);
    try {
      const auto a = reduce_with_connections(model, conns);
      const auto b = reduce_with_connections(model, conns);
      CHECK(a.entries.to_string() == b.entries.to_string());
      CHECK(a_star_digest(a) == a_star_digest(b));
    } catch (const DegenerateModeError&) {
    }
  }
}

TEST_CASE("matrix matches the Lagrange-multiplier oracle on random small systems") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 25; ++t) {
    const auto sys = random_small_system(rng);
    const auto model = assemble_full_dynamics(sys.config, sys.inertias);
    const auto a = reduce_with_connections(model, sys.connections);
    const auto ref = oracle::lagrange_a_star(sys.config, sys.inertias, sys.connections);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(a.entries(i, j) == ref[i][j]);
  }
}

TEST_CASE("engaging one more clutch lowers the DoF by at most one") {
  const auto study = base_study();
  const auto model = assemble_full_dynamics(study.base, study.inertias);
  const auto cat = build_clutch_catalog(3, study.base.node_of(Device::output));
  std::mt19937_64 rng(3);
  int checked = 0;
  for (int t = 0; t < 200; ++t) {
    auto conns = random_subset(rng, cat.locations, 3);
    ReducedSystem before, after;
    try {
      before = reduce_detailed(model, conns);
      conns.push_back(cat.locations[rng() % cat.locations.size()]);
      after = reduce_detailed(model, conns);
    } catch (const DegenerateModeError&) {
      ++checked;
      continue;
    }
    const int d0 = static_cast<int>(before.node_velocity_basis.cols());
    const int d1 = static_cast<int>(after.node_velocity_basis.cols());
    CHECK((d1 == d0 || d1 == d0 - 1));
    CHECK(after.a_star.entries.rank() <= before.a_star.entries.rank());
    ++checked;
  }
  CHECK(checked == 200);
}

TEST_CASE("power balance and reduced inertia symmetry") {
  const auto study = base_study();
  const auto model = assemble_full_dynamics(study.base, study.inertias);
  const auto cat = build_clutch_catalog(3, study.base.node_of(Device::output));
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> small(-5, 5);
  for (int t = 0; t < 40; ++t) {
    const auto conns = random_subset(rng, cat.locations, 3);
    ReducedSystem r;
    try {
      r = reduce_detailed(model, conns);
    } catch (const DegenerateModeError&) {
      continue;
    }
    const auto& k = r.reduced_inertia;
    CHECK(k == k.transposed());
    const std::size_t d = r.node_velocity_basis.cols();
    if (d == 0) continue;
    RationalMatrix z(d, 1), tau(4, 1);
    for (std::size_t i = 0; i < d; ++i) z(i, 0) = small(rng);
    for (std::size_t i = 0; i < 4; ++i) tau(i, 0) = small(rng);
    const RationalMatrix w = r.node_velocity_basis * z;
    const RationalMatrix acc = r.node_accel * tau;
    Rational device_power, kinetic_rate;
    for (std::size_t j = 0; j < 4; ++j) device_power += tau(j, 0) * w(model.device_node[j].index, 0);
    for (int i = 0; i < model.n_nodes; ++i) kinetic_rate += w(i, 0) * model.node_inertia[i] * acc(i, 0);
    CHECK(device_power == kinetic_rate);
    std::vector<Rational> node_speeds;
    for (int i = 0; i < model.n_nodes; ++i) node_speeds.push_back(w(i, 0));
    for (const auto& res : model.residual(node_speeds)) CHECK(res == 0);
  }
}

TEST_CASE("configuration validation names the broken rule") {
  auto cfg = single_pg({NodeId::of(1, GearNode::ring), NodeId::of(1, GearNode::carrier),
                        NodeId::of(1, GearNode::sun), NodeId::of(1, GearNode::ring)});
  cfg.gears[0].ring_teeth = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.gears[0].ring_teeth = 2;
  cfg.placement[idx(Device::mg1)] = cfg.placement[idx(Device::engine)];
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(parse_connection("PG1.sun"), ConfigError);
  CHECK(parse_connection("PG2.ring-GND").is_ground());
  CHECK(parse_connection("PG1.sun-PG2.carrier").name() == "PG1.sun-PG2.carrier");
}

TEST_CASE("exact rationals parse and print canonically") {
  CHECK(parse_rational("0.22") == Rational(11, 50));
  CHECK(parse_rational("-3/6") == Rational(-1, 2));
  CHECK(to_fraction_string(parse_rational("4/2")) == "2");
  CHECK(rational_from_double(0.1) == Rational(1, 10));
}
