#pragma once

#include "pgsearch/pipeline.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

inline std::string data_path(const std::string& rel) { return std::string(PGSEARCH_DATA_DIR) + "/" + rel; }

inline const pgs::Study& base_study() {
  static const pgs::Study s = pgs::load_study(data_path("base_config.json"));
  return s;
}

/// One PG with S=1, R=2 and devices placed in (output, engine, mg1, mg2) order.
inline pgs::PowertrainConfiguration single_pg(std::array<pgs::NodeId, 4> placement) {
  pgs::PowertrainConfiguration c;
  c.gears.push_back({1, 1, 2});
  c.placement = placement;
  return c;
}

template <class T>
std::vector<T> random_subset(std::mt19937_64& rng, const std::vector<T>& pool, std::size_t k) {
  std::vector<T> v = pool;
  std::shuffle(v.begin(), v.end(), rng);
  v.resize(std::min(k, v.size()));
  std::sort(v.begin(), v.end());
  return v;
}

struct SmallSystem {
  pgs::PowertrainConfiguration config;
  pgs::InertiaSet inertias;
  std::vector<pgs::Connection> connections;
};

/// Random one- or two-gear system: tooth counts, inertias, placement and up to three connections.
inline SmallSystem random_small_system(std::mt19937_64& rng) {
  using namespace pgs;
  SmallSystem s;
  const int n_pg = 1 + static_cast<int>(rng() % 2);
  for (int k = 1; k <= n_pg; ++k) {
    const long sun = 1 + static_cast<long>(rng() % 5);
    const long ring = sun + 1 + static_cast<long>(rng() % 6);
    s.config.gears.push_back({k, Rational(sun), Rational(ring)});
  }
  const int n = 3 * n_pg;
  // Engine and the two machines on distinct nodes; the output on any node but the engine's.
  std::vector<int> nodes(n);
  for (int i = 0; i < n; ++i) nodes[i] = i;
  std::shuffle(nodes.begin(), nodes.end(), rng);
  s.config.placement[idx(Device::engine)] = {nodes[0]};
  s.config.placement[idx(Device::mg1)] = {nodes[1]};
  s.config.placement[idx(Device::mg2)] = {nodes[2]};
  s.config.placement[idx(Device::output)] = {nodes[1 + static_cast<int>(rng() % (n - 1))]};
  const auto frac = [&] {
    Rational q(1 + static_cast<long>(rng() % 97), 100 + static_cast<long>(rng() % 900));
    q.canonicalize();
    return q;
  };
  s.inertias.engine = frac();
  s.inertias.mg1 = frac();
  s.inertias.mg2 = frac();
  s.inertias.vehicle_reflected = Rational(1 + static_cast<long>(rng() % 50), 1 + static_cast<long>(rng() % 3));
  s.inertias.vehicle_reflected.canonicalize();
  for (int i = 0; i < n; ++i) s.inertias.node_parasitic.push_back(frac());
  const auto cat = build_clutch_catalog(n_pg, s.config.node_of(Device::output));
  s.connections = random_subset(rng, cat.locations, rng() % 4);
  return s;
}

// Two gear sets; the second is locked to ground and carries MG2.
inline pgs::CharacteristicMatrix locked_pair_mode(pgs::NodeId engine, pgs::NodeId mg1, const std::vector<pgs::Connection>& extra) {
  using namespace pgs;
  PowertrainConfiguration cfg;
  cfg.gears = {{1, 1, 2}, {2, 1, 2}};
  cfg.placement = {NodeId::of(1, GearNode::carrier), engine, mg1, NodeId::of(2, GearNode::sun)};
  const auto model = assemble_full_dynamics(cfg, default_inertias(6, 100));
  std::vector<Connection> conns{Connection::ground(NodeId::of(2, GearNode::sun)),
                                Connection::ground(NodeId::of(2, GearNode::ring))};
  conns.insert(conns.end(), extra.begin(), extra.end());
  return reduce_with_connections(model, conns);
}
