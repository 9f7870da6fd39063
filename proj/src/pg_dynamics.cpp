#include "pgsearch/pg_dynamics.hpp"

#include <algorithm>
#include <numeric>

namespace pgs {

namespace {

const char* gear_node_name(GearNode n) {
  switch (n) {
    case GearNode::sun: return "sun";
    case GearNode::carrier: return "carrier";
    case GearNode::ring: return "ring";
  }
  return "?";
}

}  // namespace

std::string node_name(NodeId node) {
  if (node.index < 0) return "GND";
  return "PG" + std::to_string(node.pg_number()) + "." + gear_node_name(node.gear_node());
}

NodeId parse_node_name(const std::string& name) {
  const auto dot = name.find('.');
  if (name.size() < 4 || name.compare(0, 2, "PG") != 0 || dot == std::string::npos)
    throw ConfigError("bad node name '" + name + "' (expected PGk.sun|carrier|ring)");
  int pg = 0;
  try {
    pg = std::stoi(name.substr(2, dot - 2));
  } catch (const std::exception&) {
    throw ConfigError("bad PG number in node name '" + name + "'");
  }
  if (pg < 1) throw ConfigError("bad PG number in node name '" + name + "'");
  const std::string part = name.substr(dot + 1);
  if (part == "sun") return NodeId::of(pg, GearNode::sun);
  if (part == "carrier") return NodeId::of(pg, GearNode::carrier);
  if (part == "ring") return NodeId::of(pg, GearNode::ring);
  throw ConfigError("bad gear node in node name '" + name + "'");
}

const char* device_name(Device d) {
  switch (d) {
    case Device::output: return "output";
    case Device::engine: return "engine";
    case Device::mg1: return "MG1";
    case Device::mg2: return "MG2";
  }
  return "?";
}

Connection Connection::link(NodeId x, NodeId y) {
  if (y < x) std::swap(x, y);
  return {Kind::node_node, x, y};
}

std::string Connection::name() const {
  if (is_ground()) return node_name(a) + "-GND";
  return node_name(a) + "-" + node_name(b);
}

Connection parse_connection(const std::string& text) {
  const auto dash = text.find('-');
  if (dash == std::string::npos) throw ConfigError("bad connection '" + text + "' (expected X-Y or X-GND)");
  const std::string lhs = text.substr(0, dash);
  const std::string rhs = text.substr(dash + 1);
  if (rhs == "GND") return Connection::ground(parse_node_name(lhs));
  if (lhs == "GND") return Connection::ground(parse_node_name(rhs));
  const NodeId x = parse_node_name(lhs);
  const NodeId y = parse_node_name(rhs);
  if (x == y) throw ConfigError("connection '" + text + "' joins a node to itself");
  return Connection::link(x, y);
}

void PowertrainConfiguration::validate() const {
  if (gears.empty()) throw ConfigError("configuration has no planetary gear sets");
  if (gears.size() > 5) throw ConfigError("at most 5 planetary gear sets are supported");
  for (std::size_t i = 0; i < gears.size(); ++i) {
    const auto& g = gears[i];
    if (g.index != static_cast<int>(i) + 1) throw ConfigError("planetary gear sets must be numbered 1..N in order");
    if (sgn(g.sun_teeth) <= 0 || sgn(g.ring_teeth) <= 0)
      throw ConfigError("PG" + std::to_string(g.index) + ": tooth counts must be positive");
    if (g.ring_teeth <= g.sun_teeth)
      throw ConfigError("PG" + std::to_string(g.index) + ": ring must be larger than sun (ring/sun > 1)");
  }
  const int n = node_count();
  for (Device d : kDevices) {
    const NodeId node = node_of(d);
    if (node.index < 0 || node.index >= n)
      throw ConfigError(std::string("device ") + device_name(d) + " is placed on a non-existent node");
  }
  const std::array<Device, 3> powered = {Device::engine, Device::mg1, Device::mg2};
  for (std::size_t i = 0; i < powered.size(); ++i)
    for (std::size_t j = i + 1; j < powered.size(); ++j)
      if (node_of(powered[i]) == node_of(powered[j]))
        throw ConfigError(std::string("devices ") + device_name(powered[i]) + " and " + device_name(powered[j]) +
                          " share node " + node_name(node_of(powered[i])));
  if (node_of(Device::output) == node_of(Device::engine))
    throw ConfigError("output and engine share node " + node_name(node_of(Device::output)));
  for (const auto& c : permanent) {
    if (c.a.index < 0 || c.a.index >= n) throw ConfigError("permanent connection " + c.name() + " uses a bad node");
    if (c.is_ground()) {
      if (c.a == node_of(Device::output))
        throw ConfigError("permanent connection " + c.name() + " grounds the output node");
    } else {
      if (c.b.index < 0 || c.b.index >= n) throw ConfigError("permanent connection " + c.name() + " uses a bad node");
      if (c.a == c.b) throw ConfigError("permanent connection " + c.name() + " joins a node to itself");
    }
  }
}

void InertiaSet::validate(int node_count) const {
  if (sgn(engine) <= 0 || sgn(mg1) <= 0 || sgn(mg2) <= 0 || sgn(vehicle_reflected) <= 0)
    throw ConfigError("engine, MG1, MG2 and vehicle inertias must be positive");
  if (static_cast<int>(node_parasitic.size()) != node_count)
    throw ConfigError("node parasitic inertia list must have one entry per node");
  for (const auto& j : node_parasitic)
    if (sgn(j) < 0) throw ConfigError("node parasitic inertia must be non-negative");
}

InertiaSet default_inertias(int node_count, const Rational& vehicle_reflected) {
  InertiaSet set;
  set.engine = Rational(11, 50);
  set.mg1 = Rational(1, 20);
  set.mg2 = Rational(1, 20);
  set.vehicle_reflected = vehicle_reflected;
  set.node_parasitic.assign(static_cast<std::size_t>(node_count), Rational(1, 1000));
  return set;
}

std::vector<Rational> FullSystemModel::residual(std::span<const Rational> w) const {
  std::vector<Rational> out(constraint.rows());
  for (std::size_t r = 0; r < constraint.rows(); ++r)
    for (std::size_t c = 0; c < constraint.cols(); ++c) out[r] += constraint(r, c) * w[c];
  return out;
}

FullSystemModel assemble_full_dynamics(const PowertrainConfiguration& config, const InertiaSet& inertias) {
  config.validate();
  const int n = config.node_count();
  inertias.validate(n);

  FullSystemModel model;
  model.n_nodes = n;
  model.node_inertia = inertias.node_parasitic;
  model.device_node = config.placement;
  model.node_inertia[config.node_of(Device::engine).index] += inertias.engine;
  model.node_inertia[config.node_of(Device::mg1).index] += inertias.mg1;
  model.node_inertia[config.node_of(Device::mg2).index] += inertias.mg2;
  model.node_inertia[config.node_of(Device::output).index] += inertias.vehicle_reflected;

  model.constraint = RationalMatrix(config.gears.size(), static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < config.gears.size(); ++k) {
    const auto& g = config.gears[k];
    const int pg = g.index;
    model.constraint(k, NodeId::of(pg, GearNode::sun).index) = g.sun_teeth;
    model.constraint(k, NodeId::of(pg, GearNode::ring).index) = g.ring_teeth;
    model.constraint(k, NodeId::of(pg, GearNode::carrier).index) = -(g.sun_teeth + g.ring_teeth);
  }
  return model;
}

std::uint64_t NodePartition::key() const {
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < label.size(); ++i) {
    const std::uint64_t v = grounded[i] ? 15u : static_cast<std::uint64_t>(label[i]);
    k |= v << (4 * i);
  }
  return k;
}

NodePartition merge_nodes(int n_nodes, std::span<const Connection> connections) {
  std::vector<int> parent(static_cast<std::size_t>(n_nodes) + 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](int x, int y) {
    x = find(x);
    y = find(y);
    if (x == y) return;
    if (y < x) std::swap(x, y);
    parent[y] = x;  // smaller index becomes root; ground (index n) never roots a class with nodes
  };
  for (const auto& c : connections) unite(c.a.index, c.is_ground() ? n_nodes : c.b.index);

  NodePartition p;
  p.label.resize(static_cast<std::size_t>(n_nodes));
  p.grounded.resize(static_cast<std::size_t>(n_nodes));
  const int ground_root = find(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    const int r = find(i);
    p.label[i] = r;
    p.grounded[i] = (r == ground_root);
  }
  return p;
}

PartitionBuilder::PartitionBuilder(int n_nodes) : n_(n_nodes) {
  if (n_nodes < 0 || n_nodes > 15) throw std::invalid_argument("PartitionBuilder supports at most 15 nodes");
  for (int i = 0; i <= n_; ++i) parent_[i] = static_cast<std::int8_t>(i);
}

int PartitionBuilder::find(int x) const {
  while (parent_[x] != x) x = parent_[x];
  return x;
}

void PartitionBuilder::add(const Connection& c) {
  int x = find(c.a.index);
  int y = find(c.is_ground() ? n_ : c.b.index);
  if (x == y) return;
  if (y < x) std::swap(x, y);
  parent_[y] = static_cast<std::int8_t>(x);
}

std::uint64_t PartitionBuilder::key() const {
  const int ground_root = find(n_);
  std::uint64_t k = 0;
  for (int i = 0; i < n_; ++i) {
    const int r = find(i);
    const std::uint64_t v = r == ground_root ? 15u : static_cast<std::uint64_t>(r);
    k |= v << (4 * i);
  }
  return k;
}

ReducedSystem reduce_detailed(const FullSystemModel& model, std::span<const Connection> connections) {
  const int n = model.n_nodes;
  const NodePartition part = merge_nodes(n, connections);

  std::vector<int> coord(static_cast<std::size_t>(n), -1);
  std::vector<int> class_root;
  for (int i = 0; i < n; ++i) {
    if (part.grounded[i]) continue;
    const int root = part.label[i];
    auto it = std::find(class_root.begin(), class_root.end(), root);
    if (it == class_root.end()) {
      class_root.push_back(root);
      coord[i] = static_cast<int>(class_root.size()) - 1;
    } else {
      coord[i] = static_cast<int>(it - class_root.begin());
    }
  }
  const std::size_t m = class_root.size();

  std::vector<Rational> mass(m);
  for (int i = 0; i < n; ++i)
    if (coord[i] >= 0) mass[coord[i]] += model.node_inertia[i];

  RationalMatrix merged_constraint(model.constraint.rows(), m);
  for (std::size_t r = 0; r < model.constraint.rows(); ++r)
    for (int i = 0; i < n; ++i)
      if (coord[i] >= 0) merged_constraint(r, coord[i]) += model.constraint(r, i);

  const RationalMatrix null_basis = m ? merged_constraint.nullspace() : RationalMatrix(0, 0);
  const std::size_t d = null_basis.cols();

  ReducedSystem out;
  out.node_velocity_basis = RationalMatrix(static_cast<std::size_t>(n), d);
  for (int i = 0; i < n; ++i)
    if (coord[i] >= 0)
      for (std::size_t j = 0; j < d; ++j) out.node_velocity_basis(i, j) = null_basis(coord[i], j);

  RationalMatrix device_basis(4, d);
  for (Device dev : kDevices) {
    const int node = model.device_node[idx(dev)].index;
    for (std::size_t j = 0; j < d; ++j) device_basis(idx(dev), j) = out.node_velocity_basis(node, j);
  }

  out.reduced_inertia = RationalMatrix(d, d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      Rational s;
      for (std::size_t k = 0; k < m; ++k) s += null_basis(k, a) * mass[k] * null_basis(k, b);
      out.reduced_inertia(a, b) = s;
      out.reduced_inertia(b, a) = s;
    }

  out.a_star.entries = RationalMatrix(4, 4);
  out.node_accel = RationalMatrix(static_cast<std::size_t>(n), 4);
  if (d == 0) {
    out.a_star.dof = 0;
    return out;
  }
  RationalMatrix response;  // d x 4: generalized accelerations per unit device torque
  if (!out.reduced_inertia.solve(device_basis.transposed(), response))
    throw DegenerateModeError("degenerate mode: reduced inertia matrix is singular");
  out.node_accel = out.node_velocity_basis * response;
  out.a_star.entries = device_basis * response;
  out.a_star.dof = static_cast<int>(out.a_star.entries.rank());
  return out;
}

CharacteristicMatrix reduce_with_connections(const FullSystemModel& model, std::span<const Connection> connections) {
  return reduce_detailed(model, connections).a_star;
}

KinematicRelation speed_map(const CharacteristicMatrix& a_star) {
  const auto& A = a_star.entries;
  if (a_star.dof != 1 && a_star.dof != 2)
    throw std::domain_error("speed map supports dof 1 or 2, got " + std::to_string(a_star.dof));

  RationalMatrix reduced = A;
  const auto pivots = reduced.rref();
  const std::size_t d = pivots.size();
  RationalMatrix basis(4, d);  // pivot columns of A span its column space (= admissible device speeds)
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = 0; i < 4; ++i) basis(i, j) = A(i, pivots[j]);

  KinematicRelation rel;
  rel.dof = static_cast<int>(d);
  const std::size_t out = idx(Device::output);
  if (d == 1) {
    if (sgn(basis(out, 0)) == 0) throw std::domain_error("output node cannot move in this mode");
    for (std::size_t i = 0; i < 4; ++i) {
      rel.out_coeff[i] = basis(i, 0) / basis(out, 0);
      rel.free_coeff[i] = 0;
    }
    rel.free_device = Device::engine;
    return rel;
  }
  for (Device f : {Device::engine, Device::mg1, Device::mg2}) {
    RationalMatrix minor(2, 2);
    minor(0, 0) = basis(out, 0);
    minor(0, 1) = basis(out, 1);
    minor(1, 0) = basis(idx(f), 0);
    minor(1, 1) = basis(idx(f), 1);
    const Rational det = minor(0, 0) * minor(1, 1) - minor(0, 1) * minor(1, 0);
    if (sgn(det) == 0) continue;
    // [w_out, w_f] = z^T minor^T  =>  z = minor^{-1} [w_out, w_f]
    RationalMatrix inv(2, 2);
    inv(0, 0) = minor(1, 1) / det;
    inv(0, 1) = -minor(0, 1) / det;
    inv(1, 0) = -minor(1, 0) / det;
    inv(1, 1) = minor(0, 0) / det;
    for (std::size_t i = 0; i < 4; ++i) {
      // w_i = basis(i,:) z = basis(i,:) inv [w_out, w_f]
      rel.out_coeff[i] = basis(i, 0) * inv(0, 0) + basis(i, 1) * inv(1, 0);
      rel.free_coeff[i] = basis(i, 0) * inv(0, 1) + basis(i, 1) * inv(1, 1);
    }
    rel.free_device = f;
    return rel;
  }
  throw std::domain_error("output node cannot move independently in this mode");
}

}  // namespace pgs
