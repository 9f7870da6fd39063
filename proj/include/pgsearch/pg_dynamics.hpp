#pragma once

// Planetary-gear powertrain dynamics: node model, rigid connections, and the
// characteristic matrix that maps device torques to device accelerations.

#include "pgsearch/rational.hpp"

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgs {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateModeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class GearNode : std::uint8_t { sun = 0, carrier = 1, ring = 2 };

/// Global node index; PGk (1-based) owns indices 3(k-1) .. 3(k-1)+2 as sun, carrier, ring.
struct NodeId {
  int index = -1;

  static NodeId of(int pg_number, GearNode node) { return {3 * (pg_number - 1) + static_cast<int>(node)}; }
  int pg_number() const { return index / 3 + 1; }
  GearNode gear_node() const { return static_cast<GearNode>(index % 3); }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

std::string node_name(NodeId node);
NodeId parse_node_name(const std::string& name);

/// Row/column order of the characteristic matrix.
enum class Device : std::uint8_t { output = 0, engine = 1, mg1 = 2, mg2 = 3 };
inline constexpr std::array<Device, 4> kDevices = {Device::output, Device::engine, Device::mg1, Device::mg2};
inline constexpr std::size_t idx(Device d) { return static_cast<std::size_t>(d); }
const char* device_name(Device d);

struct Connection {
  enum class Kind : std::uint8_t { node_node = 0, node_ground = 1 };

  Kind kind = Kind::node_node;
  NodeId a;
  NodeId b;  // unused for node_ground

  static Connection link(NodeId x, NodeId y);
  static Connection ground(NodeId x) { return {Kind::node_ground, x, NodeId{}}; }

  bool is_ground() const { return kind == Kind::node_ground; }
  std::string name() const;

  friend auto operator<=>(const Connection&, const Connection&) = default;
};

Connection parse_connection(const std::string& text);

struct PlanetaryGearSet {
  int index = 1;  // 1-based PG number
  Rational sun_teeth = 1;
  Rational ring_teeth = 2;
};

struct PowertrainConfiguration {
  std::vector<PlanetaryGearSet> gears;
  std::array<NodeId, 4> placement{};  // indexed by Device
  std::vector<Connection> permanent;

  int node_count() const { return 3 * static_cast<int>(gears.size()); }
  NodeId node_of(Device d) const { return placement[idx(d)]; }

  /// Throws ConfigError naming the violated rule.
  void validate() const;
};

struct InertiaSet {
  Rational engine;
  Rational mg1;
  Rational mg2;
  Rational vehicle_reflected;
  std::vector<Rational> node_parasitic;  // one per node

  void validate(int node_count) const;
};

/// Engine 0.22, MGs 0.05, 0.001 per node, vehicle m r^2 / FD^2 (all kg m^2).
InertiaSet default_inertias(int node_count, const Rational& vehicle_reflected);

/// Unconstrained system over all 3 N_p nodes.
struct FullSystemModel {
  int n_nodes = 0;
  std::vector<Rational> node_inertia;  // parasitic plus attached device inertias
  RationalMatrix constraint;           // N_p x n: S w_sun + R w_ring - (S+R) w_carrier = 0
  std::array<NodeId, 4> device_node{};

  /// Constraint residual per gear set for node speeds `w`.
  std::vector<Rational> residual(std::span<const Rational> w) const;
};

FullSystemModel assemble_full_dynamics(const PowertrainConfiguration& config, const InertiaSet& inertias);

struct CharacteristicMatrix {
  RationalMatrix entries;  // 4 x 4, rows/cols ordered by Device
  int dof = 0;

  const Rational& at(Device row, Device col) const { return entries(idx(row), idx(col)); }
  bool operator==(const CharacteristicMatrix& o) const { return entries == o.entries; }
};

/// Union-find merge of nodes and ground; `label[i]` is the smallest node index in the
/// class of node i, `grounded[i]` marks classes tied to ground.
struct NodePartition {
  std::vector<int> label;
  std::vector<bool> grounded;

  /// Packs labels (4 bits per node, ground as label 15) into a canonical key. n <= 15.
  std::uint64_t key() const;
};

NodePartition merge_nodes(int n_nodes, std::span<const Connection> connections);

/// Allocation-free union-find for hot loops; key() equals merge_nodes(...).key().
class PartitionBuilder {
 public:
  explicit PartitionBuilder(int n_nodes);
  void add(const Connection& c);
  std::uint64_t key() const;

 private:
  int find(int x) const;
  int n_;
  std::array<std::int8_t, 16> parent_{};
};

struct ReducedSystem {
  CharacteristicMatrix a_star;
  RationalMatrix node_velocity_basis;  // n x d: every admissible node speed vector is basis * z
  RationalMatrix node_accel;           // n x 4: node accelerations per unit device torque
  RationalMatrix reduced_inertia;      // d x d, symmetric positive definite
};

ReducedSystem reduce_detailed(const FullSystemModel& model, std::span<const Connection> connections);

/// Throws DegenerateModeError when the reduced inertia matrix is singular.
CharacteristicMatrix reduce_with_connections(const FullSystemModel& model, std::span<const Connection> connections);

/// Device speeds as exact linear maps of output speed (and one free device speed when dof = 2).
struct KinematicRelation {
  int dof = 1;
  Device free_device = Device::engine;  // second coordinate when dof == 2
  std::array<Rational, 4> out_coeff;    // w_i = out_coeff[i] * w_out + free_coeff[i] * w_free
  std::array<Rational, 4> free_coeff;

  /// Engine to output speed ratio for dof == 1.
  Rational gear_ratio() const { return out_coeff[idx(Device::engine)]; }
};

/// Throws std::domain_error for dof outside {1, 2} or an immobile output.
KinematicRelation speed_map(const CharacteristicMatrix& a_star);

}  // namespace pgs
