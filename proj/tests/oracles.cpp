#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace oracle {

using Row = std::vector<mpq_class>;

namespace {

// Gauss-Jordan on an augmented system; returns false when the left block is singular.
bool gauss_jordan(std::vector<Row>& m, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    while (p < n && m[p][c] == 0) ++p;
    if (p == n) return false;
    std::swap(m[p], m[c]);
    const mpq_class inv = 1 / m[c][c];
    for (auto& v : m[c]) v *= inv;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || m[r][c] == 0) continue;
      const mpq_class f = m[r][c];
      for (std::size_t k = c; k < m[r].size(); ++k) m[r][k] -= f * m[c][k];
    }
  }
  return true;
}

}  // namespace

int rank_of(std::vector<Row> rows) {
  if (rows.empty()) return 0;
  const std::size_t cols = rows[0].size();
  int rank = 0;
  for (std::size_t c = 0; c < cols && rank < static_cast<int>(rows.size()); ++c) {
    std::size_t p = static_cast<std::size_t>(rank);
    while (p < rows.size() && rows[p][c] == 0) ++p;
    if (p == rows.size()) continue;
    std::swap(rows[p], rows[rank]);
    for (std::size_t r = rank + 1; r < rows.size(); ++r) {
      if (rows[r][c] == 0) continue;
      const mpq_class f = rows[r][c] / rows[rank][c];
      for (std::size_t k = c; k < cols; ++k) rows[r][k] -= f * rows[rank][k];
    }
    ++rank;
  }
  return rank;
}

std::array<std::array<mpq_class, 4>, 4> lagrange_a_star(const pgs::PowertrainConfiguration& config,
                                                        const pgs::InertiaSet& inertias,
                                                        const std::vector<pgs::Connection>& connections) {
  const std::size_t n = 3 * config.gears.size();
  std::vector<mpq_class> inertia(inertias.node_parasitic.begin(), inertias.node_parasitic.end());
  inertia[config.placement[0].index] += inertias.vehicle_reflected;
  inertia[config.placement[1].index] += inertias.engine;
  inertia[config.placement[2].index] += inertias.mg1;
  inertia[config.placement[3].index] += inertias.mg2;

  std::vector<Row> g;
  for (const auto& pg : config.gears) {
    Row r(n);
    const std::size_t base = 3 * static_cast<std::size_t>(pg.index - 1);
    r[base] = pg.sun_teeth;
    r[base + 1] = -(pg.sun_teeth + pg.ring_teeth);
    r[base + 2] = pg.ring_teeth;
    g.push_back(r);
  }
  for (const auto& c : connections) {
    Row r(n);
    r[c.a.index] = 1;
    if (!c.is_ground()) r[c.b.index] = -1;
    g.push_back(r);
  }
  // Keep a linearly independent subset so the KKT matrix is nonsingular.
  std::vector<Row> kept;
  for (const auto& r : g) {
    auto trial = kept;
    trial.push_back(r);
    if (rank_of(trial) == static_cast<int>(trial.size())) kept.push_back(r);
  }
  const std::size_t m = kept.size();
  const std::size_t dim = n + m;

  std::vector<Row> kkt(dim, Row(dim + 4));
  for (std::size_t i = 0; i < n; ++i) kkt[i][i] = inertia[i];
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < n; ++i) {
      kkt[i][n + k] = -kept[k][i];
      kkt[n + k][i] = kept[k][i];
    }
  for (std::size_t j = 0; j < 4; ++j) kkt[config.placement[j].index][dim + j] += 1;
  if (!gauss_jordan(kkt, dim)) throw std::runtime_error("singular KKT system");

  std::array<std::array<mpq_class, 4>, 4> a;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) a[i][j] = kkt[config.placement[i].index][dim + j];
  return a;
}

ExhaustiveResult dp_exhaustive(const pgs::DpProblem& p, const pgs::DpConfig& cfg) {
  ExhaustiveResult best;
  best.cost = std::numeric_limits<double>::infinity();
  std::vector<int> seq(p.stages, 0);
  const auto eval = [&]() -> double {
    double soc = cfg.soc_initial, cost = 0;
    for (std::size_t k = 0; k < p.stages; ++k) {
      const auto& pt = p.at(k, static_cast<std::size_t>(seq[k]));
      if (!pt.feasible) return std::numeric_limits<double>::infinity();
      const auto rate = p.soc_rate(pt.p_batt, soc);
      if (!rate) return std::numeric_limits<double>::infinity();
      soc += *rate * p.dt[k];
      if (soc < cfg.soc_min || soc > cfg.soc_max) return std::numeric_limits<double>::infinity();
      cost += pt.fuel_g;
      if (k > 0 && seq[k] != seq[k - 1]) {
        const auto& a = p.at(k - 1, static_cast<std::size_t>(seq[k - 1])).speeds;
        double pen = 0;
        for (std::size_t i = 0; i < 3; ++i) pen += cfg.shift_weights[i] * (pt.speeds[i] - a[i]) * (pt.speeds[i] - a[i]);
        cost += cfg.alpha * pen;
      }
    }
    return cost + cfg.beta * (cfg.soc_desired - soc) * (cfg.soc_desired - soc);
  };
  while (true) {
    const double c = eval();
    if (c < best.cost) {
      best.cost = c;
      best.ops = seq;
      best.feasible = true;
    }
    std::size_t k = 0;
    for (; k < p.stages; ++k) {
      if (++seq[k] < static_cast<int>(p.ops)) break;
      seq[k] = 0;
    }
    if (k == p.stages) break;
  }
  return best;
}

ToyDp make_toy_dp(std::mt19937_64& rng, std::size_t stages, std::size_t modes) {
  ToyDp t;
  t.cfg.soc_min = 0.25;
  t.cfg.soc_step = 0.0625;
  t.cfg.soc_max = 0.625;
  t.cfg.soc_initial = 0.4375;
  t.cfg.soc_desired = 0.4375;
  t.cfg.alpha = 0.125;
  t.cfg.beta = 16;
  t.cfg.shift_weights = {1, 1, 1};

  auto& p = t.problem;
  p.stages = stages;
  p.ops = 2 * modes;
  p.dt.assign(stages, 1.0);
  for (std::size_t m = 0; m < modes; ++m) {
    p.op_mode.insert(p.op_mode.end(), 2, static_cast<int>(m));
    p.op_engine_on.push_back(false);
    p.op_engine_on.push_back(true);
  }
  std::uniform_int_distribution<int> batt(-2, 2), fuel(1, 8), speed(0, 6), coin(0, 99);
  for (std::size_t k = 0; k < stages; ++k)
    for (std::size_t o = 0; o < p.ops; ++o) {
      pgs::DpOpPoint pt;
      pt.feasible = coin(rng) < 85;
      pt.p_batt = batt(rng);
      pt.fuel_g = p.op_engine_on[o] ? fuel(rng) : 0;
      for (auto& s : pt.speeds) s = speed(rng);
      if (!p.op_engine_on[o]) pt.speeds[0] = 0;
      p.points.push_back(pt);
    }
  p.soc_rate = [](double pb, double) -> std::optional<double> { return -pb / 16.0; };
  p.distance_m = 1000;
  return t;
}

}  // namespace oracle
