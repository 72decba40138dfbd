#include "retrofit/oscnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "retrofit/errors.hpp"

namespace retrofit::oscnet {

namespace {

bool contains(const std::vector<Index>& v, Index x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::vector<bool> membership(const NetworkSpec& spec) {
  std::vector<bool> in(static_cast<std::size_t>(spec.node_count), false);
  for (Index k : spec.subsystem_nodes) in[static_cast<std::size_t>(k)] = true;
  return in;
}

Index position_of(const std::vector<Index>& v, Index x) {
  return static_cast<Index>(std::find(v.begin(), v.end(), x) - v.begin());
}

/// Uniform double in [0, 1) from the raw 64-bit engine output; portable
/// across standard libraries, unlike std::uniform_real_distribution.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct Point {
  double x, y;
};

double dist(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Geometric graph on `nodes` with radius r, then joined into one component
/// by repeatedly linking the closest pair of points in different components.
std::vector<std::pair<Index, Index>> geometric_graph(const std::vector<Index>& nodes,
                                                     const std::vector<Point>& pos, double r) {
  std::vector<std::pair<Index, Index>> edges;
  const std::size_t n = nodes.size();
  std::vector<std::size_t> comp(n);
  std::iota(comp.begin(), comp.end(), 0);
  auto find = [&](std::size_t a) {
    while (comp[a] != a) a = comp[a] = comp[comp[a]];
    return a;
  };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (dist(pos[a], pos[b]) < r) {
        edges.emplace_back(nodes[a], nodes[b]);
        comp[find(a)] = find(b);
      }
    }
  }
  while (true) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (find(a) != find(b) && dist(pos[a], pos[b]) < best) {
          best = dist(pos[a], pos[b]);
          ba = a;
          bb = b;
        }
      }
    }
    if (!std::isfinite(best)) break;
    edges.emplace_back(nodes[ba], nodes[bb]);
    comp[find(ba)] = find(bb);
  }
  return edges;
}

}  // namespace

void validate(const NetworkSpec& spec) {
  const Index n = spec.node_count;
  if (n < 2) throw ConfigError("network: need at least two nodes");
  if (spec.inertia.size() != n || spec.damping.size() != n) {
    throw ConfigError("network: inertia and damping need one entry per node");
  }
  if ((spec.inertia.array() <= 0).any()) throw ConfigError("network: inertia must be positive");
  if ((spec.damping.array() < 0).any()) throw ConfigError("network: damping must be >= 0");
  if (spec.subsystem_nodes.empty() || static_cast<Index>(spec.subsystem_nodes.size()) >= n) {
    throw ConfigError("network: subsystem must be a nonempty proper subset of the nodes");
  }
  std::set<Index> seen;
  for (Index k : spec.subsystem_nodes) {
    if (k < 0 || k >= n) throw ConfigError("network: subsystem node label out of range");
    if (!seen.insert(k).second) throw ConfigError("network: duplicate subsystem node");
  }
  if (!(spec.kc >= 0)) throw ConfigError("network: boundary stiffness kc must be >= 0");
  for (const Edge& e : spec.edges) {
    if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n || e.i == e.j) {
      throw ConfigError("network: edge endpoints must be distinct valid labels");
    }
    if (!(e.stiffness >= 0)) {
      std::ostringstream os;
      os << "network: negative stiffness on edge (" << e.i << ", " << e.j << ")";
      throw ConfigError(os.str());
    }
  }
}

double effective_stiffness(const NetworkSpec& spec, const Edge& e) {
  const bool a = contains(spec.subsystem_nodes, e.i);
  const bool b = contains(spec.subsystem_nodes, e.j);
  return a == b ? e.stiffness : spec.kc;
}

MatrixXd laplacian(const NetworkSpec& spec) {
  validate(spec);
  MatrixXd lap = MatrixXd::Zero(spec.node_count, spec.node_count);
  for (const Edge& e : spec.edges) {
    const double k = effective_stiffness(spec, e);
    lap(e.i, e.i) += k;
    lap(e.j, e.j) += k;
    lap(e.i, e.j) -= k;
    lap(e.j, e.i) -= k;
  }
  return lap;
}

StateSpace build_network(const NetworkSpec& spec) {
  const MatrixXd lap = laplacian(spec);
  const Index n = spec.node_count;
  const VectorXd minv = spec.inertia.cwiseInverse();
  MatrixXd a = MatrixXd::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n).setIdentity();
  a.bottomLeftCorner(n, n) = -(minv.asDiagonal() * lap);
  a.bottomRightCorner(n, n) = (-minv.cwiseProduct(spec.damping)).asDiagonal();
  MatrixXd b = MatrixXd::Zero(2 * n, n);
  b.bottomRows(n) = minv.asDiagonal();
  return StateSpace(a, b, MatrixXd::Identity(2 * n, 2 * n), MatrixXd::Zero(2 * n, n));
}

std::vector<Index> boundary_nodes(const NetworkSpec& spec) {
  std::vector<Index> out;
  for (Index k : spec.subsystem_nodes) {
    for (const Edge& e : spec.edges) {
      const Index other = e.i == k ? e.j : (e.j == k ? e.i : -1);
      if (other >= 0 && !contains(spec.subsystem_nodes, other)) {
        out.push_back(k);
        break;
      }
    }
  }
  return out;
}

std::vector<Index> environment_nodes(const NetworkSpec& spec) {
  std::vector<Index> out;
  const auto in = membership(spec);
  for (Index k = 0; k < spec.node_count; ++k) {
    if (!in[static_cast<std::size_t>(k)]) out.push_back(k);
  }
  return out;
}

Partition partition(const NetworkSpec& spec, const ChannelAssignment& assign) {
  const MatrixXd full_lap = laplacian(spec);
  const std::vector<Index>& sub = spec.subsystem_nodes;
  const std::vector<Index> env = environment_nodes(spec);
  const std::vector<Index> bnd = boundary_nodes(spec);
  if (bnd.empty()) throw ConfigError("partition: subsystem has no edges into the environment");
  for (const auto* group : {&assign.actuated, &assign.disturbed, &assign.measured,
                            &assign.evaluated}) {
    for (Index k : *group) {
      if (!contains(sub, k)) {
        std::ostringstream os;
        os << "partition: channel assignment references node " << k
           << ", which is not in the subsystem";
        throw ConfigError(os.str());
      }
    }
  }
  const Index ns = static_cast<Index>(sub.size()), ne = static_cast<Index>(env.size());
  const Index nb = static_cast<Index>(bnd.size());

  // Boundary stiffness K_ij for i in the subsystem, j in the environment.
  MatrixXd kb = MatrixXd::Zero(ns, ne);
  for (const Edge& e : spec.edges) {
    const bool a = contains(sub, e.i), b = contains(sub, e.j);
    if (a == b) continue;
    const Index si = position_of(sub, a ? e.i : e.j);
    const Index ej = position_of(env, a ? e.j : e.i);
    kb(si, ej) += spec.kc;
  }

  // Subsystem: internal Laplacian only.
  MatrixXd lap_s(ns, ns);
  for (Index r = 0; r < ns; ++r)
    for (Index c = 0; c < ns; ++c) lap_s(r, c) = full_lap(sub[r], sub[c]);
  lap_s.diagonal() -= kb.rowwise().sum();
  VectorXd ms(ns), ds(ns);
  for (Index r = 0; r < ns; ++r) {
    ms(r) = spec.inertia(sub[r]);
    ds(r) = spec.damping(sub[r]);
  }
  const VectorXd msinv = ms.cwiseInverse();
  MatrixXd a = MatrixXd::Zero(2 * ns, 2 * ns);
  a.topRightCorner(ns, ns).setIdentity();
  a.bottomLeftCorner(ns, ns) = -(msinv.asDiagonal() * lap_s);
  a.bottomRightCorner(ns, ns) = (-msinv.cwiseProduct(ds)).asDiagonal();

  auto force_cols = [&](const std::vector<Index>& nodes) {
    MatrixXd m = MatrixXd::Zero(2 * ns, static_cast<Index>(nodes.size()));
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const Index p = position_of(sub, nodes[k]);
      m(ns + p, static_cast<Index>(k)) = msinv(p);
    }
    return m;
  };
  auto rows = [&](const std::vector<Index>& nodes, Index block) {
    MatrixXd m = MatrixXd::Zero(static_cast<Index>(nodes.size()), 2 * ns);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      m(static_cast<Index>(k), block * ns + position_of(sub, nodes[k])) = 1;
    }
    return m;
  };
  const MatrixXd l = force_cols(bnd);
  const MatrixXd w = force_cols(assign.disturbed);
  const MatrixXd b = force_cols(assign.actuated);
  const MatrixXd gamma = rows(bnd, 0);
  const MatrixXd s = rows(assign.evaluated, 1);
  MatrixXd c(2 * static_cast<Index>(assign.measured.size()), 2 * ns);
  c << rows(assign.measured, 0), rows(assign.measured, 1);
  PartitionedPlant g = PartitionedPlant::from_blocks(a, l, w, b, gamma, s, c);

  // Environment, grounded through the boundary edges; input w = th_b.
  MatrixXd lap_e(ne, ne);
  for (Index r = 0; r < ne; ++r)
    for (Index q = 0; q < ne; ++q) lap_e(r, q) = full_lap(env[r], env[q]);
  VectorXd me(ne), de(ne);
  for (Index r = 0; r < ne; ++r) {
    me(r) = spec.inertia(env[r]);
    de(r) = spec.damping(env[r]);
  }
  const VectorXd meinv = me.cwiseInverse();
  MatrixXd kbb(nb, ne);  // boundary rows of kb
  for (Index k = 0; k < nb; ++k) kbb.row(k) = kb.row(position_of(sub, bnd[k]));
  MatrixXd ae = MatrixXd::Zero(2 * ne, 2 * ne);
  ae.topRightCorner(ne, ne).setIdentity();
  ae.bottomLeftCorner(ne, ne) = -(meinv.asDiagonal() * lap_e);
  ae.bottomRightCorner(ne, ne) = (-meinv.cwiseProduct(de)).asDiagonal();
  MatrixXd be = MatrixXd::Zero(2 * ne, nb);
  be.bottomRows(ne) = meinv.asDiagonal() * kbb.transpose();
  MatrixXd ce = MatrixXd::Zero(nb, 2 * ne);
  ce.leftCols(ne) = kbb;
  const MatrixXd de_mat = -MatrixXd(kbb.rowwise().sum().asDiagonal());
  EnvironmentModel envm(StateSpace(ae, be, ce, de_mat));
  return Partition{std::move(g), std::move(envm), bnd, env};
}

ChannelAssignment benchmark_assignment() {
  return ChannelAssignment{{1, 2, 3}, {0, 1, 2}, {1, 2, 3}, {0, 1, 2, 3, 4, 5}};
}

NetworkSpec benchmark_network(double kc, std::uint64_t topology_seed) {
  constexpr Index kNodes = 36, kSub = 6;
  constexpr double kStiffness = 5.0;
  std::mt19937_64 rng(topology_seed);
  std::vector<Point> pos(kNodes);
  // Subsystem in a corner patch, environment over the unit square.
  for (Index k = 0; k < kSub; ++k) pos[k] = {0.35 * unit(rng), 0.35 * unit(rng)};
  for (Index k = kSub; k < kNodes; ++k) pos[k] = {unit(rng), unit(rng)};

  std::vector<Index> sub(kSub), env(kNodes - kSub);
  std::iota(sub.begin(), sub.end(), 0);
  std::iota(env.begin(), env.end(), kSub);
  std::vector<Point> ps(pos.begin(), pos.begin() + kSub), pe(pos.begin() + kSub, pos.end());

  NetworkSpec spec;
  spec.node_count = kNodes;
  spec.inertia = VectorXd::Ones(kNodes);
  spec.damping = VectorXd::Constant(kNodes, 0.2);
  spec.subsystem_nodes = sub;
  spec.kc = kc;
  for (const auto& [i, j] : geometric_graph(sub, ps, 0.2)) spec.edges.push_back({i, j, kStiffness});
  for (const auto& [i, j] : geometric_graph(env, pe, 0.3)) spec.edges.push_back({i, j, kStiffness});

  // One boundary edge per node in {0, 4, 5}, each to the nearest unused
  // environment node.
  std::set<Index> used;
  for (Index b : {Index(0), Index(4), Index(5)}) {
    Index best = -1;
    double dbest = std::numeric_limits<double>::infinity();
    for (Index j : env) {
      if (used.count(j)) continue;
      const double dj = dist(pos[b], pos[j]);
      if (dj < dbest) {
        dbest = dj;
        best = j;
      }
    }
    used.insert(best);
    spec.edges.push_back({b, best, kc});
  }
  return spec;
}

}  // namespace retrofit::oscnet
