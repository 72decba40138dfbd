#pragma once

// Second-order oscillator networks
//
//   M_i th_i'' = -D_i th_i' + sum_j K_ij (th_j - th_i) + u_i + d_i
//
// split into a subsystem of interest and its environment.

#include <cstdint>
#include <vector>

#include "retrofit/plant.hpp"

namespace retrofit::oscnet {

struct Edge {
  Index i = 0;
  Index j = 0;
  double stiffness = 0;
};

struct NetworkSpec {
  Index node_count = 0;
  /// Undirected edges. Edges between the subsystem and the environment take
  /// the boundary stiffness kc regardless of their listed value.
  std::vector<Edge> edges;
  VectorXd inertia;
  VectorXd damping;
  /// Node labels of the subsystem, in state order.
  std::vector<Index> subsystem_nodes;
  double kc = 0;
};

struct ChannelAssignment {
  std::vector<Index> actuated;
  std::vector<Index> disturbed;
  /// Nodes whose angle and velocity are measured: y = (th_m..., th_m'...).
  std::vector<Index> measured;
  /// Nodes whose velocity is evaluated: z = (th_e'...).
  std::vector<Index> evaluated;
};

/// Throws ConfigError unless labels, sizes and stiffness values are valid.
void validate(const NetworkSpec& spec);

/// Effective stiffness of an edge, with boundary edges set to kc.
double effective_stiffness(const NetworkSpec& spec, const Edge& e);

/// Laplacian of the whole network with effective stiffness.
MatrixXd laplacian(const NetworkSpec& spec);

/// The whole network: state (th, th'), one force input per node, outputs
/// the full state.
StateSpace build_network(const NetworkSpec& spec);

/// Subsystem nodes with at least one edge into the environment, in
/// subsystem order.
std::vector<Index> boundary_nodes(const NetworkSpec& spec);

/// Environment nodes in ascending label order.
std::vector<Index> environment_nodes(const NetworkSpec& spec);

struct Partition {
  PartitionedPlant g;
  EnvironmentModel env;
  std::vector<Index> boundary;
  std::vector<Index> environment;
};

/// Subsystem G with v_b = sum_{j outside} K_bj (th_j - th_b) at each boundary
/// node b, w = (th_b), and the environment mapping w -> v with its Laplacian
/// grounded by the boundary stiffness.
Partition partition(const NetworkSpec& spec, const ChannelAssignment& assign);

/// Channel assignment of the benchmark: u at {1, 2, 3}, d at {0, 1, 2},
/// y = (th, th') at {1, 2, 3}, z = th' at {0, ..., 5}.
ChannelAssignment benchmark_assignment();

/// Benchmark network: 36 nodes, subsystem {0, ..., 5}, M = 1, D = 0.2, K = 5
/// inside both parts, and one boundary edge from each of the nodes {0, 4, 5}.
/// Topology: seeded random geometric graph, each part made connected.
NetworkSpec benchmark_network(double kc, std::uint64_t topology_seed = 1);

}  // namespace retrofit::oscnet
