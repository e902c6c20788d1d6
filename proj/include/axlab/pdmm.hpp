#pragma once

// Primal-dual method of multipliers for
//
//   minimise   sum_i f_i(x_i)
//   subject to A_ij x_i + A_ji x_j = b_ij   for every edge (i, j)
//
// over an undirected graph. Each edge carries two directed multipliers:
// lambda_{i|j} held by node i and lambda_{j|i} held by node j. Message passing
// is simulated in-process.

#include <array>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "axlab/errors.hpp"

namespace axlab::pdmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
};

/// Undirected simple graph. Rejects self-loops, duplicate edges and
/// out-of-range endpoints.
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t node_count, std::vector<Edge> edges);

  std::size_t node_count() const { return node_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  /// Indices into edges() of the edges touching node.
  std::span<const std::size_t> incident(std::size_t node) const { return incident_[node]; }
  std::vector<std::size_t> neighbors(std::size_t node) const;
  bool connected() const;

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> incident_;
};

/// One record per undirected edge (i, j) in Graph::edges() order:
/// a_ij multiplies x_i, a_ji multiplies x_j.
struct EdgeConstraint {
  MatrixXd a_ij;
  MatrixXd a_ji;
  VectorXd b;
};

/// f(x) = 1/2 x^T P x - q^T x with P symmetric positive semidefinite.
struct QuadraticObjective {
  MatrixXd p;
  VectorXd q;

  /// 1/2 ||x - a||^2 up to a constant.
  static QuadraticObjective centered(const VectorXd& a);
  bool is_centered() const;
};

/// Penalty rho/2 ||matrix x - target||^2 in a node's local subproblem.
struct PenaltyTerm {
  MatrixXd matrix;
  VectorXd target;
};

/// argmin_x f(x) - linear^T x + sum_t rho/2 ||A_t x - target_t||^2
struct LocalSubproblem {
  VectorXd linear;
  double rho = 1.0;
  std::vector<PenaltyTerm> penalties;
};

using LocalMinimizer = std::function<VectorXd(const LocalSubproblem&)>;

struct NodeObjective {
  std::size_t dim = 0;
  std::variant<QuadraticObjective, LocalMinimizer> form;

  static NodeObjective quadratic(QuadraticObjective q);
  static NodeObjective centered(const VectorXd& a);
  static NodeObjective custom(std::size_t dim, LocalMinimizer minimizer);
};

struct Problem {
  Graph graph;
  std::vector<NodeObjective> objectives;     // one per node
  std::vector<EdgeConstraint> constraints;  // one per edge

  /// Shape and finiteness checks; throws DimensionError / PreconditionError.
  void validate() const;
};

struct PdmmState {
  std::vector<VectorXd> x;
  /// duals[e][0] = lambda_{i|j}, duals[e][1] = lambda_{j|i} for edges()[e] = (i, j).
  std::vector<std::array<VectorXd, 2>> duals;
  double rho = 1.0;
  std::size_t iteration = 0;
  /// Max primal residual after each iteration, oldest dropped beyond the cap.
  std::deque<double> residual_history;
};

/// Snapshots x^k and duals^k for k = 0, 1, ... (synchronous runs only).
struct Trajectory {
  std::vector<std::vector<VectorXd>> x;
  std::vector<std::vector<std::array<VectorXd, 2>>> duals;
};

struct ResidualReport {
  std::vector<double> per_edge;  // ||A_ij x_i + A_ji x_j - b_ij||
  double max = 0.0;
};

struct SolverOptions {
  double rho = 1.0;
  std::size_t residual_history_cap = 4096;
  bool record_trajectory = false;
};

class Solver {
 public:
  /// Starts from x = 0, lambda = 0.
  Solver(Problem problem, SolverOptions options);
  /// Starts from the given primal/dual values; iteration counter and history are reset.
  Solver(Problem problem, SolverOptions options, const PdmmState& initial);

  const Problem& problem() const { return problem_; }
  const PdmmState& state() const { return state_; }
  const Trajectory& trajectory() const { return trajectory_; }

  /// argmin of node's local subproblem given the current neighbour values and
  /// incoming duals lambda_{j|node}.
  VectorXd x_update(std::size_t node) const;

  /// lambda_{node|m}^{k+1} = lambda_{m|node}^k + rho (b - A_m x_m^k - A_node x_new)
  /// where m is the other endpoint of edge.
  VectorXd lambda_update(std::size_t node, std::size_t edge, const VectorXd& x_new) const;

  /// The dual held by holder on edge (lambda_{holder|other}).
  const VectorXd& dual(std::size_t holder, std::size_t edge) const;

  /// Every node updates from the iteration-k snapshot, then every directed dual.
  void iterate_sync();
  void run_sync(std::size_t iterations);

  /// One uniformly chosen node updates x and its outgoing duals.
  std::size_t iterate_async(std::mt19937_64& rng);

  ResidualReport primal_residual() const;

 private:
  void init();
  std::size_t slot(std::size_t node, std::size_t edge) const;
  const MatrixXd& own_matrix(std::size_t node, std::size_t edge) const;
  const MatrixXd& other_matrix(std::size_t node, std::size_t edge) const;
  std::size_t other_node(std::size_t node, std::size_t edge) const;
  void push_history();

  Problem problem_;
  SolverOptions options_;
  PdmmState state_;
  Trajectory trajectory_;
  std::vector<Eigen::LLT<MatrixXd>> normal_factors_;  // quadratic nodes only
};

/// Rebuilds lambda^k for every directed dual from lambda^0 and the primal
/// history as two alternating residual sums, and returns the largest
/// deviation from the recorded lambda^k. k must be even.
double lambda_history_check(const Problem& problem, double rho, const Trajectory& trajectory, std::size_t k);

struct OracleSolution {
  std::vector<VectorXd> x;
  std::vector<VectorXd> multipliers;  // per edge; grad f_i(x_i) = sum_e A_{i,e}^T nu_e
};

/// Direct solve of the KKT system. Quadratic objectives only. Redundant
/// constraints are allowed as long as x* is unique and the system is consistent.
OracleSolution centralized_oracle(const Problem& problem);

/// A state at the oracle's optimum: both directed duals equal the multiplier.
PdmmState state_from_oracle(const Problem& problem, const OracleSolution& solution, double rho);

/// max over nodes of ||a_i - b_i||_inf.
double max_distance(std::span<const VectorXd> a, std::span<const VectorXd> b);

// ---- problem files ----------------------------------------------------------
//
//   # comment
//   node <id> <dim> quadratic <a_1 ... a_dim>
//   edge <i> <j> <p> <A_ij row-major p*d_i> <A_ji row-major p*d_j> <b_1 ... b_p>

Problem read_problem(std::istream& in);
Problem load_problem(const std::filesystem::path& path);
/// Centered quadratic objectives only.
void write_problem(std::ostream& out, const Problem& problem);

}  // namespace axlab::pdmm
