#include "axlab/pdmm.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace axlab::pdmm {

// ---- Graph ------------------------------------------------------------------

Graph::Graph(std::size_t node_count, std::vector<Edge> edges)
    : node_count_(node_count), edges_(std::move(edges)), incident_(node_count) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto [i, j] = edges_[e];
    if (i >= node_count_ || j >= node_count_) {
      throw IndexError("graph: edge (" + std::to_string(i) + "," + std::to_string(j) + ") references a node >= " +
                       std::to_string(node_count_));
    }
    if (i == j) throw PreconditionError("graph: self-loop at node " + std::to_string(i));
    if (!seen.insert({std::min(i, j), std::max(i, j)}).second) {
      throw PreconditionError("graph: duplicate edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
    }
    incident_[i].push_back(e);
    incident_[j].push_back(e);
  }
}

std::vector<std::size_t> Graph::neighbors(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t e : incident_[node]) out.push_back(edges_[e].i == node ? edges_[e].j : edges_[e].i);
  return out;
}

bool Graph::connected() const {
  if (node_count_ == 0) return true;
  std::vector<bool> seen(node_count_, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const std::size_t n = stack.back();
    stack.pop_back();
    for (std::size_t m : neighbors(n)) {
      if (!seen[m]) {
        seen[m] = true;
        ++count;
        stack.push_back(m);
      }
    }
  }
  return count == node_count_;
}

// ---- objectives -------------------------------------------------------------

QuadraticObjective QuadraticObjective::centered(const VectorXd& a) {
  return {MatrixXd::Identity(a.size(), a.size()), a};
}

bool QuadraticObjective::is_centered() const { return p.isIdentity(0.0); }

NodeObjective NodeObjective::quadratic(QuadraticObjective q) {
  const auto dim = static_cast<std::size_t>(q.q.size());
  return {dim, std::move(q)};
}

NodeObjective NodeObjective::centered(const VectorXd& a) { return quadratic(QuadraticObjective::centered(a)); }

NodeObjective NodeObjective::custom(std::size_t dim, LocalMinimizer minimizer) { return {dim, std::move(minimizer)}; }

void Problem::validate() const {
  const std::size_t n = graph.node_count();
  if (objectives.size() != n) {
    throw DimensionError("problem: " + std::to_string(objectives.size()) + " objectives for " + std::to_string(n) +
                         " nodes");
  }
  if (constraints.size() != graph.edges().size()) {
    throw DimensionError("problem: " + std::to_string(constraints.size()) + " constraints for " +
                         std::to_string(graph.edges().size()) + " edges");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& obj = objectives[i];
    if (const auto* q = std::get_if<QuadraticObjective>(&obj.form)) {
      const auto d = static_cast<Eigen::Index>(obj.dim);
      if (q->p.rows() != d || q->p.cols() != d || q->q.size() != d) {
        throw DimensionError("problem: node " + std::to_string(i) + " quadratic data does not match dim " +
                             std::to_string(obj.dim));
      }
      if (!q->p.isApprox(q->p.transpose(), 1e-12) && !q->p.isZero()) {
        throw PreconditionError("problem: node " + std::to_string(i) + " has a non-symmetric P");
      }
      if (!q->p.allFinite() || !q->q.allFinite()) {
        throw PreconditionError("problem: node " + std::to_string(i) + " has non-finite data");
      }
    } else if (!std::get<LocalMinimizer>(obj.form)) {
      throw PreconditionError("problem: node " + std::to_string(i) + " has an empty minimizer");
    }
  }
  for (std::size_t e = 0; e < constraints.size(); ++e) {
    const auto& c = constraints[e];
    const auto [i, j] = graph.edges()[e];
    const auto p = c.b.size();
    if (c.a_ij.rows() != p || c.a_ji.rows() != p ||
        c.a_ij.cols() != static_cast<Eigen::Index>(objectives[i].dim) ||
        c.a_ji.cols() != static_cast<Eigen::Index>(objectives[j].dim)) {
      throw DimensionError("problem: edge (" + std::to_string(i) + "," + std::to_string(j) +
                           ") constraint shapes are inconsistent");
    }
    if (!c.a_ij.allFinite() || !c.a_ji.allFinite() || !c.b.allFinite()) {
      throw PreconditionError("problem: edge (" + std::to_string(i) + "," + std::to_string(j) +
                              ") has non-finite data");
    }
  }
}

// ---- Solver -----------------------------------------------------------------

Solver::Solver(Problem problem, SolverOptions options) : problem_(std::move(problem)), options_(options) {
  problem_.validate();
  const auto& g = problem_.graph;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    state_.x.push_back(VectorXd::Zero(static_cast<Eigen::Index>(problem_.objectives[i].dim)));
  }
  for (const auto& c : problem_.constraints) {
    state_.duals.push_back({VectorXd::Zero(c.b.size()), VectorXd::Zero(c.b.size())});
  }
  init();
}

Solver::Solver(Problem problem, SolverOptions options, const PdmmState& initial)
    : problem_(std::move(problem)), options_(options) {
  problem_.validate();
  if (initial.x.size() != problem_.graph.node_count() || initial.duals.size() != problem_.constraints.size()) {
    throw DimensionError("pdmm: initial state does not match the problem");
  }
  state_.x = initial.x;
  state_.duals = initial.duals;
  init();
}

void Solver::init() {
  if (!(options_.rho > 0.0)) throw PreconditionError("pdmm: rho must be > 0");
  state_.rho = options_.rho;
  state_.iteration = 0;
  state_.residual_history.clear();

  const auto& g = problem_.graph;
  normal_factors_.assign(g.node_count(), {});
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto* q = std::get_if<QuadraticObjective>(&problem_.objectives[i].form);
    if (q == nullptr) continue;
    MatrixXd normal = q->p;
    for (std::size_t e : g.incident(i)) {
      const MatrixXd& a = own_matrix(i, e);
      normal += options_.rho * a.transpose() * a;
    }
    normal_factors_[i].compute(normal);
    if (normal_factors_[i].info() != Eigen::Success) {
      throw SolverError("pdmm: local normal matrix of node " + std::to_string(i) + " is not positive definite");
    }
  }
  if (options_.record_trajectory) {
    trajectory_.x = {state_.x};
    trajectory_.duals = {state_.duals};
  }
}

std::size_t Solver::slot(std::size_t node, std::size_t edge) const {
  return problem_.graph.edges()[edge].i == node ? 0 : 1;
}

const MatrixXd& Solver::own_matrix(std::size_t node, std::size_t edge) const {
  const auto& c = problem_.constraints[edge];
  return slot(node, edge) == 0 ? c.a_ij : c.a_ji;
}

const MatrixXd& Solver::other_matrix(std::size_t node, std::size_t edge) const {
  const auto& c = problem_.constraints[edge];
  return slot(node, edge) == 0 ? c.a_ji : c.a_ij;
}

std::size_t Solver::other_node(std::size_t node, std::size_t edge) const {
  const auto& e = problem_.graph.edges()[edge];
  return e.i == node ? e.j : e.i;
}

const VectorXd& Solver::dual(std::size_t holder, std::size_t edge) const {
  return state_.duals[edge][slot(holder, edge)];
}

VectorXd Solver::x_update(std::size_t node) const {
  if (node >= problem_.graph.node_count()) throw IndexError("pdmm: node " + std::to_string(node) + " out of range");
  const double rho = state_.rho;
  const auto& obj = problem_.objectives[node];
  VectorXd linear = VectorXd::Zero(static_cast<Eigen::Index>(obj.dim));
  std::vector<PenaltyTerm> penalties;
  for (std::size_t e : problem_.graph.incident(node)) {
    const MatrixXd& a = own_matrix(node, e);
    const std::size_t m = other_node(node, e);
    // First gathering term: incoming dual lambda_{m|node}.
    linear += a.transpose() * state_.duals[e][1 - slot(node, e)];
    penalties.push_back({a, problem_.constraints[e].b - other_matrix(node, e) * state_.x[m]});
  }
  if (const auto* q = std::get_if<QuadraticObjective>(&obj.form)) {
    VectorXd rhs = q->q + linear;
    for (const auto& t : penalties) rhs += rho * t.matrix.transpose() * t.target;
    return normal_factors_[node].solve(rhs);
  }
  VectorXd x = std::get<LocalMinimizer>(obj.form)(LocalSubproblem{linear, rho, std::move(penalties)});
  if (x.size() != static_cast<Eigen::Index>(obj.dim)) {
    throw SolverError("pdmm: local minimizer of node " + std::to_string(node) + " returned wrong dimension");
  }
  return x;
}

VectorXd Solver::lambda_update(std::size_t node, std::size_t edge, const VectorXd& x_new) const {
  const std::size_t m = other_node(node, edge);
  const VectorXd residual =
      problem_.constraints[edge].b - other_matrix(node, edge) * state_.x[m] - own_matrix(node, edge) * x_new;
  return state_.duals[edge][1 - slot(node, edge)] + state_.rho * residual;
}

void Solver::iterate_sync() {
  const auto& g = problem_.graph;
  std::vector<VectorXd> next_x(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i) next_x[i] = x_update(i);

  auto next_duals = state_.duals;
  for (std::size_t e = 0; e < g.edges().size(); ++e) {
    const auto [i, j] = g.edges()[e];
    next_duals[e][0] = lambda_update(i, e, next_x[i]);
    next_duals[e][1] = lambda_update(j, e, next_x[j]);
  }
  state_.x = std::move(next_x);
  state_.duals = std::move(next_duals);
  ++state_.iteration;
  push_history();
  if (options_.record_trajectory) {
    trajectory_.x.push_back(state_.x);
    trajectory_.duals.push_back(state_.duals);
  }
}

void Solver::run_sync(std::size_t iterations) {
  for (std::size_t k = 0; k < iterations; ++k) iterate_sync();
}

std::size_t Solver::iterate_async(std::mt19937_64& rng) {
  const std::size_t n = problem_.graph.node_count();
  if (n == 0) return 0;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const std::size_t node = pick(rng);
  VectorXd x_new = x_update(node);
  std::vector<std::pair<std::size_t, VectorXd>> updated;
  for (std::size_t e : problem_.graph.incident(node)) updated.emplace_back(e, lambda_update(node, e, x_new));
  state_.x[node] = std::move(x_new);
  for (auto& [e, lam] : updated) state_.duals[e][slot(node, e)] = std::move(lam);
  ++state_.iteration;
  push_history();
  return node;
}

ResidualReport Solver::primal_residual() const {
  ResidualReport report;
  const auto& g = problem_.graph;
  for (std::size_t e = 0; e < g.edges().size(); ++e) {
    const auto [i, j] = g.edges()[e];
    const auto& c = problem_.constraints[e];
    const double r = (c.a_ij * state_.x[i] + c.a_ji * state_.x[j] - c.b).norm();
    report.per_edge.push_back(r);
    report.max = std::max(report.max, r);
  }
  return report;
}

void Solver::push_history() {
  state_.residual_history.push_back(primal_residual().max);
  while (state_.residual_history.size() > options_.residual_history_cap) state_.residual_history.pop_front();
}

// ---- dual history -----------------------------------------------------------

double lambda_history_check(const Problem& problem, double rho, const Trajectory& trajectory, std::size_t k) {
  if (k % 2 != 0) throw PreconditionError("lambda_history_check: k must be even, got " + std::to_string(k));
  if (k >= trajectory.x.size() || k >= trajectory.duals.size()) {
    throw IndexError("lambda_history_check: trajectory has no iteration " + std::to_string(k));
  }
  const auto& edges = problem.graph.edges();
  double worst = 0.0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& c = problem.constraints[e];
    // Holder j of lambda_{j|i}; i is the sender whose x appears at odd steps.
    for (int holder_slot = 0; holder_slot < 2; ++holder_slot) {
      const std::size_t j = holder_slot == 0 ? edges[e].i : edges[e].j;
      const std::size_t i = holder_slot == 0 ? edges[e].j : edges[e].i;
      const MatrixXd& a_j = holder_slot == 0 ? c.a_ij : c.a_ji;
      const MatrixXd& a_i = holder_slot == 0 ? c.a_ji : c.a_ij;
      VectorXd rebuilt = trajectory.duals[0][e][holder_slot];
      for (std::size_t m = 1; m <= k / 2; ++m) {
        const auto& x_even_prev = trajectory.x[2 * m - 2];
        const auto& x_odd = trajectory.x[2 * m - 1];
        const auto& x_even = trajectory.x[2 * m];
        rebuilt += rho * (c.b - a_j * x_even_prev[j] - a_i * x_odd[i]);
        rebuilt += rho * (c.b - a_i * x_odd[i] - a_j * x_even[j]);
      }
      worst = std::max(worst, (rebuilt - trajectory.duals[k][e][holder_slot]).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double max_distance(std::span<const VectorXd> a, std::span<const VectorXd> b) {
  if (a.size() != b.size()) throw DimensionError("max_distance: node count mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) throw DimensionError("max_distance: dimension mismatch at node " + std::to_string(i));
    if (a[i].size() > 0) d = std::max(d, (a[i] - b[i]).cwiseAbs().maxCoeff());
  }
  return d;
}

}  // namespace axlab::pdmm
