#include <Eigen/QR>

#include "axlab/pdmm.hpp"

namespace axlab::pdmm {

OracleSolution centralized_oracle(const Problem& problem) {
  problem.validate();
  const auto& g = problem.graph;
  const std::size_t n = g.node_count();

  std::vector<Eigen::Index> x_offset(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::holds_alternative<QuadraticObjective>(problem.objectives[i].form)) {
      throw SolverError("oracle: node " + std::to_string(i) + " does not have a quadratic objective");
    }
    x_offset[i + 1] = x_offset[i] + static_cast<Eigen::Index>(problem.objectives[i].dim);
  }
  std::vector<Eigen::Index> c_offset(g.edges().size() + 1, 0);
  for (std::size_t e = 0; e < g.edges().size(); ++e) c_offset[e + 1] = c_offset[e] + problem.constraints[e].b.size();

  const Eigen::Index nx = x_offset[n];
  const Eigen::Index nc = c_offset.back();
  MatrixXd p = MatrixXd::Zero(nx, nx);
  VectorXd q(nx);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& obj = std::get<QuadraticObjective>(problem.objectives[i].form);
    const auto d = static_cast<Eigen::Index>(problem.objectives[i].dim);
    p.block(x_offset[i], x_offset[i], d, d) = obj.p;
    q.segment(x_offset[i], d) = obj.q;
  }
  MatrixXd a = MatrixXd::Zero(nc, nx);
  VectorXd b(nc);
  for (std::size_t e = 0; e < g.edges().size(); ++e) {
    const auto [i, j] = g.edges()[e];
    const auto& c = problem.constraints[e];
    a.block(c_offset[e], x_offset[i], c.b.size(), c.a_ij.cols()) = c.a_ij;
    a.block(c_offset[e], x_offset[j], c.b.size(), c.a_ji.cols()) = c.a_ji;
    b.segment(c_offset[e], c.b.size()) = c.b;
  }

  // [P  -A^T] [x ]   [q]
  // [A   0  ] [nu] = [b]
  MatrixXd kkt = MatrixXd::Zero(nx + nc, nx + nc);
  kkt.topLeftCorner(nx, nx) = p;
  kkt.topRightCorner(nx, nc) = -a.transpose();
  kkt.bottomLeftCorner(nc, nx) = a;
  VectorXd rhs(nx + nc);
  rhs << q, b;

  Eigen::CompleteOrthogonalDecomposition<MatrixXd> kkt_solver(kkt);
  const Eigen::Index constraint_rank = nc == 0 ? 0 : Eigen::ColPivHouseholderQR<MatrixXd>(a).rank();
  if (kkt_solver.rank() != nx + constraint_rank) {
    throw SolverError("oracle: KKT system is singular (the optimum is not unique)");
  }
  const VectorXd sol = kkt_solver.solve(rhs);
  if ((kkt * sol - rhs).norm() > 1e-9 * (1.0 + rhs.norm())) {
    throw SolverError("oracle: KKT system is inconsistent (constraints are infeasible)");
  }

  OracleSolution out;
  for (std::size_t i = 0; i < n; ++i) {
    out.x.push_back(sol.segment(x_offset[i], x_offset[i + 1] - x_offset[i]));
  }
  for (std::size_t e = 0; e < g.edges().size(); ++e) {
    out.multipliers.push_back(sol.segment(nx + c_offset[e], c_offset[e + 1] - c_offset[e]));
  }
  return out;
}

PdmmState state_from_oracle(const Problem& problem, const OracleSolution& solution, double rho) {
  if (solution.multipliers.size() != problem.constraints.size()) {
    throw DimensionError("state_from_oracle: multiplier count does not match edges");
  }
  PdmmState s;
  s.rho = rho;
  s.x = solution.x;
  for (const auto& nu : solution.multipliers) s.duals.push_back({nu, nu});
  return s;
}

}  // namespace axlab::pdmm
