#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "axlab/pdmm.hpp"

namespace axlab::pdmm {

namespace {

class LineReader {
 public:
  LineReader(const std::string& line, std::size_t number) : in_(line), number_(number) {}

  std::string word(const char* what) {
    std::string w;
    if (!(in_ >> w)) throw ParseError(number_, std::string("missing ") + what);
    return w;
  }

  std::size_t count(const char* what) {
    const std::string w = word(what);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size()) {
      throw ParseError(number_, std::string("malformed ") + what + " '" + w + "'");
    }
    return v;
  }

  double real(const char* what) {
    const std::string w = word(what);
    std::istringstream s(w);
    double v = 0.0;
    if (!(s >> v) || !s.eof() || !std::isfinite(v)) {
      throw ParseError(number_, std::string("malformed ") + what + " '" + w + "'");
    }
    return v;
  }

  MatrixXd matrix(std::size_t rows, std::size_t cols, const char* what) {
    MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = real(what);
    return m;
  }

  void finish() {
    std::string extra;
    if (in_ >> extra) throw ParseError(number_, "unexpected trailing value '" + extra + "'");
  }

  std::string remainder() {
    std::string rest;
    std::getline(in_, rest);
    return rest;
  }

 private:
  std::istringstream in_;
  std::size_t number_;
};

struct PendingEdge {
  std::size_t line;
  std::size_t i, j, p;
  std::string rest;
};

}  // namespace

Problem read_problem(std::istream& in) {
  std::map<std::size_t, VectorXd> nodes;
  std::vector<PendingEdge> pending;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    LineReader r(line, number);
    const std::string kind = r.word("record kind");
    if (kind == "node") {
      const std::size_t id = r.count("node id");
      const std::size_t dim = r.count("dimension");
      if (r.word("objective kind") != "quadratic") throw ParseError(number, "only 'quadratic' objectives are supported");
      VectorXd a(static_cast<Eigen::Index>(dim));
      for (std::size_t k = 0; k < dim; ++k) a(static_cast<Eigen::Index>(k)) = r.real("node value");
      r.finish();
      if (!nodes.emplace(id, a).second) throw ParseError(number, "duplicate node " + std::to_string(id));
    } else if (kind == "edge") {
      PendingEdge e{number, 0, 0, 0, {}};
      e.i = r.count("edge endpoint");
      e.j = r.count("edge endpoint");
      e.p = r.count("constraint rows");
      e.rest = r.remainder();
      pending.push_back(std::move(e));
    } else {
      throw ParseError(number, "unknown record '" + kind + "'");
    }
  }

  const std::size_t n = nodes.size();
  std::vector<NodeObjective> objectives;
  for (std::size_t id = 0; id < n; ++id) {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw ParseError(number, "node ids must be 0.." + std::to_string(n - 1));
    objectives.push_back(NodeObjective::centered(it->second));
  }

  std::vector<Edge> edges;
  std::vector<EdgeConstraint> constraints;
  for (const auto& pe : pending) {
    if (pe.i >= n || pe.j >= n) throw ParseError(pe.line, "edge references an undefined node");
    LineReader r(pe.rest, pe.line);
    EdgeConstraint c;
    c.a_ij = r.matrix(pe.p, objectives[pe.i].dim, "A_ij entry");
    c.a_ji = r.matrix(pe.p, objectives[pe.j].dim, "A_ji entry");
    c.b = r.matrix(pe.p, 1, "b entry");
    r.finish();
    edges.push_back({pe.i, pe.j});
    constraints.push_back(std::move(c));
  }

  Problem problem;
  try {
    problem.graph = Graph(n, std::move(edges));
  } catch (const std::exception& e) {
    throw ParseError(number, e.what());
  }
  problem.objectives = std::move(objectives);
  problem.constraints = std::move(constraints);
  problem.validate();
  return problem;
}

Problem load_problem(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open problem file " + path.string());
  return read_problem(in);
}

void write_problem(std::ostream& out, const Problem& problem) {
  problem.validate();
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < problem.objectives.size(); ++i) {
    const auto* q = std::get_if<QuadraticObjective>(&problem.objectives[i].form);
    if (q == nullptr || !q->is_centered()) {
      throw PreconditionError("write_problem: node " + std::to_string(i) + " is not a centered quadratic");
    }
    out << "node " << i << ' ' << problem.objectives[i].dim << " quadratic";
    for (Eigen::Index k = 0; k < q->q.size(); ++k) out << ' ' << q->q(k);
    out << '\n';
  }
  for (std::size_t e = 0; e < problem.constraints.size(); ++e) {
    const auto [i, j] = problem.graph.edges()[e];
    const auto& c = problem.constraints[e];
    out << "edge " << i << ' ' << j << ' ' << c.b.size();
    for (const MatrixXd* m : {&c.a_ij, &c.a_ji})
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        for (Eigen::Index col = 0; col < m->cols(); ++col) out << ' ' << (*m)(r, col);
    for (Eigen::Index k = 0; k < c.b.size(); ++k) out << ' ' << c.b(k);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace axlab::pdmm
