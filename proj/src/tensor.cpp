#include "axlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace axlab {

using detail::NodePtr;
using detail::TensorNode;

namespace {

NodePtr make_node(std::size_t rows, std::size_t cols) {
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, 0.0);
  return n;
}

std::string shape_of(const Tensor& t) { return t.shape_string(); }

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_of(a) + " and " + shape_of(b));
}

/// The tape shared by every participating input, or nullptr when none participates.
Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->tracked()) continue;
    if (tape != nullptr && t->tape() != tape) {
      throw UntrackedError("operands are recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

bool needs_grad(const NodePtr& n) { return !n->grad.empty(); }

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor() : node_(make_node(0, 0)) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) : node_(make_node(rows, cols)) {
  std::fill(node_->value.begin(), node_->value.end(), fill);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values) : node_(make_node(0, 0)) {
  if (values.size() != rows * cols) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  node_->rows = rows;
  node_->cols = cols;
  node_->value = std::move(values);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t.node_->value[i * n + i] = 1.0;
  return t;
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, v); }

std::string Tensor::shape_string() const {
  return std::to_string(rows()) + "x" + std::to_string(cols());
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) {
    throw IndexError("index (" + std::to_string(r) + "," + std::to_string(c) + ") outside " + shape_string());
  }
  return (*this)(r, c);
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string());
  return node_->value[0];
}

Tensor Tensor::row(std::size_t r) const {
  if (r >= rows()) throw IndexError("row " + std::to_string(r) + " outside " + shape_string());
  auto first = node_->value.begin() + static_cast<std::ptrdiff_t>(r * cols());
  return Tensor(1, cols(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(cols())));
}

Tensor Tensor::detach() const { return Tensor(rows(), cols(), node_->value); }

Tensor Tensor::grad_tensor() const {
  if (!has_grad()) return Tensor(rows(), cols());
  return Tensor(rows(), cols(), node_->grad);
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

// ---- Tape -------------------------------------------------------------------

Tape::~Tape() {
  clear();
  for (auto& weak : leaves_) {
    if (auto leaf = weak.lock(); leaf && leaf->tape == this) {
      leaf->tape = nullptr;
      leaf->grad.clear();
    }
  }
}

Tensor Tape::watch(Tensor t) {
  const auto& n = t.node();
  if (n->tape == this) return t;
  if (n->tape != nullptr) throw UntrackedError("tensor is already recorded on another tape");
  n->tape = this;
  n->op_index = 0;
  n->grad.assign(n->value.size(), 0.0);
  leaves_.push_back(n);
  return t;
}

void Tape::record(const NodePtr& output, BackwardFn fn) {
  output->tape = this;
  output->grad.assign(output->value.size(), 0.0);
  output->op_index = ops_.size() + 1;
  ops_.push_back(Op{output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  const auto& ln = loss.node();
  if (ln->tape != this) throw UntrackedError("backward: loss is not recorded on this tape");
  if (loss.size() != 1) throw DimensionError("backward: loss must be 1x1, got " + loss.shape_string());

  const std::size_t end = ln->op_index;
  for (std::size_t i = 0; i < end; ++i) {
    auto& g = ops_[i].output->grad;
    std::fill(g.begin(), g.end(), 0.0);
  }
  if (end == 0) {
    ln->grad[0] += 1.0;
    return;
  }
  ln->grad[0] = 1.0;
  for (std::size_t i = end; i-- > 0;) ops_[i].backward();
}

void Tape::zero_grad() {
  for (auto& weak : leaves_) {
    if (auto leaf = weak.lock(); leaf && leaf->tape == this) {
      std::fill(leaf->grad.begin(), leaf->grad.end(), 0.0);
    }
  }
}

void Tape::clear() {
  for (auto& op : ops_) {
    op.output->tape = nullptr;
    op.output->grad.clear();
    op.output->op_index = 0;
  }
  ops_.clear();
  std::erase_if(leaves_, [](const auto& w) { return w.expired(); });
}

// ---- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  auto out = make_node(n, m);
  const auto& A = a.node()->value;
  const auto& B = b.node()->value;
  auto& C = out->value;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) C[i * m + j] += aip * B[p * m + j];
    }
  }
  if (Tape* tape = common_tape({&a, &b})) {
    tape->record(out, [an = a.node(), bn = b.node(), on = out.get(), n, k, m] {
      const auto& G = on->grad;
      if (needs_grad(an)) {
        // dA = G B^T
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += G[i * m + j] * bn->value[p * m + j];
            an->grad[i * k + p] += s;
          }
      }
      if (needs_grad(bn)) {
        // dB = A^T G
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = an->value[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) bn->grad[p * m + j] += aip * G[i * m + j];
          }
      }
    });
  }
  return Tensor(out);
}

Tensor weighted_differences(const Tensor& w, const Tensor& v) {
  if (w.rows() != w.cols() || w.cols() != v.rows()) shape_mismatch("weighted_differences", w, v);
  const std::size_t n = w.rows(), d = v.cols();
  auto out = make_node(n, d);
  const auto& W = w.node()->value;
  const auto& V = v.node()->value;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j) {
      const double wkj = W[k * n + j];
      if (j == k || wkj == 0.0) continue;
      for (std::size_t c = 0; c < d; ++c) out->value[k * d + c] += wkj * (V[k * d + c] - V[j * d + c]);
    }
  if (Tape* tape = common_tape({&w, &v})) {
    tape->record(out, [wn = w.node(), vn = v.node(), on = out.get(), n, d] {
      const auto& G = on->grad;
      const auto& W = wn->value;
      const auto& V = vn->value;
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) {
          if (j == k) continue;
          if (needs_grad(wn)) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += G[k * d + c] * (V[k * d + c] - V[j * d + c]);
            wn->grad[k * n + j] += s;
          }
          if (needs_grad(vn)) {
            const double wkj = W[k * n + j];
            for (std::size_t c = 0; c < d; ++c) {
              vn->grad[k * d + c] += wkj * G[k * d + c];
              vn->grad[j * d + c] -= wkj * G[k * d + c];
            }
          }
        }
    });
  }
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  auto out = make_node(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[j * r + i] = a(i, j);
  if (Tape* tape = common_tape({&a})) {
    tape->record(out, [an = a.node(), on = out.get(), r, c] {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += on->grad[j * r + i];
    });
  }
  return Tensor(out);
}

namespace {

template <typename Fwd, typename GradA, typename GradB>
Tensor elementwise(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, GradA ga, GradB gb) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(name, a, b);
  auto out = make_node(a.rows(), a.cols());
  const auto& A = a.node()->value;
  const auto& B = b.node()->value;
  for (std::size_t i = 0; i < A.size(); ++i) out->value[i] = fwd(A[i], B[i]);
  if (Tape* tape = common_tape({&a, &b})) {
    tape->record(out, [an = a.node(), bn = b.node(), on = out.get(), ga, gb] {
      const auto& G = on->grad;
      if (needs_grad(an))
        for (std::size_t i = 0; i < G.size(); ++i) an->grad[i] += ga(G[i], an->value[i], bn->value[i]);
      if (needs_grad(bn))
        for (std::size_t i = 0; i < G.size(); ++i) bn->grad[i] += gb(G[i], an->value[i], bn->value[i]);
    });
  }
  return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(
      "add", a, b, [](double x, double y) { return x + y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double s) {
  auto out = make_node(a.rows(), a.cols());
  const auto& A = a.node()->value;
  for (std::size_t i = 0; i < A.size(); ++i) out->value[i] = s * A[i];
  if (Tape* tape = common_tape({&a})) {
    tape->record(out, [an = a.node(), on = out.get(), s] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += s * on->grad[i];
    });
  }
  return Tensor(out);
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_mismatch("add_row", a, row);
  const std::size_t r = a.rows(), c = a.cols();
  auto out = make_node(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] = a(i, j) + row(0, j);
  if (Tape* tape = common_tape({&a, &row})) {
    tape->record(out, [an = a.node(), rn = row.node(), on = out.get(), r, c] {
      if (needs_grad(an))
        for (std::size_t i = 0; i < r * c; ++i) an->grad[i] += on->grad[i];
      if (needs_grad(rn))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) rn->grad[j] += on->grad[i * c + j];
    });
  }
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = make_node(1, 1);
  for (double v : a.values()) out->value[0] += v;
  if (Tape* tape = common_tape({&a})) {
    tape->record(out, [an = a.node(), on = out.get()] {
      for (double& g : an->grad) g += on->grad[0];
    });
  }
  return Tensor(out);
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw DimensionError("mean_rows: tensor has no rows");
  auto out = make_node(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out->value[j] += a(i, j);
  for (double& v : out->value) v /= static_cast<double>(r);
  if (Tape* tape = common_tape({&a})) {
    tape->record(out, [an = a.node(), on = out.get(), r, c] {
      const double w = 1.0 / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += w * on->grad[j];
    });
  }
  return Tensor(out);
}

Tensor gelu(const Tensor& a) {
  auto out = make_node(a.rows(), a.cols());
  const auto& A = a.node()->value;
  for (std::size_t i = 0; i < A.size(); ++i) {
    out->value[i] = 0.5 * A[i] * (1.0 + std::erf(A[i] * std::numbers::sqrt2 / 2.0));
  }
  if (Tape* tape = common_tape({&a})) {
    tape->record(out, [an = a.node(), on = out.get()] {
      const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double x = an->value[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        an->grad[i] += on->grad[i] * (cdf + x * pdf);
      }
    });
  }
  return Tensor(out);
}

namespace {

Tensor softmax_impl(const Tensor& a, const Mask* mask) {
  const std::size_t r = a.rows(), c = a.cols();
  if (mask != nullptr && (mask->rows != r || mask->cols != c)) {
    throw DimensionError("softmax_rows: mask " + std::to_string(mask->rows) + "x" + std::to_string(mask->cols) +
                         " does not match " + a.shape_string());
  }
  auto out = make_node(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    std::size_t kept = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask != nullptr && !(*mask)(i, j)) continue;
      mx = std::max(mx, a(i, j));
      ++kept;
    }
    if (kept == 0) {
      throw DegenerateRowError("softmax_rows: row " + std::to_string(i) + " has no unmasked entries");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask != nullptr && !(*mask)(i, j)) continue;
      const double e = std::exp(a(i, j) - mx);
      out->value[i * c + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < c; ++j) out->value[i * c + j] /= total;
  }
  if (Tape* tape = common_tape({&a})) {
    tape->record(out, [an = a.node(), on = out.get(), r, c] {
      const auto& Y = on->value;
      const auto& G = on->grad;
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += G[i * c + j] * Y[i * c + j];
        for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += Y[i * c + j] * (G[i * c + j] - dot);
      }
    });
  }
  return Tensor(out);
}

}  // namespace

Tensor softmax_rows(const Tensor& a) { return softmax_impl(a, nullptr); }
Tensor softmax_rows(const Tensor& a, const Mask& mask) { return softmax_impl(a, &mask); }

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t r = a.rows(), c = a.cols();
  if (gain.rows() != 1 || gain.cols() != c) shape_mismatch("layer_norm gain", a, gain);
  if (bias.rows() != 1 || bias.cols() != c) shape_mismatch("layer_norm bias", a, bias);
  auto out = make_node(r, c);
  std::vector<double> xhat(r * c);
  std::vector<double> inv_std(r);
  const double nc = static_cast<double>(c);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += a(i, j);
    mean /= nc;
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (a(i, j) - mean) * (a(i, j) - mean);
    var /= nc;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (a(i, j) - mean) * inv_std[i];
      out->value[i * c + j] = xhat[i * c + j] * gain(0, j) + bias(0, j);
    }
  }
  if (Tape* tape = common_tape({&a, &gain, &bias})) {
    tape->record(out, [an = a.node(), gn = gain.node(), bn = bias.node(), on = out.get(), xhat = std::move(xhat),
                       inv_std = std::move(inv_std), r, c, nc] {
      const auto& G = on->grad;
      for (std::size_t i = 0; i < r; ++i) {
        if (needs_grad(an)) {
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double d = G[i * c + j] * gn->value[j];
            sum_d += d;
            sum_dx += d * xhat[i * c + j];
          }
          for (std::size_t j = 0; j < c; ++j) {
            const double d = G[i * c + j] * gn->value[j];
            an->grad[i * c + j] += inv_std[i] / nc * (nc * d - sum_d - xhat[i * c + j] * sum_dx);
          }
        }
        for (std::size_t j = 0; j < c; ++j) {
          if (needs_grad(gn)) gn->grad[j] += G[i * c + j] * xhat[i * c + j];
          if (needs_grad(bn)) bn->grad[j] += G[i * c + j];
        }
      }
    });
  }
  return Tensor(out);
}

Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets) {
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r) {
    throw DimensionError("cross_entropy_logits: " + std::to_string(targets.size()) + " targets for " +
                         logits.shape_string() + " logits");
  }
  if (r == 0) throw DimensionError("cross_entropy_logits: empty batch");
  std::vector<double> probs(r * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) {
      throw IndexError("cross_entropy_logits: target " + std::to_string(targets[i]) + " at row " +
                       std::to_string(i) + " outside [0," + std::to_string(c) + ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(logits(i, j) - mx);
      total += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= total;
    loss += mx + std::log(total) - logits(i, static_cast<std::size_t>(targets[i]));
  }
  auto out = make_node(1, 1);
  out->value[0] = loss / static_cast<double>(r);
  if (Tape* tape = common_tape({&logits})) {
    std::vector<int> tgt(targets.begin(), targets.end());
    tape->record(out, [ln = logits.node(), on = out.get(), probs = std::move(probs), tgt = std::move(tgt), r, c] {
      const double g = on->grad[0] / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) ln->grad[i * c + j] += g * probs[i * c + j];
        ln->grad[i * c + static_cast<std::size_t>(tgt[i])] -= g;
      }
    });
  }
  return Tensor(out);
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor();
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) shape_mismatch("concat_cols", parts[0], p);
    c += p.cols();
  }
  auto out = make_node(r, c);
  std::size_t offset = 0;
  Tape* tape = nullptr;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out->value[i * c + offset + j] = p(i, j);
    offset += p.cols();
    if (Tape* t = common_tape({&p})) {
      if (tape != nullptr && tape != t) throw UntrackedError("operands are recorded on different tapes");
      tape = t;
    }
  }
  if (tape != nullptr) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record(out, [nodes = std::move(nodes), on = out.get(), r, c] {
      std::size_t off = 0;
      for (const auto& pn : nodes) {
        if (needs_grad(pn))
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pn->cols; ++j) pn->grad[i * pn->cols + j] += on->grad[i * c + off + j];
        off += pn->cols;
      }
    });
  }
  return Tensor(out);
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(begin + count) + ") outside " +
                     a.shape_string());
  }
  const std::size_t c = a.cols();
  auto out = make_node(count, c);
  std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>(begin * c), count * c, out->value.begin());
  if (Tape* tape = common_tape({&a})) {
    tape->record(out, [an = a.node(), on = out.get(), begin, c] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[begin * c + i] += on->grad[i];
    });
  }
  return Tensor(out);
}

Tensor gather_rows(const Tensor& table, std::span<const int> indices) {
  const std::size_t c = table.cols();
  std::vector<std::size_t> idx;
  idx.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= table.rows()) {
      throw IndexError("gather_rows: index " + std::to_string(i) + " outside table " + table.shape_string());
    }
    idx.push_back(static_cast<std::size_t>(i));
  }
  auto out = make_node(idx.size(), c);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < c; ++j) out->value[r * c + j] = table(idx[r], j);
  if (Tape* tape = common_tape({&table})) {
    tape->record(out, [tn = table.node(), on = out.get(), idx = std::move(idx), c] {
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < c; ++j) tn->grad[idx[r] * c + j] += on->grad[r * c + j];
    });
  }
  return Tensor(out);
}

// ---- oracle -----------------------------------------------------------------

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw PreconditionError("finite_diff_grad: step must be positive");
  Tensor probe = x.detach();
  Tensor g(x.rows(), x.cols());
  auto p = probe.mutable_values();
  auto out = g.mutable_values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = f(probe);
    p[i] = orig - h;
    const double fm = f(probe);
    p[i] = orig;
    out[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("relative_error: length mismatch");
  double diff = 0.0, scale_ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale_ab = std::max({scale_ab, std::abs(a[i]), std::abs(b[i])});
  }
  return scale_ab == 0.0 ? 0.0 : diff / scale_ab;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("max_abs_diff", a, b);
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

}  // namespace axlab
