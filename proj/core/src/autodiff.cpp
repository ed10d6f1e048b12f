#include "xmixup/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace xmixup {

const Tensor& Var::value() const { return tape->node(id).value; }

Var Tape::param(std::string name, Tensor value) {
  for (auto id : params_) {
    if (nodes_[id].name == name) throw std::invalid_argument("parameter recorded twice: " + name);
  }
  Node n;
  n.op = "param";
  n.value = std::move(value);
  n.name = std::move(name);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  params_.push_back(nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (auto in : inputs) {
    if (in >= nodes_.size()) throw std::logic_error("tape record references a later node");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  auto& g = nodes_[id].grad;
  if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
  return g;
}

Tensor Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return Tensor(n.value.shape(), n.grad);
}

ParamMap backward(Tape& tape, Var loss) {
  if (loss.tape != &tape) throw std::invalid_argument("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_string(loss.value().shape()));
  }
  for (std::size_t i = 0; i < tape.size(); ++i) tape.node(i).grad.clear();
  if (tape.needs_grad(loss.id)) {
    tape.grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = tape.node(i);
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(tape, i);
    }
  }
  ParamMap out;
  for (auto id : tape.params()) {
    const auto& n = tape.node(id);
    out.emplace(n.name, n.grad.empty() ? Tensor(n.value.shape(), 0.0) : Tensor(n.value.shape(), n.grad));
  }
  return out;
}

ParamMap finite_diff_grad(const std::function<double(const ParamMap&)>& f, const ParamMap& theta,
                          double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  ParamMap work = theta;
  ParamMap out;
  for (auto& [name, t] : work) {
    Tensor g(t.shape(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + h;
      const double up = f(work);
      t[i] = orig - h;
      const double down = f(work);
      t[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::runtime_error("finite_diff_grad: non-finite evaluation at " + name + "[" +
                                 std::to_string(i) + "]");
      }
      g[i] = (up - down) / (2.0 * h);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

double max_relative_error(const ParamMap& analytic, const ParamMap& numeric, double floor) {
  double worst = 0.0;
  for (const auto& [name, a] : analytic) {
    auto it = numeric.find(name);
    if (it == numeric.end()) throw std::invalid_argument("max_relative_error: missing " + name);
    const auto& b = it->second;
    if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: size mismatch for " + name);
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
      worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& m, std::span<const std::uint8_t> key_mask) {
  if (!m.all_finite()) throw std::invalid_argument("softmax_rows: non-finite input");
  const std::size_t rows = m.rows(), cols = m.cols();
  if (!key_mask.empty() && key_mask.size() != cols) {
    throw std::invalid_argument("softmax_rows: mask length does not match columns");
  }
  auto valid = [&](std::size_t j) { return key_mask.empty() || key_mask[j] != 0; };
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &m.storage()[r * cols];
    double* y = &out.storage()[r * cols];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (valid(j)) mx = std::max(mx, x[j]);
    }
    if (!std::isfinite(mx)) throw std::invalid_argument("softmax_rows: no attendable position");
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = valid(j) ? std::exp(x[j] - mx) : 0.0;
      total += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= total;
  }
  return out;
}

Tensor layer_norm(const Tensor& h, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t rows = h.rows(), d = h.cols();
  if (d < 2) throw std::invalid_argument("layer_norm: feature dimension must be at least 2");
  if (gain.size() != d || bias.size() != d) throw std::invalid_argument("layer_norm: gain/bias size mismatch");
  Tensor out(h.shape(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &h.storage()[r * d];
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = gain[j] * (x[j] - mean) * inv + bias[j];
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void accumulate(Tape& t, std::size_t id, const std::vector<double>& g, double c = 1.0) {
  if (!t.needs_grad(id)) return;
  auto& dst = t.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += c * g[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_string(A.shape()) + " x " +
                                shape_string(B.shape()));
  }
  Tensor C = Tensor::matrix(m, n);
  const double* pa = A.storage().data();
  const double* pb = B.storage().data();
  double* pc = C.storage().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record("matmul", std::move(C), {ia, ib}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    const auto& Av = t.node(ia).value.storage();
    const auto& Bv = t.node(ib).value.storage();
    if (t.needs_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * Bv[p * n + j];
          ga[i * k + p] += s;
        }
      }
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = Av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor T = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) T[j * m + i] = A[i * n + j];
  const std::size_t ia = a.id;
  return a.tape->record("transpose", std::move(T), {ia}, [ia, m, n](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = Tensor::matrix(a.rows(), a.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record("add", std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = Tensor::matrix(a.rows(), a.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record("sub", std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    accumulate(t, ia, g);
    accumulate(t, ib, g, -1.0);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = Tensor::matrix(a.rows(), a.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record("mul", std::move(y), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    if (t.needs_grad(ia)) {
      const auto& bv = t.node(ib).value.storage();
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      const auto& av = t.node(ia).value.storage();
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) { return affine(a, c, 0.0); }

Var affine(Var a, double c, double shift) {
  const Tensor& x = a.value();
  Tensor y = Tensor::matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = c * x[i] + shift;
  const std::size_t ia = a.id;
  return a.tape->record("affine", std::move(y), {ia}, [ia, c](Tape& t, std::size_t self) {
    accumulate(t, ia, t.node(self).grad, c);
  });
}

Var scale_by(Var a, Var s) {
  same_tape(a, s, "scale_by");
  if (s.value().size() != 1) throw std::invalid_argument("scale_by: scale must be 1x1");
  const double sv = s.item();
  const Tensor& x = a.value();
  Tensor y = Tensor::matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = sv * x[i];
  const std::size_t ia = a.id, is = s.id;
  return a.tape->record("scale_by", std::move(y), {ia, is}, [ia, is](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    const double sv = t.node(is).value[0];
    if (t.needs_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sv * g[i];
    }
    if (t.needs_grad(is)) {
      const auto& av = t.node(ia).value.storage();
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      t.grad_buffer(is)[0] += acc;
    }
  });
}

Var add_row(Var a, Var bias) {
  same_tape(a, bias, "add_row");
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.value().size() != n) throw std::invalid_argument("add_row: bias length mismatch");
  Tensor y = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i * n + j] + bias.value()[j];
  const std::size_t ia = a.id, ib = bias.id;
  return a.tape->record("add_row", std::move(y), {ia, ib}, [ia, ib, m, n](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    accumulate(t, ia, g);
    if (t.needs_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
  const Tensor& x = a.value();
  Tensor y = Tensor::matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  const std::size_t ia = a.id;
  return a.tape->record("gelu", std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    const auto& xv = t.node(ia).value.storage();
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      ga[i] += g[i] * d;
    }
  });
}

Var sigmoid(Var a) {
  const Tensor& x = a.value();
  Tensor y = Tensor::matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x[i];
    if (v >= 0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  const std::size_t ia = a.id;
  return a.tape->record("sigmoid", std::move(y), {ia}, [ia](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double s = n.value[i];
      ga[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Var log_clamped(Var a, double floor) {
  const Tensor& x = a.value();
  Tensor y = Tensor::matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(std::max(x[i], floor));
  const std::size_t ia = a.id;
  return a.tape->record("log", std::move(y), {ia}, [ia, floor](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    const auto& xv = t.node(ia).value.storage();
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > floor) ga[i] += g[i] / xv[i];
    }
  });
}

Var softmax_rows(Var a, std::span<const std::uint8_t> key_mask) {
  Tensor y = softmax_rows(a.value(), key_mask);
  const std::size_t ia = a.id, rows = y.rows(), cols = y.cols();
  return a.tape->record("softmax", std::move(y), {ia}, [ia, rows, cols](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = &n.value.storage()[r * cols];
      const double* g = &n.grad[r * cols];
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += y[j] * (g[j] - dot);
    }
  });
}

Var layer_norm(Var h, Var gain, Var bias, double eps) {
  same_tape(h, gain, "layer_norm");
  same_tape(h, bias, "layer_norm");
  const Tensor& x = h.value();
  const std::size_t rows = x.rows(), d = x.cols();
  Tensor y = layer_norm(x, gain.value(), bias.value(), eps);
  // Saved per-row statistics for the backward pass.
  std::vector<double> xhat(x.size()), inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[r * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[r * d + j] - mean) * (x[r * d + j] - mean);
    var /= static_cast<double>(d);
    inv[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) xhat[r * d + j] = (x[r * d + j] - mean) * inv[r];
  }
  const std::size_t ih = h.id, ig = gain.id, ib = bias.id;
  return h.tape->record(
      "layer_norm", std::move(y), {ih, ig, ib},
      [ih, ig, ib, rows, d, xhat = std::move(xhat), inv = std::move(inv)](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        const auto& gv = t.node(ig).value.storage();
        if (t.needs_grad(ig)) {
          auto& gg = t.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        }
        if (t.needs_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
        if (t.needs_grad(ih)) {
          auto& gx = t.grad_buffer(ih);
          const double dd = static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dx = g[r * d + j] * gv[j];
              s1 += dx;
              s2 += dx * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double dx = g[r * d + j] * gv[j];
              gx[r * d + j] += inv[r] / dd * (dd * dx - s1 - xhat[r * d + j] * s2);
            }
          }
        }
      });
}

Var embed(Var table, std::span<const int> ids) {
  const Tensor& E = table.value();
  const std::size_t vocab = E.rows(), d = E.cols();
  if (ids.empty()) throw std::invalid_argument("embed: empty id sequence");
  Tensor y = Tensor::matrix(ids.size(), d);
  std::vector<std::size_t> rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("token id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                              std::to_string(vocab));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
    std::copy_n(&E.storage()[rows[i] * d], d, &y.storage()[i * d]);
  }
  const std::size_t it = table.id;
  return table.tape->record("embed", std::move(y), {it}, [it, d, rows = std::move(rows)](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    auto& gt = t.grad_buffer(it);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[rows[i] * d + j] += g[i * d + j];
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || start + count > n) throw std::invalid_argument("slice_cols: range out of bounds");
  Tensor y = Tensor::matrix(m, count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) y[i * count + j] = x[i * n + start + j];
  const std::size_t ia = a.id;
  return a.tape->record("slice_cols", std::move(y), {ia}, [ia, m, n, start, count](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + start + j] += g[i * count + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.rows() != m) throw std::invalid_argument("concat_cols: row count mismatch");
    ids.push_back(p.id);
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor y = Tensor::matrix(m, total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) y[i * total + off + j] = p.value()[i * w + j];
    off += w;
  }
  return parts[0].tape->record("concat_cols", std::move(y), ids, [ids, widths, m, total](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t w = widths[k];
      if (t.needs_grad(ids[k])) {
        auto& gk = t.grad_buffer(ids[k]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) gk[i * w + j] += g[i * total + off + j];
      }
      off += w;
    }
  });
}

Var masked_mean_rows(Var h, std::span<const std::uint8_t> mask) {
  const Tensor& x = h.value();
  const std::size_t m = x.rows(), n = x.cols();
  if (!mask.empty() && mask.size() != m) throw std::invalid_argument("masked_mean_rows: mask length mismatch");
  std::vector<std::uint8_t> keep(m, 1);
  if (!mask.empty()) keep.assign(mask.begin(), mask.end());
  std::size_t count = 0;
  for (auto k : keep) count += k ? 1 : 0;
  if (count == 0) throw std::invalid_argument("masked_mean_rows: all positions masked");
  const double w = 1.0 / static_cast<double>(count);
  Tensor y = Tensor::matrix(1, n);
  for (std::size_t i = 0; i < m; ++i) {
    if (!keep[i]) continue;
    for (std::size_t j = 0; j < n; ++j) y[j] += x[i * n + j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] *= w;
  const std::size_t ih = h.id;
  return h.tape->record("masked_mean_rows", std::move(y), {ih}, [ih, m, n, w, keep = std::move(keep)](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    auto& gh = t.grad_buffer(ih);
    for (std::size_t i = 0; i < m; ++i) {
      if (!keep[i]) continue;
      for (std::size_t j = 0; j < n; ++j) gh[i * n + j] += w * g[j];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  const std::size_t ia = a.id;
  return a.tape->record("sum", Tensor::scalar(s), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.node(self).grad[0];
    auto& ga = t.grad_buffer(ia);
    for (auto& v : ga) v += g;
  });
}

Var detach(Var a) { return a.tape->constant(a.value()); }

}  // namespace xmixup
