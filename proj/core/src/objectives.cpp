#include "xmixup/objectives.hpp"

#include <cmath>
#include <stdexcept>

#include "xmixup/log.hpp"

namespace xmixup {

namespace {

double floored_log(double p) {
  if (p < kProbFloor) {
    log::debug("probability {} clamped to floor {}", p, kProbFloor);
    return std::log(kProbFloor);
  }
  return std::log(p);
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("total_loss: alpha must lie in [0, 1]");
}

}  // namespace

double classification_loss(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size() || p.empty()) throw std::invalid_argument("classification_loss: size mismatch");
  double loss = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (y[j] != 0.0) loss -= y[j] * floored_log(p[j]);
  }
  return loss;
}

Var classification_loss(Var p, const Tensor& y) {
  if (p.value().size() != y.size()) throw std::invalid_argument("classification_loss: size mismatch");
  Tensor target = Tensor::matrix(p.rows(), p.cols(), y.storage());
  return scale(sum(mul(p.tape->constant(std::move(target)), log_clamped(p, kProbFloor))), -1.0);
}

double token_level_loss(const Tensor& p, const Tensor& y, std::span<const std::uint8_t> mask) {
  if (p.rows() != y.rows() || p.cols() != y.cols()) throw std::invalid_argument("token_level_loss: shape mismatch");
  if (!mask.empty() && mask.size() != p.rows()) throw std::invalid_argument("token_level_loss: mask length");
  const std::size_t c = p.cols();
  double loss = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    loss += classification_loss(p.data().subspan(i * c, c), y.data().subspan(i * c, c));
  }
  return loss;
}

Var token_level_loss(Var p, const Tensor& y, std::span<const std::uint8_t> mask) {
  const std::size_t rows = p.rows(), c = p.cols();
  if (y.rows() != rows || y.cols() != c) throw std::invalid_argument("token_level_loss: shape mismatch");
  if (!mask.empty() && mask.size() != rows) throw std::invalid_argument("token_level_loss: mask length");
  Tensor target = Tensor::matrix(rows, c, y.storage());
  for (std::size_t i = 0; i < rows; ++i) {
    if (!mask.empty() && !mask[i]) {
      for (std::size_t j = 0; j < c; ++j) target[i * c + j] = 0.0;
    }
  }
  return scale(sum(mul(p.tape->constant(std::move(target)), log_clamped(p, kProbFloor))), -1.0);
}

Tensor pseudo_labels(const Tensor& source_probs) {
  const std::size_t c = source_probs.cols();
  for (std::size_t i = 0; i < source_probs.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += source_probs[i * c + j];
    if (std::abs(s - 1.0) > 1e-6) {
      throw std::invalid_argument("pseudo_labels: row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
  return Tensor::matrix(source_probs.rows(), c, source_probs.storage());
}

Var pseudo_labels(Var source_probs) { return source_probs.tape->constant(pseudo_labels(source_probs.value())); }

std::pair<double, double> consistency_loss(std::span<const double> r_s, std::span<const double> r_t,
                                           std::optional<std::span<const double>> p_s,
                                           std::optional<std::span<const double>> p_t, TaskKind kind) {
  if (r_s.size() != r_t.size() || r_s.empty()) throw std::invalid_argument("consistency_loss: dimension mismatch");
  const bool has_probs = p_s.has_value() && p_t.has_value();
  if ((kind == TaskKind::classification) != has_probs) {
    throw std::invalid_argument("consistency_loss: predictions required exactly for classification");
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < r_s.size(); ++i) mse += (r_s[i] - r_t[i]) * (r_s[i] - r_t[i]);
  mse /= static_cast<double>(r_s.size());
  double kl = 0.0;
  if (has_probs) {
    if (p_s->size() != p_t->size()) throw std::invalid_argument("consistency_loss: prediction size mismatch");
    for (std::size_t j = 0; j < p_s->size(); ++j) {
      const double a = (*p_s)[j];
      if (a > 0.0) kl += a * (floored_log(a) - floored_log((*p_t)[j]));
    }
  }
  return {mse, kl};
}

Var mse_loss(Var r_s, Var r_t) {
  if (r_s.value().size() != r_t.value().size()) throw std::invalid_argument("mse_loss: dimension mismatch");
  Var diff = sub(r_s, r_t);
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(diff.value().size()));
}

Var kl_divergence(Var p_s, Var p_t) {
  if (p_s.value().size() != p_t.value().size()) throw std::invalid_argument("kl_divergence: size mismatch");
  return sum(mul(p_s, sub(log_clamped(p_s, kProbFloor), log_clamped(p_t, kProbFloor))));
}

LossBreakdown total_loss(double task_s, double task_t, double mse, double kl, double alpha, TaskKind kind) {
  check_alpha(alpha);
  LossBreakdown b;
  b.alpha = alpha;
  b.task_s = task_s;
  b.task_t = task_t;
  b.mse = mse;
  b.kl = kind == TaskKind::classification ? kl : 0.0;
  b.total = alpha * task_s + (1.0 - alpha) * task_t + b.mse + b.kl;
  return b;
}

Var total_loss(const TapedLossParts& parts, double alpha) {
  check_alpha(alpha);
  Var total = add(scale(parts.task_s, alpha), scale(parts.task_t, 1.0 - alpha));
  if (parts.mse) total = add(total, *parts.mse);
  if (parts.kl) total = add(total, *parts.kl);
  return total;
}

LossBreakdown breakdown(const TapedLossParts& parts, double alpha, TaskKind kind) {
  return total_loss(parts.task_s.item(), parts.task_t.item(), parts.mse ? parts.mse->item() : 0.0,
                    parts.kl ? parts.kl->item() : 0.0, alpha, kind);
}

}  // namespace xmixup
