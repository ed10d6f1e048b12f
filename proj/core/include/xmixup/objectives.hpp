#pragma once

#include <optional>
#include <span>
#include <utility>

#include "xmixup/autodiff.hpp"
#include "xmixup/encoder.hpp"

namespace xmixup {

/// Floor applied inside every log of a probability.
inline constexpr double kProbFloor = 1e-12;

struct LossBreakdown {
  double task_s = 0.0;
  double task_t = 0.0;
  double mse = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double alpha = 0.0;
};

/// -sum_j y_j log p_j.
double classification_loss(std::span<const double> p, std::span<const double> y);
Var classification_loss(Var p, const Tensor& y);

/// Sum of per-token cross-entropies over rows with mask == 1.
double token_level_loss(const Tensor& p, const Tensor& y, std::span<const std::uint8_t> mask);
Var token_level_loss(Var p, const Tensor& y, std::span<const std::uint8_t> mask);

/// Source-head distributions used as soft targets for the target stream.
/// Throws if a row does not sum to one within 1e-6.
Tensor pseudo_labels(const Tensor& source_probs);
/// Taped variant: the returned constant carries no gradient path back to
/// the source head.
Var pseudo_labels(Var source_probs);

/// Mean squared error between representations; KL(p_S || p_T) for
/// classification, zero otherwise.
std::pair<double, double> consistency_loss(std::span<const double> r_s, std::span<const double> r_t,
                                           std::optional<std::span<const double>> p_s,
                                           std::optional<std::span<const double>> p_t, TaskKind kind);

Var mse_loss(Var r_s, Var r_t);
Var kl_divergence(Var p_s, Var p_t);

/// alpha * task_S + (1 - alpha) * task_T + mse + kl.
LossBreakdown total_loss(double task_s, double task_t, double mse, double kl, double alpha, TaskKind kind);

struct TapedLossParts {
  Var task_s;
  Var task_t;
  std::optional<Var> mse;
  std::optional<Var> kl;
};

/// Same combination on the tape, evaluated in the same order as total_loss.
Var total_loss(const TapedLossParts& parts, double alpha);

/// Values of a taped combination.
LossBreakdown breakdown(const TapedLossParts& parts, double alpha, TaskKind kind);

}  // namespace xmixup
