#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmixup/tensor.hpp"

namespace xmixup {

/// Validity flags for sequence positions: 1 = real token, 0 = padding.
using Mask = std::vector<std::uint8_t>;

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }
};

/// Ordered record of primitive applications. Records are appended in
/// evaluation order, so every input of a record precedes it and a single
/// reverse sweep visits each record exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::string name;
    bool requires_grad = false;
  };

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf. Gradients for named leaves are returned by backward().
  Var param(std::string name, Tensor value);
  /// Leaf that receives a gradient but is not reported by name.
  Var variable(Tensor value);
  Var constant(Tensor value);

  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
             BackwardFn backward);

  const Node& node(std::size_t id) const { return nodes_[id]; }
  Node& node(std::size_t id) { return nodes_[id]; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator for a node, allocated on first use.
  std::vector<double>& grad_buffer(std::size_t id);

  /// Gradient of the last backward() pass for any node; zeros if none flowed.
  Tensor grad(Var v) const;

  /// Named parameter leaves in recording order.
  const std::vector<std::size_t>& params() const noexcept { return params_; }

 private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> params_;
};

/// Reverse sweep from a scalar loss. Returns d loss / d theta for every named
/// parameter on the tape; parameters off the loss path get zero gradients.
/// Gradients from multiple consumers of one value are summed.
ParamMap backward(Tape& tape, Var loss);

/// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h for every
/// coordinate of every parameter.
ParamMap finite_diff_grad(const std::function<double(const ParamMap&)>& f,
                          const ParamMap& theta, double h = 1e-5);

/// Max over coordinates of |a - b| / max(|a|, |b|, floor).
double max_relative_error(const ParamMap& analytic, const ParamMap& numeric,
                          double floor = 1e-5);

// ---------------------------------------------------------------------------
// Plain kernels shared by the taped ops.

/// Row-wise softmax with row-max subtraction. Columns with key_mask == 0 get
/// exactly zero weight. Throws on non-finite input or a fully masked row.
Tensor softmax_rows(const Tensor& m, std::span<const std::uint8_t> key_mask = {});

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row normalisation to zero mean / unit variance followed by gain and bias.
Tensor layer_norm(const Tensor& h, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

// ---------------------------------------------------------------------------
// Taped operations. All operands live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// c * a
Var scale(Var a, double c);
/// c * a + shift
Var affine(Var a, double c, double shift);
/// s * a where s is a 1x1 value on the tape.
Var scale_by(Var a, Var s);
/// Adds a length-cols bias to every row.
Var add_row(Var a, Var bias);
/// tanh-approximated GELU.
Var gelu(Var a);
Var sigmoid(Var a);
/// log(max(a, floor)); the clamped branch has zero derivative.
Var log_clamped(Var a, double floor);
Var softmax_rows(Var a, std::span<const std::uint8_t> key_mask = {});
Var layer_norm(Var h, Var gain, Var bias, double eps = kLayerNormEps);
/// Rows of an embedding table.
Var embed(Var table, std::span<const int> ids);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// Mean over rows with mask == 1; result is 1 x cols.
Var masked_mean_rows(Var h, std::span<const std::uint8_t> mask);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Same value, gradient blocked.
Var detach(Var a);

}  // namespace xmixup
