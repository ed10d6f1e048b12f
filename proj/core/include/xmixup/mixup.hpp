#pragma once

#include <optional>
#include <span>
#include <vector>

#include "xmixup/autodiff.hpp"
#include "xmixup/corpus.hpp"
#include "xmixup/encoder.hpp"

namespace xmixup {

struct MixupConfig {
  /// Upper bound of the mixup ratio, in (0, 1].
  double lambda0 = 0.5;
  /// 1-based layer at which the target stream is mixed; nullopt disables mixing.
  std::optional<int> mix_layer = 1;
  /// Scheduled sampling decay constant.
  double schedule_k = 1000.0;
  /// Similarity scale inside the entropy estimate; defaults to d_model.
  std::optional<double> n_scale;
  /// Bypasses the quality gate with a constant ratio.
  std::optional<double> fixed_lambda;

  void validate(const EncoderConfig& encoder) const;
};

/// Translation-quality statistics of one sequence pair.
struct AttentionStats {
  /// Target-query over source-key weights, [I x J].
  Tensor weights;
  double entropy_forward = 0.0;
  double entropy_backward = 0.0;
};

/// MultiHead(H_T, H_S, H_S) with the layer's own attention projections.
Var cross_attention(Var target, Var source, const AttentionParams& params, std::span<const std::uint8_t> source_mask);

/// A_ij = softmax_j(h_Ti . h_Sj / sqrt(n)); H(A) = -(1/I) sum_ij A_ij log A_ij.
/// The backward entropy recomputes the softmax with the roles swapped and
/// averages over source positions. Masked rows and keys are excluded.
AttentionStats attention_entropy(const Tensor& target, const Tensor& source, std::span<const std::uint8_t> target_mask,
                                 std::span<const std::uint8_t> source_mask, double n_scale);

struct TapedEntropy {
  Var forward;
  Var backward;
};

TapedEntropy attention_entropy(Var target, Var source, std::span<const std::uint8_t> target_mask,
                               std::span<const std::uint8_t> source_mask, double n_scale);

/// lambda = lambda0 * sigmoid((H(A) + H(A^T)) * w + b).
double mixup_ratio(const AttentionStats& stats, double w, double b, double lambda0);
Var mixup_ratio(const TapedEntropy& stats, Var w, Var b, double lambda0);

/// LN(lambda * h_cross + (1 - lambda) * h_target).
Tensor manifold_mix(const Tensor& target, const Tensor& cross, double lambda, const Tensor& gain, const Tensor& bias);
Var manifold_mix(Var target, Var cross, Var lambda, Var gain, Var bias);

/// Inverse sigmoid decay k / (k + exp(i / k)).
double sampling_threshold(long step, double k);

/// Real source when u <= p*, otherwise the back-translated source.
const std::vector<int>& sample_source(const ParallelExample& example, double p_star, double u);

/// Output of the dual-stream encoder.
struct PairEncoding {
  HiddenStates source;
  HiddenStates target;
  /// Mixup ratio on the tape; absent when mixing is disabled.
  std::optional<Var> lambda;
  std::optional<TapedEntropy> entropy;
  std::optional<Var> cross;
};

/// Shared-weight encoding of both streams. At the mix layer the target
/// attention sub-layer output is replaced by the manifold mix with its
/// cross-attention over the source before the feed-forward sub-layer. The
/// source stream is never modified.
PairEncoding encode_pair(const BoundParams& params, std::span<const int> src, std::span<const int> tgt,
                         const MixupConfig& mix);

}  // namespace xmixup
