#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmixup/autodiff.hpp"
#include "xmixup/tensor.hpp"

namespace xmixup {

/// Token id reserved for padding; padded positions are masked everywhere.
inline constexpr int kPadId = 0;

enum class TaskKind { classification, structured, span };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

struct EncoderConfig {
  int num_layers = 2;
  int d_model = 32;
  int num_heads = 4;
  int ffn_dim = 64;
  int vocab_size = 50;
  int max_len = 24;

  int head_dim() const { return d_model / num_heads; }
  /// Throws std::invalid_argument when the shape constraints do not hold.
  void validate() const;
};

/// All trainable tensors of a model plus the configuration that shaped them.
struct ModelParams {
  EncoderConfig config;
  TaskKind task = TaskKind::classification;
  int num_labels = 3;
  ParamMap tensors;

  const Tensor& at(const std::string& name) const;
};

/// Fresh parameters. Projection matrices are Glorot-uniform, embeddings
/// uniform in [-0.1, 0.1], layer-norm gains one, biases and the mixup-ratio
/// gate zero.
ModelParams init_model(const EncoderConfig& config, TaskKind task, int num_labels, std::uint64_t seed);

/// Parameter handles on one tape, looked up by name.
class BoundParams {
 public:
  /// Records every tensor of `model` on `tape`; trainable leaves when
  /// `trainable`, constants otherwise (inference).
  BoundParams(Tape& tape, const ModelParams& model, bool trainable);

  Var operator[](const std::string& name) const;
  Tape& tape() const { return *tape_; }
  const ModelParams& model() const { return *model_; }
  const EncoderConfig& config() const { return model_->config; }

 private:
  Tape* tape_;
  const ModelParams* model_;
  std::map<std::string, Var> vars_;
};

/// Projection weights of one attention block. Self-attention and the
/// cross-attention used for mixing resolve to the same handles.
struct AttentionParams {
  Var wq, wk, wv, wo;
  int num_heads = 1;
};

AttentionParams attention_params(const BoundParams& p, int layer);

/// Concat(head_1..h) W^O with head_i = softmax(Q W^q_i (K W^k_i)^T / sqrt(d)) V W^v_i.
/// Keys with key_mask == 0 get zero weight.
Var multi_head_attention(Var q, Var k, Var v, const AttentionParams& params,
                         std::span<const std::uint8_t> key_mask = {});

/// Per-layer states of one encoded sequence.
struct HiddenStates {
  /// layers[0] is the embedding output, layers[l] the output of layer l.
  std::vector<Var> layers;
  /// Residual sum entering the attention sub-layer norm of each layer (1-based, index 0 unused).
  std::vector<Var> attention_residual;
  /// Output of the attention sub-layer (after residual + norm) per layer (1-based).
  std::vector<Var> attention_output;
  Mask mask;

  Var last() const { return layers.back(); }
};

Mask padding_mask(std::span<const int> tokens);

HiddenStates encode_single(const BoundParams& params, std::span<const int> tokens);

// Building blocks of one post-norm layer, shared with the paired encoder.

/// Token plus position embeddings; validates ids and length.
Var embed_tokens(const BoundParams& p, std::span<const int> tokens);

struct AttentionSublayer {
  Var residual;  ///< h + MultiHead(h, h, h)
  Var output;    ///< LN(residual)
};

AttentionSublayer attention_sublayer(const BoundParams& p, int layer, Var h, std::span<const std::uint8_t> mask);
/// LN(a + FFN(a)).
Var feed_forward_sublayer(const BoundParams& p, int layer, Var a);

/// Mean of the last layer over unmasked positions.
Var sequence_representation(const HiddenStates& h);

// Task heads -----------------------------------------------------------------

/// Class distribution (1 x C) from a sequence representation.
Var classification_probs(const BoundParams& p, Var representation);
/// Per-token tag distributions (n x C).
Var token_probs(const BoundParams& p, const HiddenStates& h);
/// Start / end distributions over positions (2 x n), masked positions zero.
Var span_probs(const BoundParams& p, const HiddenStates& h);

}  // namespace xmixup
