#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "i2md/rng.hpp"
#include "i2md/skeleton.hpp"
#include "i2md/tensor.hpp"

namespace i2md {

struct EncoderConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> gcn_channels{16, 32, 64};  // one entry per GCN layer
  std::size_t frames = 32;                           // T, sizes the position table
  std::size_t layers = 2;                            // transformer depth L
  std::size_t model_dim = 64;                        // C
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t projection_dim = 32;  // C'
  bool positional = true;
  bool has_cross_attention = false;

  void validate() const;

  /// Named presets: "desk" (default), "small" (acceptance-run scale) and
  /// "full" (L=6, C=768, 12 heads, FFN 3072, C'=128).
  static EncoderConfig preset(const std::string& name);
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]; undefined when the layer has no bias
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

/// Multi-head attention. Query/key/value projections carry no bias, so a
/// zero key/value source produces a zero attention update before `out`.
struct AttentionParams {
  Tensor query;
  Tensor key;
  Tensor value;
  Linear out;
};

struct TransformerLayerParams {
  LayerNormParams self_norm;
  AttentionParams self_attention;
  std::optional<LayerNormParams> cross_norm;
  std::optional<AttentionParams> cross_attention;
  LayerNormParams ffn_norm;
  Linear ffn_in;
  Linear ffn_out;
};

using NamedTensor = std::pair<std::string, Tensor>;

/// Fixed per-(joint, axis) standardization of the raw input, applied before
/// the first graph convolution: x' = (x - mean) * scale. Fitted once on the
/// training split and never trained.
struct InputNormalization {
  std::vector<double> mean;   // [J * in_channels], joint-major
  std::vector<double> scale;  // reciprocal standard deviations, same layout

  bool operator==(const InputNormalization&) const = default;
};

/// Mean and reciprocal standard deviation of every (joint, axis) channel of
/// `modality` over all frames of `sequences`. Channels with a standard
/// deviation below 1e-8 (e.g. the zero root bone) get scale 1.
InputNormalization fit_input_normalization(std::span<const SkeletonSequence> sequences, Modality modality,
                                           const Topology& topology);

/// GCN -> Transformer -> projection head. The instance branch (IDB) and the
/// cluster branch (CDB) of one modality share one parameter set; only the
/// CDB path touches the cross-attention blocks.
struct EncoderParams {
  EncoderConfig config;
  std::vector<Linear> gcn;
  Linear reduce;          // pooled GCN channels -> C
  Tensor position;        // [T, C]; undefined when positional == false
  std::vector<TransformerLayerParams> layers;
  Linear head_hidden;     // C -> C
  Linear head_out;        // C -> C'
  std::optional<InputNormalization> input_norm;  // identity when empty

  static EncoderParams init(const EncoderConfig& config, Rng& rng);

  /// All tensors in a fixed order with stable names.
  std::vector<NamedTensor> named() const;
  /// Subset that the instance branch reads (excludes cross-attention).
  std::vector<NamedTensor> named_instance_branch() const;

  /// Independent copy with the requires_grad flag set to `trainable`.
  EncoderParams clone(bool trainable) const;
  void set_trainable(bool trainable);
  /// Shallow copy that reads `tensors` (in named() order, same shapes)
  /// in place of the stored parameters.
  EncoderParams with_tensors(std::span<const Tensor> tensors) const;
};

/// [B*T*J, 3] -> [B*T, C]: optional input standardization, stacked
/// relu(A_hat H W + b) per frame, mean over joints, linear map to C channels.
Tensor gcn_forward(const EncoderParams& params, const Tensor& input, const Topology& topology);

/// [B*T, C] tokens -> [B, C] hidden embedding (temporal mean of the final
/// tokens). Pre-norm residual blocks; cross-attention runs only when
/// `neighbors` ([B*K, C], K per sample) is given.
Tensor transformer_forward(const EncoderParams& params, const Tensor& tokens, std::size_t batch,
                           const Tensor* neighbors = nullptr);

/// [B, C] -> [B, C']: 2-layer MLP with relu, then L2 normalization.
Tensor project(const EncoderParams& params, const Tensor& hidden);

struct EncoderOutput {
  Tensor hidden;     // h, [B, C]
  Tensor embedding;  // z, [B, C'], unit rows
};

EncoderOutput encode(const EncoderParams& params, const Tensor& input, std::size_t batch, const Topology& topology,
                     const Tensor* neighbors = nullptr);

}  // namespace i2md
