#include "i2md/encoder.hpp"

#include <cmath>

#include "i2md/error.hpp"
#include "i2md/ops.hpp"

namespace i2md {
namespace {

Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (auto& v : w) v = uniform(rng, -limit, limit);
  return Tensor({in, out}, std::move(w), true);
}

Linear make_linear(std::size_t in, std::size_t out, Rng& rng, bool bias = true) {
  Linear l{xavier(in, out, rng), {}};
  if (bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

LayerNormParams make_norm(std::size_t dim) { return {Tensor::full({dim}, 1.0, true), Tensor::zeros({dim}, true)}; }

AttentionParams make_attention(std::size_t dim, Rng& rng) {
  AttentionParams a;
  a.query = xavier(dim, dim, rng);
  a.key = xavier(dim, dim, rng);
  a.value = xavier(dim, dim, rng);
  a.out = make_linear(dim, dim, rng);
  return a;
}

// Visits every defined tensor in the canonical order. `P` may be const or
// mutable.
template <class P, class F>
void visit(P& p, F&& f, bool include_cross = true) {
  auto lin = [&](auto& l, const std::string& name) {
    f(name + ".weight", l.weight);
    if (l.bias.defined()) f(name + ".bias", l.bias);
  };
  auto norm = [&](auto& n, const std::string& name) {
    f(name + ".gamma", n.gamma);
    f(name + ".beta", n.beta);
  };
  auto attn = [&](auto& a, const std::string& name) {
    f(name + ".query", a.query);
    f(name + ".key", a.key);
    f(name + ".value", a.value);
    lin(a.out, name + ".out");
  };
  for (std::size_t i = 0; i < p.gcn.size(); ++i) lin(p.gcn[i], "gcn." + std::to_string(i));
  lin(p.reduce, "reduce");
  if (p.position.defined()) f(std::string("position"), p.position);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& layer = p.layers[i];
    const std::string prefix = "layers." + std::to_string(i);
    norm(layer.self_norm, prefix + ".self_norm");
    attn(layer.self_attention, prefix + ".self_attention");
    if (include_cross && layer.cross_attention) {
      norm(*layer.cross_norm, prefix + ".cross_norm");
      attn(*layer.cross_attention, prefix + ".cross_attention");
    }
    norm(layer.ffn_norm, prefix + ".ffn_norm");
    lin(layer.ffn_in, prefix + ".ffn_in");
    lin(layer.ffn_out, prefix + ".ffn_out");
  }
  lin(p.head_hidden, "head_hidden");
  lin(p.head_out, "head_out");
}

Tensor linear(const Tensor& x, const Linear& l) {
  Tensor y = matmul(x, l.weight);
  return l.bias.defined() ? add_row_bias(y, l.bias) : y;
}

Tensor attention(const AttentionParams& p, const Tensor& queries, const Tensor& sources, std::size_t batch,
                 std::size_t q_len, std::size_t kv_len, std::size_t heads) {
  const std::size_t dim = queries.dim(1);
  const std::size_t head_dim = dim / heads;
  Tensor q = reshape(permute(reshape(matmul(queries, p.query), {batch, q_len, heads, head_dim}), {0, 2, 1, 3}),
                     {batch * heads, q_len, head_dim});
  Tensor k = reshape(permute(reshape(matmul(sources, p.key), {batch, kv_len, heads, head_dim}), {0, 2, 3, 1}),
                     {batch * heads, head_dim, kv_len});
  Tensor v = reshape(permute(reshape(matmul(sources, p.value), {batch, kv_len, heads, head_dim}), {0, 2, 1, 3}),
                     {batch * heads, kv_len, head_dim});
  Tensor weights = softmax(scale(bmm(q, k), 1.0 / std::sqrt(static_cast<double>(head_dim))), 2);
  Tensor mixed = reshape(permute(reshape(bmm(weights, v), {batch, heads, q_len, head_dim}), {0, 2, 1, 3}),
                         {batch * q_len, dim});
  return linear(mixed, p.out);
}

}  // namespace

void EncoderConfig::validate() const {
  if (in_channels == 0 || frames == 0 || layers == 0 || model_dim == 0 || heads == 0 || ffn_dim == 0 ||
      projection_dim == 0 || gcn_channels.empty()) {
    throw ConfigError("encoder dimensions must all be >= 1");
  }
  for (auto c : gcn_channels) {
    if (c == 0) throw ConfigError("encoder gcn_channels must be >= 1");
  }
  if (model_dim % heads != 0) {
    throw ConfigError("encoder model_dim " + std::to_string(model_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
}

EncoderConfig EncoderConfig::preset(const std::string& name) {
  EncoderConfig c;
  if (name == "desk") return c;
  if (name == "small") {
    c.gcn_channels = {16, 16, 32};
    c.layers = 1;
    c.model_dim = 32;
    c.heads = 2;
    c.ffn_dim = 64;
    c.projection_dim = 32;
    return c;
  }
  if (name == "full") {
    c.gcn_channels = {64, 64, 128};
    c.layers = 6;
    c.model_dim = 768;
    c.heads = 12;
    c.ffn_dim = 3072;
    c.projection_dim = 128;
    return c;
  }
  throw ConfigError("unknown encoder preset '" + name + "'");
}

EncoderParams EncoderParams::init(const EncoderConfig& config, Rng& rng) {
  config.validate();
  EncoderParams p;
  p.config = config;
  std::size_t in = config.in_channels;
  for (auto c : config.gcn_channels) {
    p.gcn.push_back(make_linear(in, c, rng));
    in = c;
  }
  const std::size_t dim = config.model_dim;
  p.reduce = make_linear(in, dim, rng);
  if (config.positional) {
    std::vector<double> pos(config.frames * dim);
    for (auto& v : pos) v = normal(rng, 0.0, 0.02);
    p.position = Tensor({config.frames, dim}, std::move(pos), true);
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    TransformerLayerParams layer;
    layer.self_norm = make_norm(dim);
    layer.self_attention = make_attention(dim, rng);
    if (config.has_cross_attention) {
      layer.cross_norm = make_norm(dim);
      layer.cross_attention = make_attention(dim, rng);
    }
    layer.ffn_norm = make_norm(dim);
    layer.ffn_in = make_linear(dim, config.ffn_dim, rng);
    layer.ffn_out = make_linear(config.ffn_dim, dim, rng);
    p.layers.push_back(std::move(layer));
  }
  p.head_hidden = make_linear(dim, dim, rng);
  p.head_out = make_linear(dim, config.projection_dim, rng);
  return p;
}

std::vector<NamedTensor> EncoderParams::named() const {
  std::vector<NamedTensor> out;
  visit(*this, [&](const std::string& name, const Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::vector<NamedTensor> EncoderParams::named_instance_branch() const {
  std::vector<NamedTensor> out;
  visit(*this, [&](const std::string& name, const Tensor& t) { out.emplace_back(name, t); }, false);
  return out;
}

EncoderParams EncoderParams::clone(bool trainable) const {
  EncoderParams copy = *this;
  visit(copy, [&](const std::string&, Tensor& t) {
    t = t.detach();
    t.set_requires_grad(trainable);
  });
  return copy;
}

void EncoderParams::set_trainable(bool trainable) {
  visit(*this, [&](const std::string&, Tensor& t) {
    t.clear_grad();
    t.set_requires_grad(trainable);
  });
}

EncoderParams EncoderParams::with_tensors(std::span<const Tensor> tensors) const {
  EncoderParams copy = *this;
  std::size_t i = 0;
  visit(copy, [&](const std::string& name, Tensor& t) {
    if (i >= tensors.size() || tensors[i].shape() != t.shape()) {
      throw DimensionError("with_tensors: replacement for " + name + " missing or misshapen");
    }
    t = tensors[i++];
  });
  if (i != tensors.size()) throw DimensionError("with_tensors: too many tensors");
  return copy;
}

InputNormalization fit_input_normalization(std::span<const SkeletonSequence> sequences, Modality modality,
                                           const Topology& topology) {
  if (sequences.empty()) throw ContractError("fit_input_normalization: no sequences");
  const std::size_t width = topology.joint_count() * 3;
  std::vector<double> sum(width, 0.0), sq(width, 0.0);
  std::size_t rows = 0;
  for (const auto& raw : sequences) {
    const SkeletonSequence seq = derive_modality(raw, modality, topology);
    for (std::size_t t = 0; t < seq.frames; ++t) {
      for (std::size_t c = 0; c < width; ++c) sum[c] += seq.coords[t * width + c];
    }
    rows += seq.frames;
  }
  InputNormalization n;
  n.mean.resize(width);
  for (std::size_t c = 0; c < width; ++c) n.mean[c] = sum[c] / static_cast<double>(rows);
  for (const auto& raw : sequences) {
    const SkeletonSequence seq = derive_modality(raw, modality, topology);
    for (std::size_t t = 0; t < seq.frames; ++t) {
      for (std::size_t c = 0; c < width; ++c) {
        const double d = seq.coords[t * width + c] - n.mean[c];
        sq[c] += d * d;
      }
    }
  }
  n.scale.resize(width);
  for (std::size_t c = 0; c < width; ++c) {
    const double sd = std::sqrt(sq[c] / static_cast<double>(rows));
    n.scale[c] = sd < 1e-8 ? 1.0 : 1.0 / sd;
  }
  return n;
}

Tensor gcn_forward(const EncoderParams& params, const Tensor& input, const Topology& topology) {
  const std::size_t joints = topology.joint_count();
  if (input.rank() != 2 || input.dim(1) != params.config.in_channels || input.dim(0) % joints != 0) {
    throw DimensionError("gcn_forward: input " + shape_string(input.shape()) + " does not match " +
                         std::to_string(joints) + "-joint topology with " +
                         std::to_string(params.config.in_channels) + " channels");
  }
  const Tensor& adj = topology.normalized_adjacency();
  Tensor h = input;
  if (params.input_norm) {
    const std::size_t width = joints * params.config.in_channels;
    const auto& n = *params.input_norm;
    if (n.mean.size() != width || n.scale.size() != width) {
      throw DimensionError("gcn_forward: input normalization has " + std::to_string(n.mean.size()) +
                           " channels, expected " + std::to_string(width));
    }
    std::vector<double> shift(width), diag(width * width, 0.0);
    for (std::size_t c = 0; c < width; ++c) {
      shift[c] = -n.mean[c];
      diag[c * width + c] = n.scale[c];
    }
    const std::size_t frames = input.dim(0) / joints;
    h = reshape(matmul(add_row_bias(reshape(h, {frames, width}), Tensor({width}, std::move(shift))),
                       Tensor({width, width}, std::move(diag))),
                {frames * joints, params.config.in_channels});
  }
  for (const auto& layer : params.gcn) h = relu(linear(graph_mix(h, adj), layer));
  return linear(group_mean(h, joints), params.reduce);
}

Tensor transformer_forward(const EncoderParams& params, const Tensor& tokens, std::size_t batch,
                           const Tensor* neighbors) {
  const auto& cfg = params.config;
  if (batch == 0 || tokens.rank() != 2 || tokens.dim(1) != cfg.model_dim || tokens.dim(0) % batch != 0) {
    throw DimensionError("transformer_forward: tokens " + shape_string(tokens.shape()) + " for batch " +
                         std::to_string(batch));
  }
  const std::size_t frames = tokens.dim(0) / batch;
  const std::size_t dim = cfg.model_dim;
  if (neighbors && !cfg.has_cross_attention) {
    throw ContractError("transformer_forward: neighbor values given to an encoder without cross-attention");
  }
  std::size_t k_neighbors = 0;
  if (neighbors) {
    if (neighbors->rank() != 2 || neighbors->dim(1) != dim || neighbors->dim(0) % batch != 0 ||
        neighbors->dim(0) == 0) {
      throw DimensionError("transformer_forward: neighbor values " + shape_string(neighbors->shape()) +
                           " do not split into " + std::to_string(batch) + " non-empty sets");
    }
    k_neighbors = neighbors->dim(0) / batch;
  }

  Tensor x = tokens;
  if (params.position.defined()) {
    if (frames != cfg.frames) {
      throw DimensionError("transformer_forward: " + std::to_string(frames) + " frames but position table has " +
                           std::to_string(cfg.frames));
    }
    x = reshape(add_row_bias(reshape(x, {batch, frames * dim}), reshape(params.position, {frames * dim})),
                {batch * frames, dim});
  }
  for (const auto& layer : params.layers) {
    Tensor a = layer_norm(x, layer.self_norm.gamma, layer.self_norm.beta);
    x = add(x, attention(layer.self_attention, a, a, batch, frames, frames, cfg.heads));
    if (neighbors) {
      a = layer_norm(x, layer.cross_norm->gamma, layer.cross_norm->beta);
      x = add(x, attention(*layer.cross_attention, a, *neighbors, batch, frames, k_neighbors, cfg.heads));
    }
    a = layer_norm(x, layer.ffn_norm.gamma, layer.ffn_norm.beta);
    x = add(x, linear(relu(linear(a, layer.ffn_in)), layer.ffn_out));
  }
  return group_mean(x, frames);
}

Tensor project(const EncoderParams& params, const Tensor& hidden) {
  if (hidden.rank() != 2 || hidden.dim(1) != params.config.model_dim) {
    throw DimensionError("project: hidden " + shape_string(hidden.shape()) + " does not match model_dim " +
                         std::to_string(params.config.model_dim));
  }
  return l2_normalize(linear(relu(linear(hidden, params.head_hidden)), params.head_out));
}

EncoderOutput encode(const EncoderParams& params, const Tensor& input, std::size_t batch, const Topology& topology,
                     const Tensor* neighbors) {
  Tensor tokens = gcn_forward(params, input, topology);
  Tensor hidden = transformer_forward(params, tokens, batch, neighbors);
  return {hidden, project(params, hidden)};
}

}  // namespace i2md
