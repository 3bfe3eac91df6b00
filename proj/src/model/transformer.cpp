// SPDX-License-Identifier: Apache-2.0
#include "ftlab/model/transformer.hpp"

#include <cmath>

#include "ftlab/error.hpp"
#include "ftlab/tensor/ops.hpp"

namespace ftlab {
namespace {

constexpr double kInitStd = 0.02;
constexpr double kMaskedScore = -1e9;

Tensor normal_tensor(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.mutable_data()) v = rng.normal(0.0, kInitStd);
  return t;
}

Projection make_projection(std::size_t out, std::size_t in, Rng& rng) {
  Projection p;
  p.weight = normal_tensor({out, in}, rng);
  p.bias = Tensor::zeros({out}, true);
  return p;
}

Projection clone_projection(const Projection& p) {
  Projection c;
  c.weight = p.weight.clone(p.weight.requires_grad());
  c.bias = p.bias.clone(p.bias.requires_grad());
  if (p.adapter) {
    LoraAdapter a = *p.adapter;
    a.a = p.adapter->a.clone(p.adapter->a.requires_grad());
    a.b = p.adapter->b.clone(p.adapter->b.requires_grad());
    c.adapter = std::move(a);
  }
  return c;
}

void add_projection(std::vector<NamedParameter>& out, const std::string& prefix,
                    const Projection& p) {
  out.push_back({prefix + ".weight", p.weight});
  out.push_back({prefix + ".bias", p.bias});
  if (p.adapter) {
    out.push_back({prefix + ".lora_a", p.adapter->a});
    out.push_back({prefix + ".lora_b", p.adapter->b});
  }
}

// Splits [B*L x d] into per-head [B*H x L x dh].
Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t length, std::size_t heads) {
  const std::size_t dh = x.dim(1) / heads;
  Tensor t = ops::reshape(x, {batch, length, heads, dh});
  t = ops::permute(t, {0, 2, 1, 3});
  return ops::reshape(t, {batch * heads, length, dh});
}

Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t length, std::size_t heads) {
  const std::size_t dh = x.dim(2);
  Tensor t = ops::reshape(x, {batch, heads, length, dh});
  t = ops::permute(t, {0, 2, 1, 3});
  return ops::reshape(t, {batch * length, heads * dh});
}

}  // namespace

std::vector<std::size_t> TokenBatch::last_positions() const {
  std::vector<std::size_t> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    bool found = false;
    for (std::size_t t = length; t-- > 0;) {
      if (mask[b * length + t]) {
        out[b] = t;
        found = true;
        break;
      }
    }
    if (!found) throw DataError("batch row " + std::to_string(b) + " has no real tokens");
  }
  return out;
}

Tensor Projection::apply(const Tensor& x, bool train, Rng& rng) const {
  if (!adapter) return ops::linear(x, weight, bias);
  return ops::low_rank_linear(x, weight, bias, adapter->a, adapter->b, adapter->scaling(),
                              adapter->dropout, train, rng);
}

TransformerClassifier TransformerClassifier::build(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  TransformerClassifier m;
  m.config_ = config;
  m.token_embedding_ = normal_tensor({config.vocab_size, d}, rng);
  m.position_embedding_ = normal_tensor({config.max_seq_len, d}, rng);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    TransformerBlock blk;
    blk.ln1_gamma = Tensor::full({d}, 1.0, true);
    blk.ln1_beta = Tensor::zeros({d}, true);
    blk.q = make_projection(d, d, rng);
    blk.k = make_projection(d, d, rng);
    blk.v = make_projection(d, d, rng);
    blk.o = make_projection(d, d, rng);
    blk.ln2_gamma = Tensor::full({d}, 1.0, true);
    blk.ln2_beta = Tensor::zeros({d}, true);
    blk.ffn_in = make_projection(config.d_ffn, d, rng);
    blk.ffn_out = make_projection(d, config.d_ffn, rng);
    m.blocks_.push_back(std::move(blk));
  }
  m.final_gamma_ = Tensor::full({d}, 1.0, true);
  m.final_beta_ = Tensor::zeros({d}, true);
  m.head_weight_ = normal_tensor({config.n_classes, d}, rng);
  m.head_bias_ = Tensor::zeros({config.n_classes}, true);
  return m;
}

std::vector<NamedParameter> TransformerClassifier::parameters() const {
  std::vector<NamedParameter> out;
  out.push_back({"embed.tokens", token_embedding_});
  out.push_back({"embed.positions", position_embedding_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const std::string p = "layers." + std::to_string(i);
    out.push_back({p + ".ln1.gamma", b.ln1_gamma});
    out.push_back({p + ".ln1.beta", b.ln1_beta});
    add_projection(out, p + ".attn.q", b.q);
    add_projection(out, p + ".attn.k", b.k);
    add_projection(out, p + ".attn.v", b.v);
    add_projection(out, p + ".attn.o", b.o);
    out.push_back({p + ".ln2.gamma", b.ln2_gamma});
    out.push_back({p + ".ln2.beta", b.ln2_beta});
    add_projection(out, p + ".ffn.in", b.ffn_in);
    add_projection(out, p + ".ffn.out", b.ffn_out);
  }
  out.push_back({"final_ln.gamma", final_gamma_});
  out.push_back({"final_ln.beta", final_beta_});
  out.push_back({"head.weight", head_weight_});
  out.push_back({"head.bias", head_bias_});
  return out;
}

std::vector<NamedParameter> TransformerClassifier::trainable_parameters() const {
  std::vector<NamedParameter> out;
  for (auto& p : parameters()) {
    if (p.tensor.requires_grad()) out.push_back(std::move(p));
  }
  return out;
}

std::size_t TransformerClassifier::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

Tensor TransformerClassifier::forward(const TokenBatch& batch, bool train, Rng& rng) const {
  const auto positions = batch.last_positions();
  return forward_at(batch, positions, train, rng);
}

Tensor TransformerClassifier::forward_at(const TokenBatch& batch,
                                         std::span<const std::size_t> read_positions, bool train,
                                         Rng& rng) const {
  const std::size_t B = batch.batch, L = batch.length;
  if (B == 0 || L == 0) throw ShapeError("forward: empty batch");
  if (batch.ids.size() != B * L || batch.mask.size() != B * L) {
    throw ShapeError("forward: ids/mask do not match batch x length");
  }
  if (L > config_.max_seq_len) {
    throw ShapeError("forward: sequence length " + std::to_string(L) + " exceeds max_seq_len " +
                     std::to_string(config_.max_seq_len));
  }
  if (read_positions.size() != B) throw ShapeError("forward: one read position per row required");
  for (std::size_t p : read_positions) {
    if (p >= L) throw ShapeError("forward: read position out of range");
  }

  const std::size_t H = config_.n_heads;
  const std::size_t dh = config_.d_model / H;
  const double p_h = config_.hidden_dropout;
  const double p_a = config_.attention_dropout;

  std::vector<std::int32_t> pos_ids(B * L);
  for (std::size_t i = 0; i < B * L; ++i) pos_ids[i] = static_cast<std::int32_t>(i % L);

  // Query i may look at key j only when j <= i and j is a real token.
  std::vector<std::uint8_t> blocked(B * H * L * L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      std::uint8_t* m = blocked.data() + (b * H + h) * L * L;
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < L; ++j) m[i * L + j] = (j > i || !batch.mask[b * L + j]) ? 1 : 0;
      }
    }
  }

  Tensor h = ops::add(ops::embedding(token_embedding_, batch.ids),
                      ops::embedding(position_embedding_, pos_ids));
  h = ops::dropout(h, p_h, train, rng);
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (const auto& blk : blocks_) {
    Tensor a = ops::layer_norm(h, blk.ln1_gamma, blk.ln1_beta);
    Tensor q = split_heads(blk.q.apply(a, train, rng), B, L, H);
    Tensor k = split_heads(blk.k.apply(a, train, rng), B, L, H);
    Tensor v = split_heads(blk.v.apply(a, train, rng), B, L, H);
    Tensor scores = ops::scale(ops::bmm(q, k, true), score_scale);
    scores = ops::masked_fill(scores, blocked, kMaskedScore);
    Tensor probs = ops::dropout(ops::softmax(scores), p_a, train, rng);
    Tensor ctx = merge_heads(ops::bmm(probs, v), B, L, H);
    h = ops::add(h, ops::dropout(blk.o.apply(ctx, train, rng), p_h, train, rng));

    Tensor a2 = ops::layer_norm(h, blk.ln2_gamma, blk.ln2_beta);
    Tensor f = ops::gelu(blk.ffn_in.apply(a2, train, rng));
    h = ops::add(h, ops::dropout(blk.ffn_out.apply(f, train, rng), p_h, train, rng));
  }
  h = ops::layer_norm(h, final_gamma_, final_beta_);

  std::vector<std::size_t> rows(B);
  for (std::size_t b = 0; b < B; ++b) rows[b] = b * L + read_positions[b];
  return ops::linear(ops::select_rows(h, rows), head_weight_, head_bias_);
}

TransformerClassifier TransformerClassifier::clone() const {
  TransformerClassifier c;
  c.config_ = config_;
  c.token_embedding_ = token_embedding_.clone(token_embedding_.requires_grad());
  c.position_embedding_ = position_embedding_.clone(position_embedding_.requires_grad());
  for (const auto& b : blocks_) {
    TransformerBlock n;
    n.ln1_gamma = b.ln1_gamma.clone(b.ln1_gamma.requires_grad());
    n.ln1_beta = b.ln1_beta.clone(b.ln1_beta.requires_grad());
    n.q = clone_projection(b.q);
    n.k = clone_projection(b.k);
    n.v = clone_projection(b.v);
    n.o = clone_projection(b.o);
    n.ln2_gamma = b.ln2_gamma.clone(b.ln2_gamma.requires_grad());
    n.ln2_beta = b.ln2_beta.clone(b.ln2_beta.requires_grad());
    n.ffn_in = clone_projection(b.ffn_in);
    n.ffn_out = clone_projection(b.ffn_out);
    c.blocks_.push_back(std::move(n));
  }
  c.final_gamma_ = final_gamma_.clone(final_gamma_.requires_grad());
  c.final_beta_ = final_beta_.clone(final_beta_.requires_grad());
  c.head_weight_ = head_weight_.clone(head_weight_.requires_grad());
  c.head_bias_ = head_bias_.clone(head_bias_.requires_grad());
  return c;
}

void TransformerClassifier::set_all_trainable(bool trainable) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(trainable);
}

void TransformerClassifier::set_dropout(double hidden, double attention) {
  ModelConfig c = config_;
  c.hidden_dropout = hidden;
  c.attention_dropout = attention;
  c.validate();
  config_ = c;
}

bool TransformerClassifier::has_adapters() const {
  for (const auto& b : blocks_) {
    for (const Projection* p : {&b.q, &b.k, &b.v, &b.o}) {
      if (p->adapter) return true;
    }
  }
  return false;
}

std::uint64_t TransformerClassifier::hash_of(const std::vector<std::string>& names) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& name : names) h = content_hash(parameter(name).data(), h);
  return h;
}

std::uint64_t TransformerClassifier::base_hash() const {
  std::vector<std::string> names;
  for (const auto& p : parameters()) {
    if (!is_head_parameter(p.name) && !is_adapter_parameter(p.name)) names.push_back(p.name);
  }
  return hash_of(names);
}

Tensor TransformerClassifier::parameter(const std::string& name) const {
  for (auto& p : parameters()) {
    if (p.name == name) return p.tensor;
  }
  throw Error("no parameter named '" + name + "'");
}

bool is_head_parameter(const std::string& name) { return name.rfind("head.", 0) == 0; }

bool is_adapter_parameter(const std::string& name) {
  return name.ends_with(".lora_a") || name.ends_with(".lora_b");
}

}  // namespace ftlab
