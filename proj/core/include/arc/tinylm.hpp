#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "arc/error.hpp"
#include "arc/serializer.hpp"

namespace arc {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Decoder-only pre-norm transformer: learned positional embeddings, causal
// multi-head attention, GELU feedforward, untied output projection.
struct ModelConfig {
  int d_model = 448;
  int n_heads = 8;
  int head_dim = 56;
  int n_layers = 8;
  int d_ffn = 1792;
  int vocab_size = tok::kVocabSize;
  int max_ctx = kDefaultMaxCtx;
  float dropout_rate = 0.10f;
  // Dropout is always applied to sublayer outputs; this also applies it to
  // the embedding sum.
  bool dropout_on_embedding = true;

  void validate() const;  // throws InvalidConfig

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Decides initialization scale and whether weight decay applies.
enum class TensorRole { Embedding, NormScale, NormBias, Weight, ResidualWeight, Bias };

template <typename S>
struct ParamsT {
  struct Layer {
    VecX<S> ln1_scale, ln1_bias;
    MatX<S> wq, wk, wv, wo;  // [d_model, d_model]; y = x W + b
    VecX<S> bq, bk, bv, bo;
    VecX<S> ln2_scale, ln2_bias;
    MatX<S> w_up;    // [d_model, d_ffn]
    VecX<S> b_up;
    MatX<S> w_down;  // [d_ffn, d_model]
    VecX<S> b_down;
  };

  MatX<S> tok_emb;  // [vocab, d_model]
  MatX<S> pos_emb;  // [max_ctx, d_model]
  std::vector<Layer> layers;
  VecX<S> final_scale, final_bias;
  MatX<S> w_out;  // [d_model, vocab]

  static ParamsT zeros(const ModelConfig& cfg);
  void set_zero();
};

using Params = ParamsT<float>;

// Flat view of every tensor, in the stable manifest order used by
// checkpoints, the optimizer, and gradient checking.
template <typename S>
struct TensorRef {
  std::string name;
  std::vector<int> shape;
  S* data;
  std::size_t size;
  TensorRole role;
};

template <typename S>
std::vector<TensorRef<S>> tensor_table(ParamsT<S>& p);
template <typename S>
std::vector<TensorRef<const S>> tensor_table(const ParamsT<S>& p);

std::int64_t count_params(const ModelConfig& cfg);

template <typename S>
ParamsT<S> init_model(const ModelConfig& cfg, std::uint64_t seed);

// FNV-1a over all tensor payloads in manifest order.
std::uint64_t params_fingerprint(const Params& p);

// Low-rank additive deltas on attention projections:
//   W_eff = W + scale * B A,  scale = alpha / rank.
enum class AdapterTarget { AttnQ, AttnK, AttnV, AttnO };

const char* adapter_target_name(AdapterTarget t);

template <typename S>
struct AdapterSet {
  struct Entry {
    AdapterTarget target;
    int layer;
    MatX<S> a;  // [rank, d_model]
    MatX<S> b;  // [d_model, rank]
  };
  std::vector<Entry> entries;
  S scale = S(0);
  S dropout_rate = S(0);  // on the adapter-path input, train mode only

  const Entry* find(AdapterTarget t, int layer) const {
    for (const Entry& e : entries) {
      if (e.target == t && e.layer == layer) return &e;
    }
    return nullptr;
  }
  Entry* find(AdapterTarget t, int layer) {
    return const_cast<Entry*>(std::as_const(*this).find(t, layer));
  }
  void set_zero() {
    for (Entry& e : entries) {
      e.a.setZero();
      e.b.setZero();
    }
  }
};

struct ForwardOptions {
  bool train_mode = false;
  std::uint64_t dropout_seed = 0;
};

// Full-sequence logits [T, vocab]. Throws ContextExceeded / UnknownToken.
template <typename S>
MatX<S> forward(const ModelConfig& cfg, const ParamsT<S>& p, std::span<const TokenId> tokens,
                const ForwardOptions& opts = {}, const AdapterSet<S>* adapters = nullptr);

// Mean negative log-likelihood of targets[i] under logits row i over
// masked rows, accumulated in double. Throws EmptyMask.
template <typename S>
double cross_entropy(const MatX<S>& logits, std::span<const TokenId> targets,
                     std::span<const std::uint8_t> mask);

struct EpisodeBatchItem {
  std::span<const TokenId> tokens;
  std::span<const std::uint8_t> mask;  // over token positions; loss on tokens[j] with mask[j]
  std::uint64_t dropout_seed = 0;
};

// Gradients of the batch-mean episode loss with respect to every
// parameter (accumulated into out_grads, which must be zeroed by the
// caller) and, when attached, the adapter factors. Returns the loss.
template <typename S>
double grads(const ModelConfig& cfg, const ParamsT<S>& p, std::span<const EpisodeBatchItem> batch,
             ParamsT<S>& out_grads, bool train_mode = false,
             const AdapterSet<S>* adapters = nullptr, AdapterSet<S>* adapter_grads = nullptr);

// AdamW with decoupled decay (skipped for norms, biases, embeddings),
// linear warmup + cosine decay, global gradient-norm clipping.
struct OptHyper {
  float peak_lr = 3e-4f;
  int warmup_steps = 0;
  int total_steps = 1;
  float beta1 = 0.9f;
  float beta2 = 0.95f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
  float clip_norm = 1.0f;
};

struct OptState {
  std::int64_t step = 0;
  Params m, v;

  static OptState init(const ModelConfig& cfg);
};

double lr_at(const OptHyper& h, std::int64_t next_step);

// One update in place; throws NonFiniteGradient before touching anything.
void opt_step(Params& p, const Params& g, OptState& s, const OptHyper& h);

// Greedy decoding; ties break toward the lowest token id. Returns the
// generated continuation (excluding the prefix); stops at EOS or max_new.
// Throws ContextExceeded when the context fills before EOS.
template <typename S>
TokenSeq generate_greedy(const ModelConfig& cfg, const ParamsT<S>& p,
                         std::span<const TokenId> prefix, int max_new,
                         const AdapterSet<S>* adapters = nullptr);

// Sum of per-token log-probabilities of `continuation` after `prefix`.
template <typename S>
double seq_logprob(const ModelConfig& cfg, const ParamsT<S>& p, std::span<const TokenId> prefix,
                   std::span<const TokenId> continuation,
                   const AdapterSet<S>* adapters = nullptr);

}  // namespace arc
