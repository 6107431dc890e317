#include "arc/tinylm.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "arc/rng.hpp"

namespace arc {
namespace {

constexpr double kLnEps = 1e-5;

// Dropout site ids: embedding sum, then two sublayer sites per layer.
// Adapter-path sites live in a separate range keyed by (layer, target).
constexpr std::uint64_t kSiteEmbed = 0;
constexpr std::uint64_t site_attn(int layer) { return 1 + 2 * static_cast<std::uint64_t>(layer); }
constexpr std::uint64_t site_ffn(int layer) { return 2 + 2 * static_cast<std::uint64_t>(layer); }
constexpr std::uint64_t site_adapter(int layer, AdapterTarget t) {
  return 0x10000 + 4 * static_cast<std::uint64_t>(layer) + static_cast<std::uint64_t>(t);
}

std::uint64_t dropout_key(std::uint64_t seed, std::uint64_t site) {
  return splitmix64(seed ^ splitmix64(site ^ 0xd70f0e5a2c7ba3d1ULL));
}

// Inverted dropout, regenerable: masking depends only on (seed, site,
// element index), so the backward pass applies the identical transform.
template <typename S>
void apply_dropout(MatX<S>& x, double rate, std::uint64_t seed, std::uint64_t site) {
  if (rate <= 0.0) return;
  const S keep_scale = S(1.0 / (1.0 - rate));
  const std::uint64_t key = dropout_key(seed, site);
  S* d = x.data();
  const std::size_t n = static_cast<std::size_t>(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = hash_unit(key, i) < rate ? S(0) : d[i] * keep_scale;
  }
}

template <typename S>
void layernorm_forward(const MatX<S>& x, const VecX<S>& scale, const VecX<S>& bias,
                       MatX<S>& norm, MatX<S>& out, VecX<S>& rstd) {
  const Eigen::Index rows = x.rows(), d = x.cols();
  norm.resize(rows, d);
  out.resize(rows, d);
  rstd.resize(rows);
  for (Eigen::Index t = 0; t < rows; ++t) {
    double mean = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) mean += double(x(t, j));
    mean /= double(d);
    double var = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double c = double(x(t, j)) - mean;
      var += c * c;
    }
    var /= double(d);
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd(t) = S(rs);
    for (Eigen::Index j = 0; j < d; ++j) {
      const S n = S((double(x(t, j)) - mean) * rs);
      norm(t, j) = n;
      out(t, j) = n * scale(j) + bias(j);
    }
  }
}

template <typename S>
void layernorm_backward(const MatX<S>& norm, const VecX<S>& rstd, const VecX<S>& scale,
                        const MatX<S>& dout, MatX<S>& dx_accum, VecX<S>& dscale,
                        VecX<S>& dbias) {
  const Eigen::Index rows = norm.rows(), d = norm.cols();
  for (Eigen::Index t = 0; t < rows; ++t) {
    double mean_dn = 0.0, mean_dn_n = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double dn = double(dout(t, j)) * double(scale(j));
      mean_dn += dn;
      mean_dn_n += dn * double(norm(t, j));
    }
    mean_dn /= double(d);
    mean_dn_n /= double(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double dn = double(dout(t, j)) * double(scale(j));
      dx_accum(t, j) += S(double(rstd(t)) * (dn - mean_dn - double(norm(t, j)) * mean_dn_n));
      dscale(j) += dout(t, j) * norm(t, j);
      dbias(j) += dout(t, j);
    }
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <typename S>
S gelu(S x) {
  return S(0.5 * double(x) * (1.0 + std::erf(double(x) * kInvSqrt2)));
}

template <typename S>
S gelu_grad(S x) {
  const double xd = double(x);
  const double cdf = 0.5 * (1.0 + std::erf(xd * kInvSqrt2));
  const double pdf = std::exp(-0.5 * xd * xd) * kInvSqrt2Pi;
  return S(cdf + xd * pdf);
}

template <typename S>
struct LayerCache {
  MatX<S> n1, h1;  // LN1 normalized / scaled-shifted
  VecX<S> rstd1;
  MatX<S> q, k, v;
  std::vector<MatX<S>> probs;  // per head [T,T], causal rows
  MatX<S> att_concat;
  MatX<S> n2, h2;
  VecX<S> rstd2;
  MatX<S> ffn_pre, ffn_act;
};

template <typename S>
struct FwdCache {
  std::vector<LayerCache<S>> layers;
  MatX<S> nf, hf;
  VecX<S> rstdf;
};

template <typename S>
void check_tokens(const ModelConfig& cfg, std::span<const TokenId> tokens) {
  if (static_cast<int>(tokens.size()) > cfg.max_ctx) {
    raise(ErrorCode::ContextExceeded, "sequence of " + std::to_string(tokens.size()) +
                                          " tokens exceeds context " +
                                          std::to_string(cfg.max_ctx));
  }
  for (const TokenId t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      raise(ErrorCode::UnknownToken, "token id " + std::to_string(t) + " outside vocabulary");
    }
  }
}

template <typename S>
MatX<S> forward_impl(const ModelConfig& cfg, const ParamsT<S>& p,
                     std::span<const TokenId> tokens, const ForwardOptions& opts,
                     const AdapterSet<S>* adapters, FwdCache<S>* cache) {
  check_tokens<S>(cfg, tokens);
  const Eigen::Index T = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index hd = cfg.head_dim;
  const double rate = cfg.dropout_rate;
  const bool train = opts.train_mode && rate > 0.0;
  const S att_scale = S(1.0 / std::sqrt(double(hd)));

  const auto project = [&](const MatX<S>& x, const MatX<S>& w, const VecX<S>& b,
                           AdapterTarget tgt, int layer) {
    MatX<S> y = x * w;
    y.rowwise() += b.transpose();
    if (adapters != nullptr) {
      if (const auto* e = adapters->find(tgt, layer)) {
        const double arate = double(adapters->dropout_rate);
        if (opts.train_mode && arate > 0.0) {
          MatX<S> xd = x;
          apply_dropout(xd, arate, opts.dropout_seed, site_adapter(layer, tgt));
          y.noalias() += (xd * e->b) * e->a * adapters->scale;
        } else {
          y.noalias() += (x * e->b) * e->a * adapters->scale;
        }
      }
    }
    return y;
  };

  MatX<S> x(T, d);
  for (Eigen::Index t = 0; t < T; ++t) {
    x.row(t) = p.tok_emb.row(tokens[static_cast<std::size_t>(t)]) + p.pos_emb.row(t);
  }
  if (train && cfg.dropout_on_embedding) {
    apply_dropout(x, rate, opts.dropout_seed, kSiteEmbed);
  }

  if (cache) cache->layers.resize(static_cast<std::size_t>(cfg.n_layers));

  std::vector<double> exps(static_cast<std::size_t>(T));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& ly = p.layers[static_cast<std::size_t>(l)];
    LayerCache<S> lc;
    layernorm_forward(x, ly.ln1_scale, ly.ln1_bias, lc.n1, lc.h1, lc.rstd1);
    lc.q = project(lc.h1, ly.wq, ly.bq, AdapterTarget::AttnQ, l);
    lc.k = project(lc.h1, ly.wk, ly.bk, AdapterTarget::AttnK, l);
    lc.v = project(lc.h1, ly.wv, ly.bv, AdapterTarget::AttnV, l);

    lc.att_concat.resize(T, d);
    lc.probs.resize(static_cast<std::size_t>(cfg.n_heads));
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto qh = lc.q.middleCols(h * hd, hd);
      const auto kh = lc.k.middleCols(h * hd, hd);
      const auto vh = lc.v.middleCols(h * hd, hd);
      MatX<S> scores = (qh * kh.transpose()) * att_scale;
      MatX<S>& probs = lc.probs[static_cast<std::size_t>(h)];
      probs.setZero(T, T);
      // causal softmax, accumulated in double
      for (Eigen::Index i = 0; i < T; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j <= i; ++j) mx = std::max(mx, double(scores(i, j)));
        double sum = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          const double e = std::exp(double(scores(i, j)) - mx);
          exps[static_cast<std::size_t>(j)] = e;
          sum += e;
        }
        for (Eigen::Index j = 0; j <= i; ++j) {
          probs(i, j) = S(exps[static_cast<std::size_t>(j)] / sum);
        }
      }
      lc.att_concat.middleCols(h * hd, hd).noalias() = probs * vh;
    }

    MatX<S> attn_out = project(lc.att_concat, ly.wo, ly.bo, AdapterTarget::AttnO, l);
    if (train) apply_dropout(attn_out, rate, opts.dropout_seed, site_attn(l));
    x += attn_out;

    layernorm_forward(x, ly.ln2_scale, ly.ln2_bias, lc.n2, lc.h2, lc.rstd2);
    lc.ffn_pre = lc.h2 * ly.w_up;
    lc.ffn_pre.rowwise() += ly.b_up.transpose();
    lc.ffn_act = lc.ffn_pre.unaryExpr([](S u) { return gelu(u); });
    MatX<S> f = lc.ffn_act * ly.w_down;
    f.rowwise() += ly.b_down.transpose();
    if (train) apply_dropout(f, rate, opts.dropout_seed, site_ffn(l));
    x += f;

    if (cache) cache->layers[static_cast<std::size_t>(l)] = std::move(lc);
  }

  MatX<S> nf, hf;
  VecX<S> rstdf;
  layernorm_forward(x, p.final_scale, p.final_bias, nf, hf, rstdf);
  MatX<S> logits = hf * p.w_out;
  if (cache) {
    cache->nf = std::move(nf);
    cache->hf = std::move(hf);
    cache->rstdf = std::move(rstdf);
  }
  return logits;
}

template <typename S>
void backward_impl(const ModelConfig& cfg, const ParamsT<S>& p,
                   std::span<const TokenId> tokens, const ForwardOptions& opts,
                   const AdapterSet<S>* adapters, const FwdCache<S>& c,
                   const MatX<S>& dlogits, ParamsT<S>& g, AdapterSet<S>* ga) {
  const Eigen::Index T = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index d = cfg.d_model;
  const Eigen::Index hd = cfg.head_dim;
  const double rate = cfg.dropout_rate;
  const bool train = opts.train_mode && rate > 0.0;
  const S att_scale = S(1.0 / std::sqrt(double(hd)));

  const auto project_backward = [&](const MatX<S>& x, const MatX<S>& w, const MatX<S>& dy,
                                    MatX<S>& dw, VecX<S>& db, MatX<S>& dx_accum,
                                    AdapterTarget tgt, int layer) {
    dw.noalias() += x.transpose() * dy;
    db += dy.colwise().sum().transpose();
    dx_accum.noalias() += dy * w.transpose();
    if (adapters != nullptr) {
      if (const auto* e = adapters->find(tgt, layer)) {
        const double arate = double(adapters->dropout_rate);
        const bool adrop = opts.train_mode && arate > 0.0;
        MatX<S> xd;
        const MatX<S>* xin = &x;
        if (adrop) {
          xd = x;
          apply_dropout(xd, arate, opts.dropout_seed, site_adapter(layer, tgt));
          xin = &xd;
        }
        MatX<S> dz = (dy * e->a.transpose()) * adapters->scale;
        if (ga != nullptr) {
          auto* ge = ga->find(tgt, layer);
          if (ge != nullptr) {
            MatX<S> z = (*xin) * e->b;
            ge->a.noalias() += adapters->scale * (z.transpose() * dy);
            ge->b.noalias() += xin->transpose() * dz;
          }
        }
        MatX<S> dxa = dz * e->b.transpose();
        if (adrop) apply_dropout(dxa, arate, opts.dropout_seed, site_adapter(layer, tgt));
        dx_accum += dxa;
      }
    }
  };

  g.w_out.noalias() += c.hf.transpose() * dlogits;
  MatX<S> dhf = dlogits * p.w_out.transpose();
  MatX<S> dx = MatX<S>::Zero(T, d);
  layernorm_backward(c.nf, c.rstdf, p.final_scale, dhf, dx, g.final_scale, g.final_bias);

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const auto& ly = p.layers[static_cast<std::size_t>(l)];
    auto& gl = g.layers[static_cast<std::size_t>(l)];
    const LayerCache<S>& lc = c.layers[static_cast<std::size_t>(l)];

    // FFN branch: x <- x + dropout(down(gelu(up(LN2(x)))))
    MatX<S> df = dx;
    if (train) apply_dropout(df, rate, opts.dropout_seed, site_ffn(l));
    gl.w_down.noalias() += lc.ffn_act.transpose() * df;
    gl.b_down += df.colwise().sum().transpose();
    MatX<S> du = (df * ly.w_down.transpose()).cwiseProduct(
        lc.ffn_pre.unaryExpr([](S u) { return gelu_grad(u); }));
    gl.w_up.noalias() += lc.h2.transpose() * du;
    gl.b_up += du.colwise().sum().transpose();
    MatX<S> dh2 = du * ly.w_up.transpose();
    layernorm_backward(lc.n2, lc.rstd2, ly.ln2_scale, dh2, dx, gl.ln2_scale, gl.ln2_bias);

    // attention branch
    MatX<S> dattn = dx;
    if (train) apply_dropout(dattn, rate, opts.dropout_seed, site_attn(l));
    MatX<S> dconcat = MatX<S>::Zero(T, d);
    project_backward(lc.att_concat, ly.wo, dattn, gl.wo, gl.bo, dconcat,
                     AdapterTarget::AttnO, l);

    MatX<S> dq = MatX<S>::Zero(T, d), dk = MatX<S>::Zero(T, d), dv = MatX<S>::Zero(T, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const MatX<S>& probs = lc.probs[static_cast<std::size_t>(h)];
      const auto qh = lc.q.middleCols(h * hd, hd);
      const auto kh = lc.k.middleCols(h * hd, hd);
      const auto vh = lc.v.middleCols(h * hd, hd);
      const auto doh = dconcat.middleCols(h * hd, hd);

      dv.middleCols(h * hd, hd).noalias() += probs.transpose() * doh;
      MatX<S> dprobs = doh * vh.transpose();
      MatX<S> dscores(T, T);
      for (Eigen::Index i = 0; i < T; ++i) {
        double dot = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          dot += double(dprobs(i, j)) * double(probs(i, j));
        }
        for (Eigen::Index j = 0; j <= i; ++j) {
          dscores(i, j) = S(double(probs(i, j)) * (double(dprobs(i, j)) - dot));
        }
        for (Eigen::Index j = i + 1; j < T; ++j) dscores(i, j) = S(0);
      }
      dq.middleCols(h * hd, hd).noalias() += (dscores * kh) * att_scale;
      dk.middleCols(h * hd, hd).noalias() += (dscores.transpose() * qh) * att_scale;
    }

    MatX<S> dh1 = MatX<S>::Zero(T, d);
    project_backward(lc.h1, ly.wq, dq, gl.wq, gl.bq, dh1, AdapterTarget::AttnQ, l);
    project_backward(lc.h1, ly.wk, dk, gl.wk, gl.bk, dh1, AdapterTarget::AttnK, l);
    project_backward(lc.h1, ly.wv, dv, gl.wv, gl.bv, dh1, AdapterTarget::AttnV, l);
    layernorm_backward(lc.n1, lc.rstd1, ly.ln1_scale, dh1, dx, gl.ln1_scale, gl.ln1_bias);
  }

  if (train && cfg.dropout_on_embedding) {
    apply_dropout(dx, rate, opts.dropout_seed, kSiteEmbed);
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    g.tok_emb.row(tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    g.pos_emb.row(t) += dx.row(t);
  }
}

// log-sum-exp of one logits row, in double.
template <typename S>
double row_lse(const MatX<S>& logits, Eigen::Index row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < logits.cols(); ++k) mx = std::max(mx, double(logits(row, k)));
  double sum = 0.0;
  for (Eigen::Index k = 0; k < logits.cols(); ++k) sum += std::exp(double(logits(row, k)) - mx);
  return mx + std::log(sum);
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || head_dim < 1 || n_layers < 0 || d_ffn < 1 ||
      vocab_size < 2 || max_ctx < 1) {
    raise(ErrorCode::InvalidConfig, "non-positive dimension in model config");
  }
  if (n_heads * head_dim != d_model) {
    raise(ErrorCode::InvalidConfig,
          "n_heads * head_dim must equal d_model: " + std::to_string(n_heads) + " * " +
              std::to_string(head_dim) + " != " + std::to_string(d_model));
  }
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) {
    raise(ErrorCode::InvalidConfig, "dropout_rate must lie in [0,1)");
  }
}

template <typename S>
ParamsT<S> ParamsT<S>::zeros(const ModelConfig& cfg) {
  ParamsT<S> p;
  p.tok_emb = MatX<S>::Zero(cfg.vocab_size, cfg.d_model);
  p.pos_emb = MatX<S>::Zero(cfg.max_ctx, cfg.d_model);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& ly : p.layers) {
    ly.ln1_scale = VecX<S>::Zero(cfg.d_model);
    ly.ln1_bias = VecX<S>::Zero(cfg.d_model);
    ly.wq = MatX<S>::Zero(cfg.d_model, cfg.d_model);
    ly.wk = MatX<S>::Zero(cfg.d_model, cfg.d_model);
    ly.wv = MatX<S>::Zero(cfg.d_model, cfg.d_model);
    ly.wo = MatX<S>::Zero(cfg.d_model, cfg.d_model);
    ly.bq = VecX<S>::Zero(cfg.d_model);
    ly.bk = VecX<S>::Zero(cfg.d_model);
    ly.bv = VecX<S>::Zero(cfg.d_model);
    ly.bo = VecX<S>::Zero(cfg.d_model);
    ly.ln2_scale = VecX<S>::Zero(cfg.d_model);
    ly.ln2_bias = VecX<S>::Zero(cfg.d_model);
    ly.w_up = MatX<S>::Zero(cfg.d_model, cfg.d_ffn);
    ly.b_up = VecX<S>::Zero(cfg.d_ffn);
    ly.w_down = MatX<S>::Zero(cfg.d_ffn, cfg.d_model);
    ly.b_down = VecX<S>::Zero(cfg.d_model);
  }
  p.final_scale = VecX<S>::Zero(cfg.d_model);
  p.final_bias = VecX<S>::Zero(cfg.d_model);
  p.w_out = MatX<S>::Zero(cfg.d_model, cfg.vocab_size);
  return p;
}

template <typename S>
void ParamsT<S>::set_zero() {
  for (auto& t : tensor_table(*this)) {
    std::fill(t.data, t.data + t.size, S(0));
  }
}

namespace {

template <typename PT, typename F>
void visit_tensors(PT& p, F&& f) {
  f("tok_emb", p.tok_emb, TensorRole::Embedding);
  f("pos_emb", p.pos_emb, TensorRole::Embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    auto& ly = p.layers[l];
    f(pre + "ln1.scale", ly.ln1_scale, TensorRole::NormScale);
    f(pre + "ln1.bias", ly.ln1_bias, TensorRole::NormBias);
    f(pre + "attn.wq", ly.wq, TensorRole::Weight);
    f(pre + "attn.bq", ly.bq, TensorRole::Bias);
    f(pre + "attn.wk", ly.wk, TensorRole::Weight);
    f(pre + "attn.bk", ly.bk, TensorRole::Bias);
    f(pre + "attn.wv", ly.wv, TensorRole::Weight);
    f(pre + "attn.bv", ly.bv, TensorRole::Bias);
    f(pre + "attn.wo", ly.wo, TensorRole::ResidualWeight);
    f(pre + "attn.bo", ly.bo, TensorRole::Bias);
    f(pre + "ln2.scale", ly.ln2_scale, TensorRole::NormScale);
    f(pre + "ln2.bias", ly.ln2_bias, TensorRole::NormBias);
    f(pre + "ffn.w_up", ly.w_up, TensorRole::Weight);
    f(pre + "ffn.b_up", ly.b_up, TensorRole::Bias);
    f(pre + "ffn.w_down", ly.w_down, TensorRole::ResidualWeight);
    f(pre + "ffn.b_down", ly.b_down, TensorRole::Bias);
  }
  f("final_norm.scale", p.final_scale, TensorRole::NormScale);
  f("final_norm.bias", p.final_bias, TensorRole::NormBias);
  f("w_out", p.w_out, TensorRole::Weight);
}

template <typename Ref, typename PT>
std::vector<Ref> make_table(PT& p) {
  std::vector<Ref> table;
  visit_tensors(p, [&table](const std::string& name, auto& tensor, TensorRole role) {
    Ref r;
    r.name = name;
    using TensorT = std::remove_reference_t<decltype(tensor)>;
    if constexpr (std::remove_const_t<TensorT>::ColsAtCompileTime == 1) {
      r.shape = {static_cast<int>(tensor.size())};
    } else {
      r.shape = {static_cast<int>(tensor.rows()), static_cast<int>(tensor.cols())};
    }
    r.data = tensor.data();
    r.size = static_cast<std::size_t>(tensor.size());
    r.role = role;
    table.push_back(std::move(r));
  });
  return table;
}

}  // namespace

template <typename S>
std::vector<TensorRef<S>> tensor_table(ParamsT<S>& p) {
  return make_table<TensorRef<S>>(p);
}

template <typename S>
std::vector<TensorRef<const S>> tensor_table(const ParamsT<S>& p) {
  return make_table<TensorRef<const S>>(p);
}

std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t d = cfg.d_model, f = cfg.d_ffn, v = cfg.vocab_size, c = cfg.max_ctx;
  const std::int64_t norms = 4 * d;                    // two layer norms, scale+bias
  const std::int64_t attn = 4 * d * d + 4 * d;         // q,k,v,o with biases
  const std::int64_t ffn = d * f + f + f * d + d;      // up, down with biases
  const std::int64_t per_layer = norms + attn + ffn;
  return v * d + c * d + cfg.n_layers * per_layer + 2 * d + d * v;
}

template <typename S>
ParamsT<S> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamsT<S> p = ParamsT<S>::zeros(cfg);
  Rng rng(seed);
  const double base_std = 0.02;
  const double resid_std =
      cfg.n_layers > 0 ? base_std / std::sqrt(2.0 * cfg.n_layers) : base_std;
  for (auto& t : tensor_table(p)) {
    switch (t.role) {
      case TensorRole::Embedding:
      case TensorRole::Weight:
        for (std::size_t i = 0; i < t.size; ++i) t.data[i] = S(rng.next_normal() * base_std);
        break;
      case TensorRole::ResidualWeight:
        for (std::size_t i = 0; i < t.size; ++i) t.data[i] = S(rng.next_normal() * resid_std);
        break;
      case TensorRole::NormScale:
        for (std::size_t i = 0; i < t.size; ++i) t.data[i] = S(1);
        break;
      case TensorRole::NormBias:
      case TensorRole::Bias:
        break;  // already zero
    }
  }
  return p;
}

std::uint64_t params_fingerprint(const Params& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensor_table(p)) {
    h = fnv1a64(t.data, t.size * sizeof(float), h);
  }
  return h;
}

const char* adapter_target_name(AdapterTarget t) {
  switch (t) {
    case AdapterTarget::AttnQ: return "attn_q";
    case AdapterTarget::AttnK: return "attn_k";
    case AdapterTarget::AttnV: return "attn_v";
    case AdapterTarget::AttnO: return "attn_o";
  }
  return "?";
}

template <typename S>
MatX<S> forward(const ModelConfig& cfg, const ParamsT<S>& p, std::span<const TokenId> tokens,
                const ForwardOptions& opts, const AdapterSet<S>* adapters) {
  return forward_impl(cfg, p, tokens, opts, adapters, static_cast<FwdCache<S>*>(nullptr));
}

template <typename S>
double cross_entropy(const MatX<S>& logits, std::span<const TokenId> targets,
                     std::span<const std::uint8_t> mask) {
  if (targets.size() != static_cast<std::size_t>(logits.rows()) ||
      mask.size() != targets.size()) {
    raise(ErrorCode::ShapeMismatch, "logits, targets, and mask disagree on length");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!mask[i]) continue;
    const TokenId t = targets[i];
    if (t < 0 || t >= logits.cols()) {
      raise(ErrorCode::UnknownToken, "target id " + std::to_string(t) + " out of range");
    }
    sum += row_lse(logits, static_cast<Eigen::Index>(i)) -
           double(logits(static_cast<Eigen::Index>(i), t));
    ++n;
  }
  if (n == 0) raise(ErrorCode::EmptyMask, "mask selects no positions");
  return sum / double(n);
}

template <typename S>
double grads(const ModelConfig& cfg, const ParamsT<S>& p, std::span<const EpisodeBatchItem> batch,
             ParamsT<S>& out_grads, bool train_mode, const AdapterSet<S>* adapters,
             AdapterSet<S>* adapter_grads) {
  if (batch.empty()) raise(ErrorCode::InvalidConfig, "empty gradient batch");
  const double b_inv = 1.0 / double(batch.size());
  double total_loss = 0.0;
  for (const EpisodeBatchItem& item : batch) {
    if (item.tokens.size() < 2 || item.mask.size() != item.tokens.size()) {
      raise(ErrorCode::ShapeMismatch, "episode needs >=2 tokens and an aligned mask");
    }
    const ForwardOptions opts{train_mode, item.dropout_seed};
    FwdCache<S> cache;
    const MatX<S> logits = forward_impl(cfg, p, item.tokens, opts, adapters, &cache);
    const Eigen::Index T = logits.rows();
    const Eigen::Index V = logits.cols();

    std::size_t n_masked = 0;
    for (std::size_t j = 1; j < item.tokens.size(); ++j) {
      if (item.mask[j]) ++n_masked;
    }
    if (n_masked == 0) raise(ErrorCode::EmptyMask, "episode mask selects no target positions");

    const double w = b_inv / double(n_masked);
    MatX<S> dlogits = MatX<S>::Zero(T, V);
    double loss_e = 0.0;
    for (Eigen::Index j = 1; j < T; ++j) {
      if (!item.mask[static_cast<std::size_t>(j)]) continue;
      const Eigen::Index row = j - 1;
      const TokenId target = item.tokens[static_cast<std::size_t>(j)];
      const double lse = row_lse(logits, row);
      loss_e += lse - double(logits(row, target));
      for (Eigen::Index k = 0; k < V; ++k) {
        const double prob = std::exp(double(logits(row, k)) - lse);
        dlogits(row, k) = S((prob - (k == target ? 1.0 : 0.0)) * w);
      }
    }
    total_loss += (loss_e / double(n_masked)) * b_inv;
    backward_impl(cfg, p, item.tokens, opts, adapters, cache, dlogits, out_grads,
                  adapter_grads);
  }
  return total_loss;
}

OptState OptState::init(const ModelConfig& cfg) {
  OptState s;
  s.m = Params::zeros(cfg);
  s.v = Params::zeros(cfg);
  return s;
}

double lr_at(const OptHyper& h, std::int64_t next_step) {
  const double peak = double(h.peak_lr);
  if (h.warmup_steps > 0 && next_step <= h.warmup_steps) {
    return peak * double(next_step) / double(h.warmup_steps);
  }
  const std::int64_t decay_total = std::max<std::int64_t>(1, h.total_steps - h.warmup_steps);
  const std::int64_t into = std::min<std::int64_t>(decay_total, next_step - h.warmup_steps);
  const double frac = double(into) / double(decay_total);
  return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

void opt_step(Params& p, const Params& g, OptState& s, const OptHyper& h) {
  const auto gt = tensor_table(g);
  for (const auto& t : gt) {
    for (std::size_t i = 0; i < t.size; ++i) {
      if (!std::isfinite(t.data[i])) {
        raise(ErrorCode::NonFiniteGradient, "non-finite gradient in " + t.name);
      }
    }
  }
  double sq = 0.0;
  for (const auto& t : gt) {
    for (std::size_t i = 0; i < t.size; ++i) sq += double(t.data[i]) * double(t.data[i]);
  }
  const double norm = std::sqrt(sq);
  const double clip =
      (h.clip_norm > 0.0f && norm > double(h.clip_norm)) ? double(h.clip_norm) / norm : 1.0;

  s.step += 1;
  const double lr = lr_at(h, s.step);
  const double b1 = h.beta1, b2 = h.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(s.step));
  const double bc2 = 1.0 - std::pow(b2, double(s.step));

  auto pt = tensor_table(p);
  auto mt = tensor_table(s.m);
  auto vt = tensor_table(s.v);
  for (std::size_t k = 0; k < pt.size(); ++k) {
    const bool decay = pt[k].role == TensorRole::Weight || pt[k].role == TensorRole::ResidualWeight;
    const double wd = decay ? double(h.weight_decay) : 0.0;
    float* pp = pt[k].data;
    float* mm = mt[k].data;
    float* vv = vt[k].data;
    const float* gg = gt[k].data;
    for (std::size_t i = 0; i < pt[k].size; ++i) {
      const double gi = double(gg[i]) * clip;
      const double m = b1 * double(mm[i]) + (1.0 - b1) * gi;
      const double v = b2 * double(vv[i]) + (1.0 - b2) * gi * gi;
      mm[i] = float(m);
      vv[i] = float(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      pp[i] = float(double(pp[i]) - lr * (mhat / (std::sqrt(vhat) + double(h.eps)) +
                                          wd * double(pp[i])));
    }
  }
}

template <typename S>
TokenSeq generate_greedy(const ModelConfig& cfg, const ParamsT<S>& p,
                         std::span<const TokenId> prefix, int max_new,
                         const AdapterSet<S>* adapters) {
  TokenSeq seq(prefix.begin(), prefix.end());
  TokenSeq out;
  for (int i = 0; i < max_new; ++i) {
    if (static_cast<int>(seq.size()) >= cfg.max_ctx) {
      raise(ErrorCode::ContextExceeded, "context filled before EOS");
    }
    const MatX<S> logits = forward(cfg, p, seq, {}, adapters);
    const Eigen::Index last = logits.rows() - 1;
    TokenId best = 0;
    S best_v = logits(last, 0);
    for (Eigen::Index k = 1; k < logits.cols(); ++k) {
      if (logits(last, k) > best_v) {
        best = static_cast<TokenId>(k);
        best_v = logits(last, k);
      }
    }
    seq.push_back(best);
    out.push_back(best);
    if (best == tok::kEos) break;
  }
  return out;
}

template <typename S>
double seq_logprob(const ModelConfig& cfg, const ParamsT<S>& p, std::span<const TokenId> prefix,
                   std::span<const TokenId> continuation, const AdapterSet<S>* adapters) {
  if (continuation.empty()) return 0.0;
  if (prefix.empty()) raise(ErrorCode::InvalidConfig, "scoring needs a nonempty prefix");
  if (static_cast<int>(prefix.size() + continuation.size()) > cfg.max_ctx) {
    raise(ErrorCode::ContextExceeded, "prefix plus continuation exceeds context");
  }
  TokenSeq seq(prefix.begin(), prefix.end());
  seq.insert(seq.end(), continuation.begin(), continuation.end());
  seq.pop_back();  // last token is never an input
  const MatX<S> logits = forward(cfg, p, seq, {}, adapters);
  double sum = 0.0;
  for (std::size_t j = 0; j < continuation.size(); ++j) {
    const Eigen::Index row = static_cast<Eigen::Index>(prefix.size() + j) - 1;
    const TokenId target = continuation[j];
    if (target < 0 || target >= cfg.vocab_size) {
      raise(ErrorCode::UnknownToken, "continuation token out of range");
    }
    sum += double(logits(row, target)) - row_lse(logits, row);
  }
  return sum;
}

// explicit instantiations
template struct ParamsT<float>;
template struct ParamsT<double>;
template std::vector<TensorRef<float>> tensor_table<float>(ParamsT<float>&);
template std::vector<TensorRef<double>> tensor_table<double>(ParamsT<double>&);
template std::vector<TensorRef<const float>> tensor_table<float>(const ParamsT<float>&);
template std::vector<TensorRef<const double>> tensor_table<double>(const ParamsT<double>&);
template ParamsT<float> init_model<float>(const ModelConfig&, std::uint64_t);
template ParamsT<double> init_model<double>(const ModelConfig&, std::uint64_t);
template MatX<float> forward<float>(const ModelConfig&, const ParamsT<float>&,
                                    std::span<const TokenId>, const ForwardOptions&,
                                    const AdapterSet<float>*);
template MatX<double> forward<double>(const ModelConfig&, const ParamsT<double>&,
                                      std::span<const TokenId>, const ForwardOptions&,
                                      const AdapterSet<double>*);
template double cross_entropy<float>(const MatX<float>&, std::span<const TokenId>,
                                     std::span<const std::uint8_t>);
template double cross_entropy<double>(const MatX<double>&, std::span<const TokenId>,
                                      std::span<const std::uint8_t>);
template double grads<float>(const ModelConfig&, const ParamsT<float>&,
                             std::span<const EpisodeBatchItem>, ParamsT<float>&, bool,
                             const AdapterSet<float>*, AdapterSet<float>*);
template double grads<double>(const ModelConfig&, const ParamsT<double>&,
                              std::span<const EpisodeBatchItem>, ParamsT<double>&, bool,
                              const AdapterSet<double>*, AdapterSet<double>*);
template TokenSeq generate_greedy<float>(const ModelConfig&, const ParamsT<float>&,
                                         std::span<const TokenId>, int,
                                         const AdapterSet<float>*);
template TokenSeq generate_greedy<double>(const ModelConfig&, const ParamsT<double>&,
                                          std::span<const TokenId>, int,
                                          const AdapterSet<double>*);
template double seq_logprob<float>(const ModelConfig&, const ParamsT<float>&,
                                   std::span<const TokenId>, std::span<const TokenId>,
                                   const AdapterSet<float>*);
template double seq_logprob<double>(const ModelConfig&, const ParamsT<double>&,
                                    std::span<const TokenId>, std::span<const TokenId>,
                                    const AdapterSet<double>*);

}  // namespace arc
