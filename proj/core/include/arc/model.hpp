#pragma once

#include <memory>
#include <span>

#include "arc/adapt.hpp"
#include "arc/tinylm.hpp"

namespace arc {

// Generation/scoring backend consumed by the ensemble and the harness.
// Implementations must be safe to call concurrently from several threads.
class Model {
 public:
  virtual ~Model() = default;
  // Greedy continuation (excluding the prefix); throws ContextExceeded.
  virtual TokenSeq generate(std::span<const TokenId> prefix, int max_new) const = 0;
  // Sum of per-token log-probabilities of continuation after prefix.
  virtual double score(std::span<const TokenId> prefix,
                       std::span<const TokenId> continuation) const = 0;
  virtual int max_context() const = 0;
};

// TinyLM-backed model, optionally with adapters attached.
class TinyLmModel : public Model {
 public:
  TinyLmModel(const Params& params, const ModelConfig& cfg) : params_(&params), cfg_(cfg) {}
  explicit TinyLmModel(AdaptedModel adapted)
      : adapted_(std::make_shared<AdaptedModel>(std::move(adapted))),
        params_(&adapted_->effective_params()),
        cfg_(adapted_->config) {}

  TokenSeq generate(std::span<const TokenId> prefix, int max_new) const override {
    return generate_greedy<float>(cfg_, *params_, prefix, max_new, adapter_ptr());
  }
  double score(std::span<const TokenId> prefix,
               std::span<const TokenId> continuation) const override {
    return seq_logprob<float>(cfg_, *params_, prefix, continuation, adapter_ptr());
  }
  int max_context() const override { return cfg_.max_ctx; }

  const ModelConfig& config() const { return cfg_; }
  const AdaptedModel* adapted() const { return adapted_.get(); }

 private:
  const AdapterSet<float>* adapter_ptr() const {
    return adapted_ ? adapted_->adapter_ptr() : nullptr;
  }

  std::shared_ptr<AdaptedModel> adapted_;
  const Params* params_;
  ModelConfig cfg_;
};

}  // namespace arc
