#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dial/losses.hpp"
#include "dial/model.hpp"
#include "dial/optim.hpp"
#include "dial/rng.hpp"

namespace dial {

struct TrainConfig {
  double lambda_da = 0.01;
  double lambda_gp = 1.0;
  int critic_iters = 3;
  double lr_main = 5e-5;
  double lr_critic = 1e-4;
  double weight_decay_main = 0.0;
  double weight_decay_critic = 1e-3;
  std::size_t batch_src = 8;
  std::size_t batch_tgt = 8;
  std::size_t epochs = 3;
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;
  bool critic_enabled = true;

  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBundle losses;
  std::optional<double> eval_accuracy_src;
  std::optional<double> eval_accuracy_tgt;
};

using RunMetrics = std::vector<StepRecord>;

// Raised when a loss goes non-finite; adversarial training failures abort
// loudly rather than skipping steps.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::size_t step_index, std::string component_name)
      : std::runtime_error("non-finite " + component_name + " at step " +
                           std::to_string(step_index)),
        step(step_index),
        component(std::move(component_name)) {}

  std::size_t step;
  std::string component;
};

// One training run's mutable state: parameters, the two optimizers and the
// run PRNG. Single-threaded by construction.
struct TrainState {
  ModelParams params;
  AdamW opt_main;
  AdamW opt_critic;
  Rng rng;
  std::size_t step = 0;
};

TrainState make_train_state(const ModelConfig& mc, const TrainConfig& cfg);

// critic_iters updates of psi minimizing -gap + lambda_gp * penalty on the
// given frozen embeddings. Never touches theta or phi. Returns the losses
// measured at the first iteration, before any update.
LossBundle critic_phase(TrainState& state,
                        const std::vector<std::vector<double>>& src_embeddings,
                        const std::vector<std::vector<double>>& tgt_embeddings,
                        const TrainConfig& cfg);

// One fused optimizer step on theta and phi for src_loss + lambda_da * gap,
// with the critic frozen. Never touches psi. include_gap controls whether
// the gap term is built at all.
LossBundle embedder_phase(TrainState& state,
                          std::span<const PreferenceTriple> batch_src,
                          std::span<const Example> batch_tgt,
                          const TrainConfig& cfg, bool include_gap);

// Full step per the training algorithm: critic phase on frozen embeddings
// of the batch (chosen+rejected source vs target), then the fused
// embedder/reward step.
LossBundle train_step(TrainState& state,
                      std::span<const PreferenceTriple> batch_src,
                      std::span<const Example> batch_tgt,
                      const TrainConfig& cfg);

struct TrainData {
  std::vector<PreferenceTriple> src_triples;
  std::vector<Example> tgt_examples;
};

struct EvalHooks {
  std::function<double(const ModelParams&)> eval_src;  // may be null
  std::function<double(const ModelParams&)> eval_tgt;  // may be null
};

struct TrainResult {
  ModelParams params;
  RunMetrics metrics;
  std::size_t steps = 0;
  std::array<std::uint64_t, 4> rng_state{};
};

// Epoch loop with reshuffled batching. An epoch covers the longer of the
// two streams; the shorter one cycles with a reshuffle. With the critic
// disabled an epoch is one pass over the source preferences and the target
// stream is not consumed at all. on_step, when set, is called after every
// step with the record just appended.
TrainResult train(const TrainData& data, const ModelConfig& mc,
                  const TrainConfig& cfg, const EvalHooks& hooks = {},
                  const std::function<void(const StepRecord&)>& on_step = {});

}  // namespace dial
