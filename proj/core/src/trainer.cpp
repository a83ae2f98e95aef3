#include "dial/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace dial {

void TrainConfig::validate() const {
  if (lambda_da < 0.0) throw std::invalid_argument("config: lambda_da < 0");
  if (lambda_gp < 0.0) throw std::invalid_argument("config: lambda_gp < 0");
  if (critic_iters < 1) throw std::invalid_argument("config: critic_iters < 1");
  if (!(lr_main > 0.0)) throw std::invalid_argument("config: lr_main <= 0");
  if (!(lr_critic > 0.0)) throw std::invalid_argument("config: lr_critic <= 0");
  if (weight_decay_main < 0.0 || weight_decay_critic < 0.0) {
    throw std::invalid_argument("config: negative weight decay");
  }
  if (batch_src < 1 || batch_tgt < 1) {
    throw std::invalid_argument("config: batch sizes must be >= 1");
  }
}

TrainState make_train_state(const ModelConfig& mc, const TrainConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ModelParams params = init_params(mc, rng);
  const std::size_t n_main = flatten_main(params).size();
  const std::size_t n_critic = flatten_critic(params).size();
  return TrainState{std::move(params),
                    AdamW(n_main, cfg.lr_main, cfg.weight_decay_main),
                    AdamW(n_critic, cfg.lr_critic, cfg.weight_decay_critic),
                    std::move(rng)};
}

namespace {

void check_finite(double v, std::size_t step, const char* component) {
  if (!std::isfinite(v)) throw NumericError(step, component);
}

// Gathers gradients of the bound leaves in the same order the flatteners
// use, so optimizer state lines up with parameter vectors.
void gather_layer_grads(const ad::Gradients& grads,
                        const std::vector<ad::MlpLayerRef>& layers,
                        std::vector<double>& out) {
  for (const auto& layer : layers) {
    for (const auto t : {layer.weight, layer.bias}) {
      const Tensor g = grads.at(t);
      out.insert(out.end(), g.data.begin(), g.data.end());
    }
  }
}

}  // namespace

LossBundle critic_phase(TrainState& state,
                        const std::vector<std::vector<double>>& src_embeddings,
                        const std::vector<std::vector<double>>& tgt_embeddings,
                        const TrainConfig& cfg) {
  LossBundle bundle;
  for (int iter = 0; iter < cfg.critic_iters; ++iter) {
    ad::Graph g;
    const ad::MlpRef critic = bind_critic(g, state.params.psi, true);
    std::vector<ad::Value> src_vals, tgt_vals;
    src_vals.reserve(src_embeddings.size());
    for (const auto& e : src_embeddings) {
      src_vals.push_back(g.constant(Tensor::vector(std::vector<double>(e))));
    }
    tgt_vals.reserve(tgt_embeddings.size());
    for (const auto& e : tgt_embeddings) {
      tgt_vals.push_back(g.constant(Tensor::vector(std::vector<double>(e))));
    }
    const ad::Value gap = wasserstein_gap_graph(critic, src_vals, tgt_vals);
    const ad::Value penalty =
        gradient_penalty_graph(g, critic, src_embeddings, tgt_embeddings,
                               state.rng);
    const ad::Value loss =
        ad::add(ad::scalar_mul(gap, -1.0), ad::scalar_mul(penalty, cfg.lambda_gp));
    if (iter == 0) {
      bundle.wd_gap = gap.scalar();
      bundle.grad_penalty = penalty.scalar();
      bundle.critic_loss = loss.scalar();
    }
    check_finite(loss.scalar(), state.step, "critic_loss");

    const ad::Gradients grads = g.backward(loss);
    std::vector<double> flat_grad;
    gather_layer_grads(grads, critic.hidden, flat_grad);
    {
      const Tensor gw = grads.at(critic.out_weight);
      flat_grad.insert(flat_grad.end(), gw.data.begin(), gw.data.end());
      const Tensor gb = grads.at(critic.out_bias);
      flat_grad.insert(flat_grad.end(), gb.data.begin(), gb.data.end());
    }
    std::vector<double> flat = flatten_critic(state.params);
    state.opt_critic.step(flat, flat_grad);
    unflatten_critic(state.params, flat);
  }
  return bundle;
}

LossBundle embedder_phase(TrainState& state,
                          std::span<const PreferenceTriple> batch_src,
                          std::span<const Example> batch_tgt,
                          const TrainConfig& cfg, bool include_gap) {
  LossBundle bundle;
  ad::Graph g;
  const BoundEmbedder theta = bind_embedder(g, state.params.theta, true);
  const ad::Value phi = bind_reward(g, state.params.phi, true);

  const ad::Value src_loss = source_preference_loss_graph(theta, phi, batch_src);
  bundle.src_loss = src_loss.scalar();
  check_finite(bundle.src_loss, state.step, "src_loss");

  ad::Value total = src_loss;
  if (include_gap) {
    const ad::MlpRef critic = bind_critic(g, state.params.psi, false);
    std::vector<ad::Value> src_embs, tgt_embs;
    for (const auto& triple : batch_src) {
      src_embs.push_back(embed_graph(
          theta, g.constant(Tensor::vector(Example{triple.x, triple.y_pos}.input()))));
    }
    for (const auto& triple : batch_src) {
      for (const auto& y_neg : triple.y_neg) {
        src_embs.push_back(embed_graph(
            theta, g.constant(Tensor::vector(Example{triple.x, y_neg}.input()))));
      }
    }
    for (const auto& ex : batch_tgt) {
      tgt_embs.push_back(
          embed_graph(theta, g.constant(Tensor::vector(ex.input()))));
    }
    const ad::Value gap = wasserstein_gap_graph(critic, src_embs, tgt_embs);
    total = ad::add(src_loss, ad::scalar_mul(gap, cfg.lambda_da));
  }
  bundle.embedder_da_loss = total.scalar();
  check_finite(bundle.embedder_da_loss, state.step, "embedder_loss");

  const ad::Gradients grads = g.backward(total);
  std::vector<double> flat_grad;
  gather_layer_grads(grads, theta.layers, flat_grad);
  {
    const Tensor gphi = grads.at(phi);
    flat_grad.insert(flat_grad.end(), gphi.data.begin(), gphi.data.end());
  }
  std::vector<double> flat = flatten_main(state.params);
  state.opt_main.step(flat, flat_grad);
  unflatten_main(state.params, flat);
  return bundle;
}

LossBundle train_step(TrainState& state,
                      std::span<const PreferenceTriple> batch_src,
                      std::span<const Example> batch_tgt,
                      const TrainConfig& cfg) {
  if (batch_src.empty()) {
    throw std::invalid_argument("train_step: empty source batch");
  }
  LossBundle bundle;
  if (cfg.critic_enabled) {
    if (batch_tgt.empty()) {
      throw std::invalid_argument("train_step: empty target batch");
    }
    // src_all = chosen + rejected, embedded under frozen theta.
    std::vector<std::vector<double>> src_embs, tgt_embs;
    for (const auto& triple : batch_src) {
      src_embs.push_back(
          embed(state.params.theta, Example{triple.x, triple.y_pos}.input()));
    }
    for (const auto& triple : batch_src) {
      for (const auto& y_neg : triple.y_neg) {
        src_embs.push_back(
            embed(state.params.theta, Example{triple.x, y_neg}.input()));
      }
    }
    for (const auto& ex : batch_tgt) {
      tgt_embs.push_back(embed(state.params.theta, ex.input()));
    }
    bundle = critic_phase(state, src_embs, tgt_embs, cfg);
  }
  const bool include_gap = cfg.critic_enabled && cfg.lambda_da > 0.0;
  const LossBundle emb = embedder_phase(state, batch_src, batch_tgt, cfg,
                                        include_gap);
  bundle.src_loss = emb.src_loss;
  bundle.embedder_da_loss = emb.embedder_da_loss;
  ++state.step;
  return bundle;
}

namespace {

// Cycling stream over shuffled indices; reshuffles on wrap.
class IndexStream {
 public:
  IndexStream(std::size_t n, Rng& rng) : idx_(n), rng_(rng) {
    for (std::size_t i = 0; i < n; ++i) idx_[i] = i;
    rng_.shuffle(idx_);
  }

  std::vector<std::size_t> take(std::size_t want) {
    std::vector<std::size_t> out;
    out.reserve(want);
    while (out.size() < want) {
      if (pos_ == idx_.size()) {
        // Partial batch at the stream end; the next take reshuffles.
        if (!out.empty()) break;
        rng_.shuffle(idx_);
        pos_ = 0;
      }
      out.push_back(idx_[pos_++]);
    }
    return out;
  }

  void start_epoch() {
    rng_.shuffle(idx_);
    pos_ = 0;
  }

 private:
  std::vector<std::size_t> idx_;
  std::size_t pos_ = 0;
  Rng& rng_;
};

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

TrainResult train(const TrainData& data, const ModelConfig& mc,
                  const TrainConfig& cfg, const EvalHooks& hooks,
                  const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  if (data.src_triples.empty()) {
    throw std::invalid_argument("train: empty source preference set");
  }
  if (cfg.critic_enabled && data.tgt_examples.empty()) {
    throw std::invalid_argument("train: empty target set with critic enabled");
  }

  TrainState state = make_train_state(mc, cfg);
  TrainResult result;
  if (cfg.epochs == 0) {
    result.params = state.params;
    result.rng_state = state.rng.state();
    return result;
  }

  IndexStream src_stream(data.src_triples.size(), state.rng);
  std::optional<IndexStream> tgt_stream;
  if (cfg.critic_enabled) {
    tgt_stream.emplace(data.tgt_examples.size(), state.rng);
  }

  const std::size_t src_batches =
      ceil_div(data.src_triples.size(), cfg.batch_src);
  const std::size_t steps_per_epoch =
      cfg.critic_enabled
          ? std::max(src_batches,
                     ceil_div(data.tgt_examples.size(), cfg.batch_tgt))
          : src_batches;

  auto run_eval = [&](StepRecord& rec) {
    if (hooks.eval_src) rec.eval_accuracy_src = hooks.eval_src(state.params);
    if (hooks.eval_tgt) rec.eval_accuracy_tgt = hooks.eval_tgt(state.params);
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0) {
      src_stream.start_epoch();
      if (tgt_stream) tgt_stream->start_epoch();
    }
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<PreferenceTriple> batch_src;
      for (const std::size_t i : src_stream.take(cfg.batch_src)) {
        batch_src.push_back(data.src_triples[i]);
      }
      std::vector<Example> batch_tgt;
      if (tgt_stream) {
        for (const std::size_t i : tgt_stream->take(cfg.batch_tgt)) {
          batch_tgt.push_back(data.tgt_examples[i]);
        }
      }
      StepRecord rec;
      rec.losses = train_step(state, batch_src, batch_tgt, cfg);
      rec.step = state.step;
      rec.epoch = epoch;
      const bool epoch_end = (s + 1 == steps_per_epoch);
      if (epoch_end || (cfg.eval_every > 0 && state.step % cfg.eval_every == 0)) {
        run_eval(rec);
      }
      result.metrics.push_back(rec);
      if (on_step) on_step(result.metrics.back());
    }
  }
  result.params = state.params;
  result.steps = state.step;
  result.rng_state = state.rng.state();
  return result;
}

}  // namespace dial
