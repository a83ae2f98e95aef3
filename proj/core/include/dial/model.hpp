#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dial/autodiff.hpp"
#include "dial/rng.hpp"
#include "dial/tensor.hpp"

namespace dial {

// A prompt-response pair reduced to fixed-length feature vectors. The model
// consumes concat(x, y); x may be empty for context-free tasks.
struct Example {
  std::vector<double> x;
  std::vector<double> y;

  std::vector<double> input() const;
};

// (context, chosen response, one or more rejected responses).
struct PreferenceTriple {
  std::vector<double> x;
  std::vector<double> y_pos;
  std::vector<std::vector<double>> y_neg;
};

struct DenseLayer {
  Tensor weight;  // {out, in}
  Tensor bias;    // {out}
  ad::Activation act = ad::Activation::Gelu;
};

// Shared embedder theta: an MLP over feature vectors with an activation
// after every layer.
struct EmbedderParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }
};

// Reward head phi: single weight vector, no bias.
struct RewardHeadParams {
  Tensor weight;  // {embed_dim}
};

// Critic head psi: MLP with scalar output.
struct CriticParams {
  std::vector<DenseLayer> hidden;
  Tensor out_weight;  // {h_last}
  Tensor out_bias;    // scalar
};

struct ModelConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> embed_layers = {64, 32};
  std::vector<std::size_t> critic_layers = {32, 16};

  std::size_t embed_dim() const { return embed_layers.back(); }
};

struct ModelParams {
  ModelConfig config;
  EmbedderParams theta;
  RewardHeadParams phi;
  CriticParams psi;
};

// Glorot-uniform weights, zero biases. Draw order is fixed: theta layers,
// phi, psi.
ModelParams init_params(const ModelConfig& config, Rng& rng);

// Plain (graph-free) forward passes for evaluation paths.
std::vector<double> embed(const EmbedderParams& theta,
                          std::span<const double> input);
double reward_score(const ModelParams& params, const Example& ex);
double critic_score(const ModelParams& params, const Example& ex);
double critic_score_embedding(const CriticParams& psi,
                              std::span<const double> embedding);

// Graph-building counterparts used in training.
struct BoundEmbedder {
  std::vector<ad::MlpLayerRef> layers;
};

BoundEmbedder bind_embedder(ad::Graph& g, const EmbedderParams& theta,
                            bool trainable);
ad::Value embed_graph(const BoundEmbedder& emb, ad::Value input);
ad::MlpRef bind_critic(ad::Graph& g, const CriticParams& psi, bool trainable);
ad::Value bind_reward(ad::Graph& g, const RewardHeadParams& phi,
                      bool trainable);

// Largest singular value by power iteration on W^T W (200 iterations,
// tol 1e-9); throws with the residual if it fails to settle.
double spectral_norm(const Tensor& w);

// sup |gelu'| located by grid search over [-6, 6] with step 1e-4.
double gelu_prime_sup();
double activation_lipschitz(ad::Activation act);

// Upper bound on the Lipschitz constant of the reward path:
// ||phi||_2 * prod sigma_max(W_layer) * prod L_act.
double lipschitz_upper_bound(const EmbedderParams& theta,
                             const RewardHeadParams& phi);

// Parameter group flattening in a fixed order (layer weights then biases,
// then heads) for the optimizer.
std::vector<double> flatten_main(const ModelParams& p);    // theta + phi
std::vector<double> flatten_critic(const ModelParams& p);  // psi
void unflatten_main(ModelParams& p, std::span<const double> flat);
void unflatten_critic(ModelParams& p, std::span<const double> flat);

struct Checkpoint {
  ModelParams params;
  std::string config_json;  // run configuration, verbatim
  std::array<std::uint64_t, 4> rng_state{};
  std::uint64_t step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dial
