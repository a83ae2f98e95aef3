#pragma once

#include <span>
#include <vector>

#include "dial/autodiff.hpp"
#include "dial/model.hpp"
#include "dial/rng.hpp"

namespace dial {

// Per-step loss components, recorded before the updates they drive.
struct LossBundle {
  double src_loss = 0.0;
  double wd_gap = 0.0;
  double grad_penalty = 0.0;
  double critic_loss = 0.0;
  double embedder_da_loss = 0.0;
};

// Bradley-Terry source loss: mean over all (chosen, rejected) pairs of
// -log sigmoid(r(x,y+) - r(x,y-)). With k rejected per chosen all k pairs
// contribute.
ad::Value source_preference_loss_graph(const BoundEmbedder& theta,
                                       ad::Value phi,
                                       std::span<const PreferenceTriple> batch);
double source_preference_loss(const ModelParams& params,
                              std::span<const PreferenceTriple> batch);

// Mean critic score on source minus mean critic score on target; positive
// when the critic rates source higher.
ad::Value wasserstein_gap_graph(const ad::MlpRef& critic,
                                std::span<const ad::Value> src_embeddings,
                                std::span<const ad::Value> tgt_embeddings);
double wasserstein_gap(const ModelParams& params,
                       std::span<const Example> src_batch,
                       std::span<const Example> tgt_batch);

// Mean (||grad_z d(z_hat)|| - 1)^2 at random interpolates between shuffled
// source/target embedding pairings. Embeddings enter as constants (frozen
// embedder); the penalty stays differentiable in the critic parameters via
// input_gradient_graph. Draw order: source pairing, target pairing, then
// one epsilon per pair.
ad::Value gradient_penalty_graph(ad::Graph& g, const ad::MlpRef& critic,
                                 const std::vector<std::vector<double>>& src_embeddings,
                                 const std::vector<std::vector<double>>& tgt_embeddings,
                                 Rng& rng);

// -gap + lambda_gp * penalty, minimized w.r.t. the critic only.
double critic_objective(double gap, double penalty, double lambda_gp);

// src_loss + lambda_da * gap; gradients flow to theta (both terms) and phi
// (first term only).
double embedder_objective(double src_loss, double gap, double lambda_da);

}  // namespace dial
