#include "dial/losses.hpp"

#include <stdexcept>
#include <string>

namespace dial {

namespace {

ad::Value mean_of(ad::Graph& g, const std::vector<ad::Value>& terms) {
  ad::Value acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return ad::scalar_mul(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

ad::Value source_preference_loss_graph(const BoundEmbedder& theta,
                                       ad::Value phi,
                                       std::span<const PreferenceTriple> batch) {
  if (batch.empty()) {
    throw std::invalid_argument("source_preference_loss: empty batch");
  }
  ad::Graph& g = *phi.graph;
  std::vector<ad::Value> terms;
  for (const auto& triple : batch) {
    if (triple.y_neg.empty()) {
      throw std::invalid_argument(
          "source_preference_loss: triple without rejected responses");
    }
    Example chosen{triple.x, triple.y_pos};
    const ad::Value emb_pos =
        embed_graph(theta, g.constant(Tensor::vector(chosen.input())));
    const ad::Value r_pos = ad::dot(phi, emb_pos);
    for (const auto& y_neg : triple.y_neg) {
      Example rejected{triple.x, y_neg};
      const ad::Value emb_neg =
          embed_graph(theta, g.constant(Tensor::vector(rejected.input())));
      const ad::Value r_neg = ad::dot(phi, emb_neg);
      terms.push_back(
          ad::scalar_mul(ad::log_sigmoid(ad::sub(r_pos, r_neg)), -1.0));
    }
  }
  return mean_of(g, terms);
}

double source_preference_loss(const ModelParams& params,
                              std::span<const PreferenceTriple> batch) {
  if (batch.empty()) {
    throw std::invalid_argument("source_preference_loss: empty batch");
  }
  double acc = 0.0;
  std::size_t pairs = 0;
  for (const auto& triple : batch) {
    if (triple.y_neg.empty()) {
      throw std::invalid_argument(
          "source_preference_loss: triple without rejected responses");
    }
    const double r_pos = reward_score(params, {triple.x, triple.y_pos});
    for (const auto& y_neg : triple.y_neg) {
      const double r_neg = reward_score(params, {triple.x, y_neg});
      acc += -ad::log_sigmoid_scalar(r_pos - r_neg);
      ++pairs;
    }
  }
  return acc / static_cast<double>(pairs);
}

ad::Value wasserstein_gap_graph(const ad::MlpRef& critic,
                                std::span<const ad::Value> src_embeddings,
                                std::span<const ad::Value> tgt_embeddings) {
  if (src_embeddings.empty() || tgt_embeddings.empty()) {
    throw std::invalid_argument("wasserstein_gap: empty batch");
  }
  ad::Graph& g = *critic.out_weight.graph;
  std::vector<ad::Value> src_scores, tgt_scores;
  src_scores.reserve(src_embeddings.size());
  for (const auto& emb : src_embeddings) {
    src_scores.push_back(ad::mlp_forward(critic, emb).score);
  }
  tgt_scores.reserve(tgt_embeddings.size());
  for (const auto& emb : tgt_embeddings) {
    tgt_scores.push_back(ad::mlp_forward(critic, emb).score);
  }
  return ad::sub(mean_of(g, src_scores), mean_of(g, tgt_scores));
}

double wasserstein_gap(const ModelParams& params,
                       std::span<const Example> src_batch,
                       std::span<const Example> tgt_batch) {
  if (src_batch.empty() || tgt_batch.empty()) {
    throw std::invalid_argument("wasserstein_gap: empty batch");
  }
  double src_mean = 0.0;
  for (const auto& ex : src_batch) src_mean += critic_score(params, ex);
  src_mean /= static_cast<double>(src_batch.size());
  double tgt_mean = 0.0;
  for (const auto& ex : tgt_batch) tgt_mean += critic_score(params, ex);
  tgt_mean /= static_cast<double>(tgt_batch.size());
  return src_mean - tgt_mean;
}

ad::Value gradient_penalty_graph(ad::Graph& g, const ad::MlpRef& critic,
                                 const std::vector<std::vector<double>>& src_embeddings,
                                 const std::vector<std::vector<double>>& tgt_embeddings,
                                 Rng& rng) {
  const std::size_t ns = src_embeddings.size();
  const std::size_t nt = tgt_embeddings.size();
  if (ns == 0 || nt == 0) {
    throw std::invalid_argument("gradient_penalty: empty batch");
  }
  const std::size_t n = std::max(ns, nt);

  // The larger side is a shuffled permutation; the smaller side is sampled
  // with replacement.
  auto pairing = [&](std::size_t size) {
    std::vector<std::size_t> idx;
    idx.reserve(n);
    if (size == n) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
      rng.shuffle(idx);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        idx.push_back(static_cast<std::size_t>(rng.below(size)));
      }
    }
    return idx;
  };
  const auto src_idx = pairing(ns);
  const auto tgt_idx = pairing(nt);

  std::vector<ad::Value> terms;
  terms.reserve(n);
  const ad::Value one = g.constant(1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = rng.uniform();
    const auto& zs = src_embeddings[src_idx[i]];
    const auto& zt = tgt_embeddings[tgt_idx[i]];
    if (zs.size() != zt.size()) {
      throw ShapeError("gradient_penalty: embedding dims " +
                       std::to_string(zs.size()) + " vs " +
                       std::to_string(zt.size()));
    }
    std::vector<double> z(zs.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      z[k] = eps * zs[k] + (1.0 - eps) * zt[k];
    }
    const ad::Value z_hat = g.constant(Tensor::vector(std::move(z)));
    const ad::Value grad = ad::input_gradient_graph(critic, z_hat);
    terms.push_back(ad::square(ad::sub(ad::norm(grad), one)));
  }
  return mean_of(g, terms);
}

double critic_objective(double gap, double penalty, double lambda_gp) {
  if (lambda_gp < 0.0) {
    throw std::invalid_argument("critic_objective: lambda_gp < 0");
  }
  return -gap + lambda_gp * penalty;
}

double embedder_objective(double src_loss, double gap, double lambda_da) {
  if (lambda_da < 0.0) {
    throw std::invalid_argument("embedder_objective: lambda_da < 0");
  }
  return src_loss + lambda_da * gap;
}

}  // namespace dial
