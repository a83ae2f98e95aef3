#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dial/datagen.hpp"
#include "dial/model.hpp"

namespace dial::eval {

using ScoreFn = std::function<double(const Example&)>;

// Per (chosen, rejected) pair: 1 if r(y+) > r(y-), 0.5 on exact ties, 0
// otherwise; mean over all pairs.
double preference_accuracy(const ScoreFn& reward,
                           std::span<const PreferenceTriple> triples);
double preference_accuracy(const ModelParams& params,
                           std::span<const PreferenceTriple> triples);

// Instance-level scoring for odd-one-out style tasks: the highest-scored
// candidate must be the chosen one. Score ties split credit uniformly, so a
// constant scorer earns 1/k per instance.
double top1_accuracy(const ScoreFn& reward,
                     std::span<const PreferenceTriple> triples);
double top1_accuracy(const ModelParams& params,
                     std::span<const PreferenceTriple> triples);

struct Correlations {
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
};

// Pearson's r and Spearman's rho (average ranks for ties). Degenerate
// variance on either side is an error, never a NaN.
Correlations correlations(std::span<const double> pred,
                          std::span<const double> truth);

// A ground-truth-oriented triplet: win and loss share the context.
struct OrientedTriple {
  Example win;
  Example loss;
};

// All unordered pairs within each same-context group of the sample, kept
// when their f values differ and oriented by f.
std::vector<OrientedTriple> f_ordered_triples(
    std::span<const datagen::GroundTruthRow> sample);

// Expected disagreement: mean sigmoid(r(loss) - r(win)).
double expected_disagreement(const ScoreFn& reward,
                             std::span<const OrientedTriple> triples);
double expected_disagreement(const ModelParams& params,
                             std::span<const OrientedTriple> triples);

struct BoundReport {
  double eps_S = 0.0;
  double eps_T = 0.0;
  double K = 0.0;
  double L_sigma = 0.25;
  double W1 = 0.0;  // input-space, drives the bound
  double rhs = 0.0;
  bool holds = false;
  // Extras: the critic operates on embeddings, so both distances are
  // reported.
  double w1_embedding = 0.0;
  std::size_t n = 0;
};

// Executable form of the generalization bound on equal-size samples:
// eps_T <= eps_S + 2 K L_sigma W1, with exact assignment W1 over
// concat(x, y) and the spectral-product K (a valid over-estimate, which
// only loosens the right-hand side).
BoundReport theorem1_check(const ModelParams& params,
                           std::span<const datagen::GroundTruthRow> src_sample,
                           std::span<const datagen::GroundTruthRow> tgt_sample);

// Samples random triplet pairs (shared context, standard normal features)
// and returns the largest observed ratio
//   |g(t) - g(t_bar)| / (2 K L_sigma rho~),
// which never exceeds 1 when K bounds the reward's Lipschitz constant.
double lemma1_check(const ModelParams& params, std::size_t n_pairs,
                    std::uint64_t seed, std::size_t x_dim, std::size_t y_dim);

struct ProjectedPoint {
  double pc1 = 0.0;
  double pc2 = 0.0;
  std::string domain_tag;
  std::string label_tag;
};

// Centers the embeddings and projects onto the top-2 principal directions
// (power iteration with deflation, tol 1e-9, max 500 iterations). Sign
// convention: each component's largest-magnitude coordinate is positive. A
// rank-deficient second component degrades to the zero vector.
std::vector<ProjectedPoint> project_embeddings(
    const ModelParams& params, std::span<const Example> examples,
    std::span<const std::pair<std::string, std::string>> tags);

void write_projection_csv(const std::string& path,
                          std::span<const ProjectedPoint> points);

}  // namespace dial::eval
