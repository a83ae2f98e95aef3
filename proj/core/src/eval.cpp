#include "dial/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "dial/autodiff.hpp"
#include "dial/format.hpp"
#include "dial/oracle.hpp"
#include "dial/rng.hpp"

namespace dial::eval {

double preference_accuracy(const ScoreFn& reward,
                           std::span<const PreferenceTriple> triples) {
  if (triples.empty()) {
    throw std::invalid_argument("preference_accuracy: empty input");
  }
  double acc = 0.0;
  std::size_t pairs = 0;
  for (const auto& t : triples) {
    const double r_pos = reward(Example{t.x, t.y_pos});
    for (const auto& y_neg : t.y_neg) {
      const double r_neg = reward(Example{t.x, y_neg});
      if (r_pos > r_neg) {
        acc += 1.0;
      } else if (r_pos == r_neg) {
        acc += 0.5;
      }
      ++pairs;
    }
  }
  return acc / static_cast<double>(pairs);
}

double preference_accuracy(const ModelParams& params,
                           std::span<const PreferenceTriple> triples) {
  return preference_accuracy(
      [&params](const Example& ex) { return reward_score(params, ex); },
      triples);
}

double top1_accuracy(const ScoreFn& reward,
                     std::span<const PreferenceTriple> triples) {
  if (triples.empty()) {
    throw std::invalid_argument("top1_accuracy: empty input");
  }
  double acc = 0.0;
  for (const auto& t : triples) {
    const double r_pos = reward(Example{t.x, t.y_pos});
    double best = r_pos;
    std::size_t n_best = 1;
    bool chosen_is_best = true;
    for (const auto& y_neg : t.y_neg) {
      const double r = reward(Example{t.x, y_neg});
      if (r > best) {
        best = r;
        n_best = 1;
        chosen_is_best = false;
      } else if (r == best) {
        ++n_best;
      }
    }
    if (chosen_is_best) acc += 1.0 / static_cast<double>(n_best);
  }
  return acc / static_cast<double>(triples.size());
}

double top1_accuracy(const ModelParams& params,
                     std::span<const PreferenceTriple> triples) {
  return top1_accuracy(
      [&params](const Example& ex) { return reward_score(params, ex); },
      triples);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw std::invalid_argument("correlations: degenerate variance");
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

Correlations correlations(std::span<const double> pred,
                          std::span<const double> truth) {
  if (pred.size() != truth.size() || pred.size() < 3) {
    throw std::invalid_argument("correlations: need n >= 3 matched samples");
  }
  Correlations c;
  c.pearson_r = pearson(pred, truth);
  const auto ra = average_ranks(pred);
  const auto rb = average_ranks(truth);
  c.spearman_rho = pearson(ra, rb);
  return c;
}

std::vector<OrientedTriple> f_ordered_triples(
    std::span<const datagen::GroundTruthRow> sample) {
  // Group by exact context; x is a small vector so an ordered map keeps the
  // construction deterministic.
  std::map<std::vector<double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    groups[sample[i].ex.x].push_back(i);
  }
  std::vector<OrientedTriple> out;
  for (const auto& [x, idx] : groups) {
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const auto& ra = sample[idx[a]];
        const auto& rb = sample[idx[b]];
        if (ra.f == rb.f) continue;  // no preference defined on ties
        if (ra.f > rb.f) {
          out.push_back({ra.ex, rb.ex});
        } else {
          out.push_back({rb.ex, ra.ex});
        }
      }
    }
  }
  return out;
}

double expected_disagreement(const ScoreFn& reward,
                             std::span<const OrientedTriple> triples) {
  if (triples.empty()) {
    throw std::invalid_argument("expected_disagreement: empty set");
  }
  double acc = 0.0;
  for (const auto& t : triples) {
    acc += ad::sigmoid_scalar(reward(t.loss) - reward(t.win));
  }
  return acc / static_cast<double>(triples.size());
}

double expected_disagreement(const ModelParams& params,
                             std::span<const OrientedTriple> triples) {
  return expected_disagreement(
      [&params](const Example& ex) { return reward_score(params, ex); },
      triples);
}

BoundReport theorem1_check(const ModelParams& params,
                           std::span<const datagen::GroundTruthRow> src_sample,
                           std::span<const datagen::GroundTruthRow> tgt_sample) {
  if (src_sample.size() != tgt_sample.size() || src_sample.empty()) {
    throw std::invalid_argument("theorem1_check: sample sizes " +
                                std::to_string(src_sample.size()) + " vs " +
                                std::to_string(tgt_sample.size()));
  }
  BoundReport report;
  report.n = src_sample.size();
  report.eps_S = expected_disagreement(params, f_ordered_triples(src_sample));
  report.eps_T = expected_disagreement(params, f_ordered_triples(tgt_sample));
  report.K = lipschitz_upper_bound(params.theta, params.phi);

  oracle::EmpiricalDistribution p, q, pe, qe;
  for (const auto& row : src_sample) {
    p.points.push_back(row.ex.input());
    pe.points.push_back(embed(params.theta, row.ex.input()));
  }
  for (const auto& row : tgt_sample) {
    q.points.push_back(row.ex.input());
    qe.points.push_back(embed(params.theta, row.ex.input()));
  }
  report.W1 = oracle::w1_exact_assignment(p, q);
  report.w1_embedding = oracle::w1_exact_assignment(pe, qe);
  report.rhs = report.eps_S + 2.0 * report.K * report.L_sigma * report.W1;
  report.holds = report.eps_T <= report.rhs + 1e-9;
  return report;
}

double lemma1_check(const ModelParams& params, std::size_t n_pairs,
                    std::uint64_t seed, std::size_t x_dim, std::size_t y_dim) {
  const double K = lipschitz_upper_bound(params.theta, params.phi);
  Rng rng(seed);
  auto draw_vec = [&rng](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
  };
  auto g_r = [&](const Example& a, const Example& b) {
    return ad::sigmoid_scalar(reward_score(params, a) -
                              reward_score(params, b));
  };
  auto euclid = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  };

  double max_ratio = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto x = draw_vec(x_dim), xb = draw_vec(x_dim);
    const Example u{x, draw_vec(y_dim)}, v{x, draw_vec(y_dim)};
    const Example ub{xb, draw_vec(y_dim)}, vb{xb, draw_vec(y_dim)};
    const double rho = euclid(u.input(), ub.input()) +
                       euclid(v.input(), vb.input());
    const double diff = std::abs(g_r(u, v) - g_r(ub, vb));
    if (rho == 0.0) continue;  // identical triplets: ratio handled as 0
    max_ratio = std::max(max_ratio, diff / (2.0 * K * 0.25 * rho));
  }
  return max_ratio;
}

namespace {

// Leading eigenvector of a symmetric PSD matrix by power iteration. Returns
// (eigenvalue, vector); a zero matrix yields (0, zero vector).
std::pair<double, std::vector<double>> power_iteration(
    const std::vector<std::vector<double>>& m) {
  const std::size_t d = m.size();
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
  double lambda = 0.0;
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> mv(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) mv[i] += m[i][j] * v[j];
    }
    double nrm = 0.0;
    for (const double x : mv) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-300) return {0.0, std::vector<double>(d, 0.0)};
    for (auto& x : mv) x /= nrm;
    const double prev = lambda;
    lambda = nrm;
    v = std::move(mv);
    if (iter > 0 && std::abs(lambda - prev) <= 1e-9 * std::max(1.0, lambda)) {
      break;
    }
  }
  // Largest-magnitude coordinate positive.
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) {
    for (auto& x : v) x = -x;
  }
  return {lambda, v};
}

}  // namespace

std::vector<ProjectedPoint> project_embeddings(
    const ModelParams& params, std::span<const Example> examples,
    std::span<const std::pair<std::string, std::string>> tags) {
  if (examples.size() < 3) {
    throw std::invalid_argument("project_embeddings: need >= 3 examples");
  }
  if (!tags.empty() && tags.size() != examples.size()) {
    throw std::invalid_argument("project_embeddings: tag count mismatch");
  }
  const std::size_t n = examples.size();
  std::vector<std::vector<double>> emb(n);
  for (std::size_t i = 0; i < n; ++i) {
    emb[i] = embed(params.theta, examples[i].input());
  }
  const std::size_t d = emb[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& e : emb) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += e[k];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (auto& e : emb) {
    for (std::size_t k = 0; k < d; ++k) e[k] -= mean[k];
  }

  std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
  for (const auto& e : emb) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) cov[i][j] += e[i] * e[j];
    }
  }
  for (auto& row : cov) {
    for (auto& x : row) x /= static_cast<double>(n);
  }

  auto [l1, v1] = power_iteration(cov);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) cov[i][j] -= l1 * v1[i] * v1[j];
  }
  auto [l2, v2] = power_iteration(cov);
  (void)l2;

  std::vector<ProjectedPoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double p1 = 0.0, p2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      p1 += emb[i][k] * v1[k];
      p2 += emb[i][k] * v2[k];
    }
    out[i].pc1 = p1;
    out[i].pc2 = p2;
    if (!tags.empty()) {
      out[i].domain_tag = tags[i].first;
      out[i].label_tag = tags[i].second;
    }
  }
  return out;
}

void write_projection_csv(const std::string& path,
                          std::span<const ProjectedPoint> points) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "pc1,pc2,domain_tag,label_tag\n";
  for (const auto& p : points) {
    f << fmt_double(p.pc1) << "," << fmt_double(p.pc2) << "," << p.domain_tag
      << "," << p.label_tag << "\n";
  }
}

}  // namespace dial::eval
