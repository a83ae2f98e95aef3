#include "dial/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "dial/rng.hpp"

namespace dial::datagen {

using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

double dist2(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

}  // namespace

// Moon 0: unit upper semicircle around the origin. Moon 1: unit lower
// semicircle around (1, 0.5). The construction is symmetric under rotation
// by 180 degrees about the midpoint (0.5, 0.25).
double moon_arc_distance(int moon, double px, double py) {
  if (moon == 0) {
    if (py >= 0.0) return std::abs(std::hypot(px, py) - 1.0);
    return std::min(dist2(px, py, 1.0, 0.0), dist2(px, py, -1.0, 0.0));
  }
  const double vx = px - 1.0, vy = py - 0.5;
  if (vy <= 0.0) return std::abs(std::hypot(vx, vy) - 1.0);
  return std::min(dist2(px, py, 0.0, 0.5), dist2(px, py, 2.0, 0.5));
}

namespace {

double moons_margin(double px, double py) {
  return moon_arc_distance(0, px, py) - moon_arc_distance(1, px, py);
}

std::array<double, 2> moon_point(int moon, double t, double noise_sd,
                                 Rng& rng) {
  double px, py;
  if (moon == 0) {
    px = std::cos(t);
    py = std::sin(t);
  } else {
    px = 1.0 - std::cos(t);
    py = 0.5 - std::sin(t);
  }
  if (noise_sd > 0.0) {
    px += rng.normal(0.0, noise_sd);
    py += rng.normal(0.0, noise_sd);
  } else {
    // Keep the draw count independent of noise_sd so seeds line up.
    rng.normal();
    rng.normal();
  }
  return {px, py};
}

std::array<double, 2> rotate_about(std::array<double, 2> p, double cx,
                                   double cy, double angle_rad) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  const double dx = p[0] - cx, dy = p[1] - cy;
  return {cx + c * dx - s * dy, cy + s * dx + c * dy};
}

}  // namespace

GenResult gen_two_moons(const TwoMoonsOptions& opt) {
  if (opt.n_src < 4 || opt.n_tgt < 4) {
    throw std::invalid_argument("gen_two_moons: need n >= 4 per domain");
  }
  if (opt.arc_fraction <= 0.0 || opt.arc_fraction > 1.0) {
    throw std::invalid_argument("gen_two_moons: arc_fraction outside (0, 1]");
  }
  Rng rng(opt.seed);

  GenResult out;
  out.scorer.task = "two-moons";
  out.scorer.score = [](const Example& ex) {
    return moons_margin(ex.y.at(0), ex.y.at(1));
  };

  // Source: canonical moons; fewshot mode restricts to the leading arc
  // fraction.
  const double src_arc =
      (opt.shift == MoonShift::Fewshot) ? opt.arc_fraction * kPi : kPi;
  out.source.role = "source";
  std::vector<std::size_t> chosen_pool, rejected_pool;
  for (std::size_t i = 0; i < opt.n_src; ++i) {
    const int moon = static_cast<int>(i % 2);
    const double t = rng.uniform() * src_arc;
    const auto p = moon_point(moon, t, opt.noise_sd, rng);
    out.source.examples.push_back(Example{{}, {p[0], p[1]}});
    out.source.truth.push_back(
        {out.source.examples.back(), moons_margin(p[0], p[1])});
    (moon == 1 ? chosen_pool : rejected_pool).push_back(i);
  }

  // Target: full arcs; rotate/translate modes transform the target domain.
  out.target.role = "target";
  for (std::size_t i = 0; i < opt.n_tgt; ++i) {
    const int moon = static_cast<int>(i % 2);
    const double t = rng.uniform() * kPi;
    auto p = moon_point(moon, t, opt.noise_sd, rng);
    const double f = moons_margin(p[0], p[1]);  // pre-transform frame
    if (opt.shift == MoonShift::Rotate) {
      p = rotate_about(p, 0.5, 0.25, opt.angle_deg * kPi / 180.0);
    } else if (opt.shift == MoonShift::Translate) {
      p = {p[0] + opt.offset[0], p[1] + opt.offset[1]};
    }
    out.target.examples.push_back(Example{{}, {p[0], p[1]}});
    out.target.truth.push_back({out.target.examples.back(), f});
  }

  // Preferences: chosen from moon 1, rejected from moon 0, cycling the
  // smaller pool. A pair inconsistent with the margin scorer retries the
  // next rejected candidates, so emitted triples always satisfy
  // f(chosen) > f(rejected).
  rng.shuffle(chosen_pool);
  rng.shuffle(rejected_pool);
  if (chosen_pool.empty() || rejected_pool.empty()) {
    throw std::invalid_argument("gen_two_moons: a moon has no source points");
  }
  const std::size_t n_prefs = std::max(chosen_pool.size(), rejected_pool.size());
  for (std::size_t i = 0; i < n_prefs; ++i) {
    const Example& chosen =
        out.source.examples[chosen_pool[i % chosen_pool.size()]];
    const double f_chosen = out.scorer.score(chosen);
    bool emitted = false;
    for (std::size_t attempt = 0; attempt < rejected_pool.size(); ++attempt) {
      const Example& rejected =
          out.source
              .examples[rejected_pool[(i + attempt) % rejected_pool.size()]];
      if (f_chosen > out.scorer.score(rejected)) {
        out.source.triples.push_back(
            PreferenceTriple{{}, chosen.y, {rejected.y}});
        emitted = true;
        break;
      }
    }
    (void)emitted;  // no consistent partner: pair skipped
  }
  return out;
}

namespace {

// Slot of the candidate farthest from the centroid of the other four.
std::size_t odd_slot_by_centroid(const std::vector<double>& x,
                                 std::size_t dim) {
  const std::size_t k = x.size() / dim;
  double best = -1.0;
  std::size_t best_i = 0;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> centroid(dim, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      if (j == i) continue;
      for (std::size_t m = 0; m < dim; ++m) centroid[m] += x[j * dim + m];
    }
    double d = 0.0;
    for (std::size_t m = 0; m < dim; ++m) {
      const double diff = x[i * dim + m] - centroid[m] / double(k - 1);
      d += diff * diff;
    }
    if (d > best) {
      best = d;
      best_i = i;
    }
  }
  return best_i;
}

}  // namespace

GenResult gen_odd_one_out(const OddOneOutOptions& opt) {
  if (opt.categories < 2) {
    throw std::invalid_argument("gen_odd_one_out: need >= 2 categories");
  }
  if (opt.src_base_cat == opt.tgt_base_cat ||
      opt.src_base_cat >= opt.categories || opt.tgt_base_cat >= opt.categories) {
    throw std::invalid_argument("gen_odd_one_out: bad base categories");
  }
  if (opt.items_per_cat < 4) {
    throw std::invalid_argument("gen_odd_one_out: need >= 4 items per category");
  }
  if (opt.dim < opt.categories) {
    throw std::invalid_argument("gen_odd_one_out: dim must be >= categories");
  }
  Rng rng(opt.seed);

  // Item vocabulary: isotropic Gaussian clusters around scaled basis
  // vectors.
  std::vector<std::vector<std::vector<double>>> items(opt.categories);
  for (std::size_t c = 0; c < opt.categories; ++c) {
    items[c].resize(opt.items_per_cat);
    for (auto& item : items[c]) {
      item.assign(opt.dim, 0.0);
      for (std::size_t k = 0; k < opt.dim; ++k) {
        item[k] = rng.normal(0.0, opt.cluster_sd);
      }
      item[c] += opt.center_scale;
    }
  }

  GenResult out;
  out.scorer.task = "odd-one-out";

  auto gen_domain = [&](DomainDataset& ds, std::size_t base_cat,
                        bool with_triples) {
    for (std::size_t inst = 0; inst < opt.n; ++inst) {
      std::vector<const std::vector<double>*> slots(5);
      std::vector<double> x;
      std::size_t odd_pos = 0;
      bool ok = false;
      // Redraw until the centroid rule identifies the planted odd slot, so
      // generated labels agree with the scorer by construction.
      for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
        std::size_t odd_cat =
            static_cast<std::size_t>(rng.below(opt.categories - 1));
        if (odd_cat >= base_cat) ++odd_cat;

        std::vector<std::size_t> base_idx;
        while (base_idx.size() < 4) {
          const std::size_t j =
              static_cast<std::size_t>(rng.below(opt.items_per_cat));
          if (std::find(base_idx.begin(), base_idx.end(), j) == base_idx.end()) {
            base_idx.push_back(j);
          }
        }
        const std::size_t odd_idx =
            static_cast<std::size_t>(rng.below(opt.items_per_cat));
        odd_pos = static_cast<std::size_t>(rng.below(5));

        std::size_t bi = 0;
        for (std::size_t pos = 0; pos < 5; ++pos) {
          slots[pos] = (pos == odd_pos) ? &items[odd_cat][odd_idx]
                                        : &items[base_cat][base_idx[bi++]];
        }
        x.clear();
        x.reserve(5 * opt.dim);
        for (const auto* item : slots) {
          x.insert(x.end(), item->begin(), item->end());
        }
        ok = odd_slot_by_centroid(x, opt.dim) == odd_pos;
      }
      if (!ok) {
        throw std::runtime_error(
            "gen_odd_one_out: could not place a separable odd item; lower "
            "cluster_sd or raise center_scale");
      }

      PreferenceTriple triple;
      triple.x = x;
      for (std::size_t pos = 0; pos < 5; ++pos) {
        Example ex{x, *slots[pos]};
        ds.examples.push_back(ex);
        ds.truth.push_back({ex, pos == odd_pos ? 1.0 : 0.0});
        if (pos == odd_pos) {
          triple.y_pos = *slots[pos];
        } else {
          triple.y_neg.push_back(*slots[pos]);
        }
      }
      if (with_triples) ds.triples.push_back(std::move(triple));
    }
  };

  out.source.role = "source";
  gen_domain(out.source, opt.src_base_cat, true);
  out.target.role = "target";
  gen_domain(out.target, opt.tgt_base_cat, false);

  const std::size_t dim = opt.dim;
  out.scorer.score = [dim](const Example& ex) {
    // f = 1 for the odd item, identified as the candidate farthest from the
    // centroid of the other four; generation guarantees this matches the
    // planted label.
    const std::size_t best_i = odd_slot_by_centroid(ex.x, dim);
    for (std::size_t m = 0; m < dim; ++m) {
      if (ex.x[best_i * dim + m] != ex.y[m]) return 0.0;
    }
    return 1.0;
  };
  return out;
}

std::function<double(const Example&)> spurious_rule(const OddOneOutOptions& opt) {
  const std::size_t dim = opt.dim;
  const std::size_t cats = opt.categories;
  const std::size_t src_base = opt.src_base_cat;
  const double scale = opt.center_scale;
  return [dim, cats, src_base, scale](const Example& ex) {
    // Nearest scaled-basis center classification; reject the source base
    // category.
    std::size_t best_c = 0;
    double best_d = 0.0;
    for (std::size_t c = 0; c < cats; ++c) {
      double d = 0.0;
      for (std::size_t m = 0; m < dim; ++m) {
        const double center = (m == c) ? scale : 0.0;
        const double diff = ex.y[m] - center;
        d += diff * diff;
      }
      if (c == 0 || d < best_d) {
        best_d = d;
        best_c = c;
      }
    }
    return best_c == src_base ? 0.0 : 1.0;
  };
}

std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>>
gen_gaussian_pair(std::size_t dim, double mean_shift, std::size_t n,
                  std::uint64_t seed) {
  if (dim < 1 || n < 2) {
    throw std::invalid_argument("gen_gaussian_pair: need dim >= 1 and n >= 2");
  }
  Rng rng(seed);
  std::vector<std::vector<double>> src(n), tgt(n);
  for (auto& p : src) {
    p.resize(dim);
    for (auto& v : p) v = rng.normal();
  }
  for (auto& p : tgt) {
    p.resize(dim);
    for (auto& v : p) v = rng.normal();
    p[0] += mean_shift;
  }
  return {std::move(src), std::move(tgt)};
}

std::vector<PreferenceTriple> scores_to_preferences(
    const std::vector<ScoredExample>& scored, std::uint64_t seed,
    std::vector<std::string>* warnings) {
  Rng rng(seed);
  std::map<long, std::vector<std::size_t>> by_level;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    by_level[scored[i].level].push_back(i);
  }
  for (auto& [level, idx] : by_level) rng.shuffle(idx);

  std::vector<PreferenceTriple> out;
  for (const auto& [level, idx] : by_level) {
    const auto lower = by_level.find(level - 1);
    if (lower == by_level.end()) {
      const auto higher = by_level.find(level + 1);
      if (higher == by_level.end() && warnings) {
        warnings->push_back("level " + std::to_string(level) +
                            " has no adjacent partner; skipped");
      }
      continue;
    }
    const auto& partners = lower->second;
    std::size_t cursor = 0;
    for (const std::size_t i : idx) {
      const ScoredExample& chosen = scored[i];
      const ScoredExample& rejected = scored[partners[cursor % partners.size()]];
      ++cursor;
      out.push_back(PreferenceTriple{chosen.ex.x, chosen.ex.y, {rejected.ex.y}});
    }
  }
  return out;
}

namespace {

json vec_to_json(const std::vector<double>& v) {
  json a = json::array();
  for (const double x : v) a.push_back(x);
  return a;
}

std::vector<double> vec_from_json(const json& j) {
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) v.push_back(x.get<double>());
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

template <typename Fn>
void for_each_line(const std::string& path, Fn fn) {
  std::ifstream f = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
}

}  // namespace

void write_preferences_jsonl(const std::string& path,
                             const std::vector<PreferenceTriple>& triples) {
  auto f = open_out(path);
  for (const auto& t : triples) {
    json j;
    j["x"] = vec_to_json(t.x);
    j["y_pos"] = vec_to_json(t.y_pos);
    json negs = json::array();
    for (const auto& n : t.y_neg) negs.push_back(vec_to_json(n));
    j["y_neg"] = std::move(negs);
    f << j.dump() << "\n";
  }
}

std::vector<PreferenceTriple> read_preferences_jsonl(const std::string& path) {
  std::vector<PreferenceTriple> out;
  for_each_line(path, [&](const json& j) {
    PreferenceTriple t;
    t.x = vec_from_json(j.at("x"));
    t.y_pos = vec_from_json(j.at("y_pos"));
    for (const auto& n : j.at("y_neg")) t.y_neg.push_back(vec_from_json(n));
    out.push_back(std::move(t));
  });
  return out;
}

void write_examples_jsonl(const std::string& path,
                          const std::vector<Example>& examples) {
  auto f = open_out(path);
  for (const auto& ex : examples) {
    json j;
    j["x"] = vec_to_json(ex.x);
    j["y"] = vec_to_json(ex.y);
    f << j.dump() << "\n";
  }
}

std::vector<Example> read_examples_jsonl(const std::string& path) {
  std::vector<Example> out;
  for_each_line(path, [&](const json& j) {
    out.push_back(Example{vec_from_json(j.at("x")), vec_from_json(j.at("y"))});
  });
  return out;
}

void write_truth_jsonl(const std::string& path,
                       const std::vector<GroundTruthRow>& rows) {
  auto f = open_out(path);
  for (const auto& r : rows) {
    json j;
    j["x"] = vec_to_json(r.ex.x);
    j["y"] = vec_to_json(r.ex.y);
    j["f"] = r.f;
    f << j.dump() << "\n";
  }
}

std::vector<GroundTruthRow> read_truth_jsonl(const std::string& path) {
  std::vector<GroundTruthRow> out;
  for_each_line(path, [&](const json& j) {
    out.push_back({Example{vec_from_json(j.at("x")), vec_from_json(j.at("y"))},
                   j.at("f").get<double>()});
  });
  return out;
}

void write_points_jsonl(const std::string& path,
                        const std::vector<std::vector<double>>& points) {
  auto f = open_out(path);
  for (const auto& p : points) {
    json j;
    j["p"] = vec_to_json(p);
    f << j.dump() << "\n";
  }
}

std::vector<std::vector<double>> read_points_jsonl(const std::string& path) {
  std::vector<std::vector<double>> out;
  for_each_line(path, [&](const json& j) { out.push_back(vec_from_json(j.at("p"))); });
  return out;
}

}  // namespace dial::datagen
