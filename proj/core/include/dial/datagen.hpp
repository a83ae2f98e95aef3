#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dial/model.hpp"

namespace dial::datagen {

struct GroundTruthRow {
  Example ex;
  double f = 0.0;
};

// Closed-form scoring rule; deterministic and defined on all generated
// examples.
struct GroundTruthScorer {
  std::string task;
  std::function<double(const Example&)> score;
};

struct DomainDataset {
  std::string role;  // "source" | "target"
  std::vector<Example> examples;
  std::vector<PreferenceTriple> triples;  // source only
  std::vector<GroundTruthRow> truth;      // hidden labels, evaluation only
};

struct GenResult {
  DomainDataset source;
  DomainDataset target;
  GroundTruthScorer scorer;
};

enum class MoonShift { Fewshot, Rotate, Translate };

struct TwoMoonsOptions {
  std::size_t n_src = 50;
  std::size_t n_tgt = 500;
  MoonShift shift = MoonShift::Fewshot;
  double angle_deg = 0.0;                  // rotate mode
  std::array<double, 2> offset{0.0, 0.0};  // translate mode
  double noise_sd = 0.1;
  double arc_fraction = 0.4;  // fewshot mode
  std::uint64_t seed = 0;
};

// Two interleaving unit half-circles; context x is empty, a response y is a
// 2-D point. Source preferences pair a moon-1 point (chosen) against a
// moon-0 point (rejected). The scorer is the continuous arc-distance margin
// f(y) = dist(y, arc0) - dist(y, arc1), positive on moon 1.
GenResult gen_two_moons(const TwoMoonsOptions& opt);

// Distance from a point to the (noise-free) arc of the given moon.
double moon_arc_distance(int moon, double px, double py);

struct OddOneOutOptions {
  std::size_t categories = 5;
  std::size_t items_per_cat = 100;
  std::size_t src_base_cat = 0;
  std::size_t tgt_base_cat = 1;
  std::size_t n = 200;  // instances per domain
  std::size_t dim = 8;
  double cluster_sd = 0.15;
  double center_scale = 1.0;
  std::uint64_t seed = 0;
};

// Category clusters around scaled standard basis vectors. An instance is 5
// item vectors, 4 from the domain's base category and 1 odd item from
// another; x concatenates the 5 items, y is one candidate. Chosen = odd
// item, rejected = the 4 base items. f is 1 for the odd item, 0 otherwise.
GenResult gen_odd_one_out(const OddOneOutOptions& opt);

// Nearest-center category rule "reject items of the source base category":
// scores 0 on items closest to that category's center, 1 otherwise.
std::function<double(const Example&)> spurious_rule(const OddOneOutOptions& opt);

// N(0, I) vs the same with mean_shift added to the first coordinate.
std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>>
gen_gaussian_pair(std::size_t dim, double mean_shift, std::size_t n,
                  std::uint64_t seed);

struct ScoredExample {
  Example ex;
  long level = 0;  // integer score level
};

// Pairs every example against one from the adjacent lower level (chosen =
// higher level), so every example with a lower adjacent level is chosen at
// least once. Levels with no adjacent partner are skipped with a warning.
std::vector<PreferenceTriple> scores_to_preferences(
    const std::vector<ScoredExample>& scored, std::uint64_t seed,
    std::vector<std::string>* warnings = nullptr);

// JSONL files: one UTF-8 JSON object per line, LF endings.
void write_preferences_jsonl(const std::string& path,
                             const std::vector<PreferenceTriple>& triples);
std::vector<PreferenceTriple> read_preferences_jsonl(const std::string& path);
void write_examples_jsonl(const std::string& path,
                          const std::vector<Example>& examples);
std::vector<Example> read_examples_jsonl(const std::string& path);
void write_truth_jsonl(const std::string& path,
                       const std::vector<GroundTruthRow>& rows);
std::vector<GroundTruthRow> read_truth_jsonl(const std::string& path);
void write_points_jsonl(const std::string& path,
                        const std::vector<std::vector<double>>& points);
std::vector<std::vector<double>> read_points_jsonl(const std::string& path);

}  // namespace dial::datagen
