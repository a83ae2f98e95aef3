#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dial/datagen.hpp"
#include "dial/eval.hpp"
#include "dial/trainer.hpp"

namespace dial::run {

// Bad flags, bad config, missing files. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCodeVersion = "dial 0.1.0";

// Relative output paths are rooted at $DIAL_OUT_ROOT when set.
std::string resolve_out_dir(const std::string& dir);

struct RunConfig {
  std::string method;  // "dial" | "src-pref"
  std::string out_dir;
  std::string src_prefs_path;
  std::string tgt_unlabeled_path;
  std::string tgt_truth_path;
  std::size_t eval_pairs = 2000;
  std::string eval_scorer = "pairwise";
  std::vector<std::size_t> embed_layers = {64, 32};
  std::vector<std::size_t> critic_layers = {32, 16};
  TrainConfig train;
  std::string raw_json;  // canonical config text for manifests/checkpoints
};

// Parses and validates the documented schema; unknown or missing keys raise
// ConfigError naming them.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text, const std::string& origin);

struct GenArgs {
  std::string task;  // two-moons | odd-one-out | gaussian-pair
  datagen::TwoMoonsOptions moons;
  datagen::OddOneOutOptions ooo;
  std::size_t gauss_dim = 2;
  double gauss_mean_shift = 0.0;
  std::size_t gauss_n = 1024;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool force = false;
};

// Writes the dataset files plus a generation manifest. Deterministic:
// reruns with the same arguments are byte-identical, so the manifest
// carries no timestamps.
void run_gen(const GenArgs& args);

struct TrainOutputs {
  std::string out_dir;
  std::size_t steps = 0;
  double eval_accuracy_src = 0.0;
  std::optional<double> eval_accuracy_tgt;           // configured scorer
  std::optional<double> eval_accuracy_tgt_pairwise;
  std::optional<double> eval_accuracy_tgt_top1;
  LossBundle final_losses;
  std::optional<double> embedding_w1_initial;
  std::optional<double> embedding_w1_final;
  double lipschitz_K = 0.0;
};

TrainOutputs run_train(const RunConfig& cfg, const std::string& out_dir,
                       bool force);

// Metrics for a checkpoint against a preference or ground-truth JSONL file.
// Returns JSON text; `select` optionally restricts the emitted keys.
std::string run_eval_cmd(const std::string& checkpoint_path,
                         const std::string& dataset_path,
                         const std::vector<std::string>& select);

struct BoundOutcome {
  eval::BoundReport report;
  double lemma_max_ratio = 0.0;
  std::string json_text;
};

// Source side may be a preference file (chosen/rejected orientation is the
// ground truth) or a truth sidecar; the target side is a truth sidecar.
BoundOutcome run_bound(const std::string& checkpoint_path,
                       const std::string& src_path, const std::string& tgt_path,
                       std::size_t n, std::uint64_t seed,
                       const std::string& out_path);

void run_project(const std::string& checkpoint_path,
                 const std::string& src_prefs_path,
                 const std::string& tgt_truth_path, const std::string& out_dir,
                 bool force);

struct OracleWdResult {
  double w1 = 0.0;
  std::size_t n = 0;
  std::size_t dim = 0;
  std::string method;
};

OracleWdResult run_oracle_wd(const std::string& file_a,
                             const std::string& file_b,
                             const std::string& method);

struct ScalingArgs {
  std::string base_config_path;
  std::size_t budget = 400;
  std::vector<double> grid;  // target fractions in [0, 1)
  std::size_t seeds = 3;
  std::size_t jobs = 1;
  std::string out_dir;
  bool force = false;
};

struct ScalingRow {
  double mix = 0.0;
  std::size_t n_src_points = 0;
  std::size_t n_tgt_points = 0;
  std::size_t n_seeds = 0;
  double acc_tgt_mean = 0.0;
  double acc_tgt_stderr = 0.0;
};

std::vector<ScalingRow> run_scaling(const ScalingArgs& args);

}  // namespace dial::run
