#include "dial/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dial/format.hpp"
#include "dial/oracle.hpp"
#include "dial/svg.hpp"

namespace dial::run {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string file_hash(const std::string& path) {
  return fnv1a64_hex(read_file(path));
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << text;
}

// Refuses to clobber a previous run's outputs unless forced.
void guard_output(const std::string& marker, bool force) {
  if (fs::exists(marker) && !force) {
    throw ConfigError(marker + " exists; pass --force to overwrite");
  }
}

void check_known_keys(const json& j, const std::string& where,
                      const std::set<std::string>& required,
                      const std::set<std::string>& optional) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  std::vector<std::string> unknown, missing;
  for (const auto& [key, _] : j.items()) {
    if (!required.contains(key) && !optional.contains(key)) {
      unknown.push_back(key);
    }
  }
  for (const auto& key : required) {
    if (!j.contains(key)) missing.push_back(key);
  }
  if (!unknown.empty() || !missing.empty()) {
    std::string msg = where + ":";
    if (!missing.empty()) {
      msg += " missing keys:";
      for (const auto& k : missing) msg += " " + k;
      msg += ";";
    }
    if (!unknown.empty()) {
      msg += " unknown keys:";
      for (const auto& k : unknown) msg += " " + k;
    }
    throw ConfigError(msg);
  }
}

double get_num(const json& j, const char* key, const std::string& where) {
  if (!j.at(key).is_number()) {
    throw ConfigError(where + "." + key + ": expected a number");
  }
  return j.at(key).get<double>();
}

std::size_t get_size(const json& j, const char* key, const std::string& where) {
  if (!j.at(key).is_number_unsigned() && !j.at(key).is_number_integer()) {
    throw ConfigError(where + "." + key + ": expected a nonnegative integer");
  }
  const auto v = j.at(key).get<long long>();
  if (v < 0) throw ConfigError(where + "." + key + ": must be >= 0");
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> get_size_array(const json& j, const char* key,
                                        const std::string& where) {
  if (!j.at(key).is_array() || j.at(key).empty()) {
    throw ConfigError(where + "." + key + ": expected a nonempty array");
  }
  std::vector<std::size_t> out;
  for (const auto& x : j.at(key)) {
    if (!x.is_number_integer() && !x.is_number_unsigned()) {
      throw ConfigError(where + "." + key + ": expected integers");
    }
    const auto v = x.get<long long>();
    if (v < 1) throw ConfigError(where + "." + key + ": widths must be >= 1");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace

std::string resolve_out_dir(const std::string& dir) {
  const char* root = std::getenv("DIAL_OUT_ROOT");
  if (root && *root && !fs::path(dir).is_absolute()) {
    return (fs::path(root) / dir).string();
  }
  return dir;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  check_known_keys(j, origin, {"method", "seed", "data"},
                   {"out", "model", "train"});

  RunConfig cfg;
  cfg.raw_json = j.dump();
  if (!j.at("method").is_string()) {
    throw ConfigError(origin + ".method: expected a string");
  }
  cfg.method = j.at("method").get<std::string>();
  if (cfg.method != "dial" && cfg.method != "src-pref") {
    throw ConfigError(origin + ".method: must be \"dial\" or \"src-pref\"");
  }
  cfg.train.seed = static_cast<std::uint64_t>(get_size(j, "seed", origin));
  if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();

  const json& data = j.at("data");
  check_known_keys(data, origin + ".data", {"src_prefs"},
                   {"tgt_unlabeled", "tgt_truth", "eval_pairs", "eval_scorer"});
  cfg.src_prefs_path = data.at("src_prefs").get<std::string>();
  if (data.contains("tgt_unlabeled")) {
    cfg.tgt_unlabeled_path = data.at("tgt_unlabeled").get<std::string>();
  }
  if (data.contains("tgt_truth")) {
    cfg.tgt_truth_path = data.at("tgt_truth").get<std::string>();
  }
  if (data.contains("eval_pairs")) {
    cfg.eval_pairs = get_size(data, "eval_pairs", origin + ".data");
  }
  if (data.contains("eval_scorer")) {
    cfg.eval_scorer = data.at("eval_scorer").get<std::string>();
    if (cfg.eval_scorer != "pairwise" && cfg.eval_scorer != "top1") {
      throw ConfigError(origin +
                        ".data.eval_scorer: must be \"pairwise\" or \"top1\"");
    }
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_known_keys(m, origin + ".model", {},
                     {"embed_layers", "critic_layers"});
    if (m.contains("embed_layers")) {
      cfg.embed_layers = get_size_array(m, "embed_layers", origin + ".model");
    }
    if (m.contains("critic_layers")) {
      cfg.critic_layers = get_size_array(m, "critic_layers", origin + ".model");
    }
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    const std::string where = origin + ".train";
    check_known_keys(t, where, {},
                     {"lambda_da", "lambda_gp", "critic_iters", "lr_main",
                      "lr_critic", "weight_decay_main", "weight_decay_critic",
                      "batch_src", "batch_tgt", "epochs", "eval_every"});
    if (t.contains("lambda_da")) cfg.train.lambda_da = get_num(t, "lambda_da", where);
    if (t.contains("lambda_gp")) cfg.train.lambda_gp = get_num(t, "lambda_gp", where);
    if (t.contains("critic_iters")) {
      cfg.train.critic_iters = static_cast<int>(get_size(t, "critic_iters", where));
    }
    if (t.contains("lr_main")) cfg.train.lr_main = get_num(t, "lr_main", where);
    if (t.contains("lr_critic")) cfg.train.lr_critic = get_num(t, "lr_critic", where);
    if (t.contains("weight_decay_main")) {
      cfg.train.weight_decay_main = get_num(t, "weight_decay_main", where);
    }
    if (t.contains("weight_decay_critic")) {
      cfg.train.weight_decay_critic = get_num(t, "weight_decay_critic", where);
    }
    if (t.contains("batch_src")) cfg.train.batch_src = get_size(t, "batch_src", where);
    if (t.contains("batch_tgt")) cfg.train.batch_tgt = get_size(t, "batch_tgt", where);
    if (t.contains("epochs")) cfg.train.epochs = get_size(t, "epochs", where);
    if (t.contains("eval_every")) cfg.train.eval_every = get_size(t, "eval_every", where);
  }

  // src-pref is the same loop with the domain terms switched off.
  if (cfg.method == "src-pref") {
    cfg.train.lambda_da = 0.0;
    cfg.train.critic_enabled = false;
  } else if (cfg.tgt_unlabeled_path.empty()) {
    throw ConfigError(origin + ".data.tgt_unlabeled: required for method dial");
  }
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_file(path), path);
}

// ---------------------------------------------------------------------------
// gen

void run_gen(const GenArgs& args) {
  const std::string out = resolve_out_dir(args.out_dir);
  fs::create_directories(out);
  const std::string manifest_path = (fs::path(out) / "manifest.json").string();
  guard_output(manifest_path, args.force);

  json manifest;
  manifest["command"] = "gen";
  manifest["task"] = args.task;
  manifest["seed"] = args.seed;
  manifest["code_version"] = kCodeVersion;
  json files = json::array();
  auto record = [&](const std::string& name, std::size_t lines) {
    files.push_back({{"name", name},
                     {"fnv64", file_hash((fs::path(out) / name).string())},
                     {"lines", lines}});
  };

  if (args.task == "two-moons") {
    datagen::TwoMoonsOptions opt = args.moons;
    opt.seed = args.seed;
    const auto gen = datagen::gen_two_moons(opt);
    manifest["args"] = {
        {"n_src", opt.n_src},
        {"n_tgt", opt.n_tgt},
        {"shift", opt.shift == datagen::MoonShift::Fewshot    ? "fewshot"
                  : opt.shift == datagen::MoonShift::Rotate   ? "rotate"
                                                              : "translate"},
        {"angle_deg", opt.angle_deg},
        {"offset", {opt.offset[0], opt.offset[1]}},
        {"noise_sd", opt.noise_sd},
        {"arc_fraction", opt.arc_fraction}};
    datagen::write_preferences_jsonl((fs::path(out) / "src_prefs.jsonl").string(),
                                     gen.source.triples);
    datagen::write_examples_jsonl((fs::path(out) / "tgt_unlabeled.jsonl").string(),
                                  gen.target.examples);
    datagen::write_truth_jsonl((fs::path(out) / "tgt_truth.jsonl").string(),
                               gen.target.truth);
    record("src_prefs.jsonl", gen.source.triples.size());
    record("tgt_unlabeled.jsonl", gen.target.examples.size());
    record("tgt_truth.jsonl", gen.target.truth.size());
  } else if (args.task == "odd-one-out") {
    datagen::OddOneOutOptions opt = args.ooo;
    opt.seed = args.seed;
    const auto gen = datagen::gen_odd_one_out(opt);
    manifest["args"] = {{"categories", opt.categories},
                        {"items_per_cat", opt.items_per_cat},
                        {"src_base_cat", opt.src_base_cat},
                        {"tgt_base_cat", opt.tgt_base_cat},
                        {"n", opt.n},
                        {"dim", opt.dim},
                        {"cluster_sd", opt.cluster_sd},
                        {"center_scale", opt.center_scale}};
    datagen::write_preferences_jsonl((fs::path(out) / "src_prefs.jsonl").string(),
                                     gen.source.triples);
    datagen::write_examples_jsonl((fs::path(out) / "tgt_unlabeled.jsonl").string(),
                                  gen.target.examples);
    datagen::write_truth_jsonl((fs::path(out) / "tgt_truth.jsonl").string(),
                               gen.target.truth);
    record("src_prefs.jsonl", gen.source.triples.size());
    record("tgt_unlabeled.jsonl", gen.target.examples.size());
    record("tgt_truth.jsonl", gen.target.truth.size());
  } else if (args.task == "gaussian-pair") {
    const auto [src, tgt] = datagen::gen_gaussian_pair(
        args.gauss_dim, args.gauss_mean_shift, args.gauss_n, args.seed);
    manifest["args"] = {{"dim", args.gauss_dim},
                        {"mean_shift", args.gauss_mean_shift},
                        {"n", args.gauss_n}};
    datagen::write_points_jsonl((fs::path(out) / "src_points.jsonl").string(), src);
    datagen::write_points_jsonl((fs::path(out) / "tgt_points.jsonl").string(), tgt);
    record("src_points.jsonl", src.size());
    record("tgt_points.jsonl", tgt.size());
  } else {
    throw ConfigError("gen: unknown task \"" + args.task +
                      "\" (two-moons | odd-one-out | gaussian-pair)");
  }
  manifest["files"] = std::move(files);
  write_text(manifest_path, manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// train

namespace {

struct TgtEvalSets {
  std::vector<PreferenceTriple> pair_triples;
  std::vector<PreferenceTriple> top1_triples;
};

// Derives evaluation preferences from the hidden ground-truth sidecar:
// within each same-context group, f-distinct pairs oriented by f (capped by
// a seeded subsample), plus one top-1 instance per group with a unique
// f-maximum.
TgtEvalSets build_tgt_eval(const std::vector<datagen::GroundTruthRow>& rows,
                           std::size_t pair_cap, Rng rng) {
  TgtEvalSets out;
  std::map<std::vector<double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) groups[rows[i].ex.x].push_back(i);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (win, loss)
  for (const auto& [x, idx] : groups) {
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const auto& ra = rows[idx[a]];
        const auto& rb = rows[idx[b]];
        if (ra.f == rb.f) continue;
        if (ra.f > rb.f) {
          pairs.emplace_back(idx[a], idx[b]);
        } else {
          pairs.emplace_back(idx[b], idx[a]);
        }
      }
    }
    // Top-1 instance when the group's best row is unique.
    std::size_t arg = idx[0];
    bool unique = true;
    for (std::size_t k = 1; k < idx.size(); ++k) {
      if (rows[idx[k]].f > rows[arg].f) {
        arg = idx[k];
        unique = true;
      } else if (rows[idx[k]].f == rows[arg].f) {
        unique = false;
      }
    }
    if (idx.size() >= 2 && unique) {
      PreferenceTriple t;
      t.x = x;
      t.y_pos = rows[arg].ex.y;
      for (const std::size_t k : idx) {
        if (k != arg) t.y_neg.push_back(rows[k].ex.y);
      }
      out.top1_triples.push_back(std::move(t));
    }
  }
  if (pairs.size() > pair_cap) {
    rng.shuffle(pairs);
    pairs.resize(pair_cap);
  }
  for (const auto& [w, l] : pairs) {
    out.pair_triples.push_back(
        PreferenceTriple{rows[w].ex.x, rows[w].ex.y, {rows[l].ex.y}});
  }
  return out;
}

std::optional<double> embedding_w1(const ModelParams& params,
                                   const std::vector<Example>& src,
                                   const std::vector<Example>& tgt,
                                   const std::vector<std::size_t>& src_pick,
                                   const std::vector<std::size_t>& tgt_pick) {
  if (src_pick.empty() || src_pick.size() != tgt_pick.size()) return {};
  oracle::EmpiricalDistribution p, q;
  for (const std::size_t i : src_pick) {
    p.points.push_back(embed(params.theta, src[i].input()));
  }
  for (const std::size_t i : tgt_pick) {
    q.points.push_back(embed(params.theta, tgt[i].input()));
  }
  return oracle::w1_exact_assignment(p, q);
}

std::vector<std::size_t> pick_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(std::min(k, n));
  return idx;
}

std::string metrics_csv_row(const StepRecord& rec) {
  std::string row = std::to_string(rec.step) + "," +
                    std::to_string(rec.epoch) + "," +
                    fmt_double(rec.losses.src_loss) + "," +
                    fmt_double(rec.losses.wd_gap) + "," +
                    fmt_double(rec.losses.grad_penalty) + "," +
                    fmt_double(rec.losses.critic_loss) + ",";
  if (rec.eval_accuracy_src) row += fmt_double(*rec.eval_accuracy_src);
  row += ",";
  if (rec.eval_accuracy_tgt) row += fmt_double(*rec.eval_accuracy_tgt);
  return row + "\n";
}

void validate_dims(const std::vector<PreferenceTriple>& triples,
                   const std::vector<Example>& tgt,
                   const std::vector<datagen::GroundTruthRow>& truth) {
  if (triples.empty()) throw ConfigError("train: src_prefs is empty");
  const std::size_t dx = triples[0].x.size();
  const std::size_t dy = triples[0].y_pos.size();
  for (const auto& t : triples) {
    if (t.x.size() != dx || t.y_pos.size() != dy || t.y_neg.empty()) {
      throw ConfigError("train: inconsistent preference dimensions");
    }
    for (const auto& n : t.y_neg) {
      if (n.size() != dy) {
        throw ConfigError("train: inconsistent preference dimensions");
      }
    }
  }
  for (const auto& ex : tgt) {
    if (ex.x.size() != dx || ex.y.size() != dy) {
      throw ConfigError("train: target dims do not match source");
    }
  }
  for (const auto& row : truth) {
    if (row.ex.x.size() != dx || row.ex.y.size() != dy) {
      throw ConfigError("train: truth dims do not match source");
    }
  }
}

}  // namespace

TrainOutputs run_train(const RunConfig& cfg, const std::string& out_dir,
                       bool force) {
  const std::string out = resolve_out_dir(out_dir);
  fs::create_directories(out);
  const std::string manifest_path = (fs::path(out) / "manifest.json").string();
  guard_output(manifest_path, force);
  if (fs::exists(manifest_path)) {
    // Forced rerun into an existing run directory: warn when the recorded
    // dataset fingerprints no longer match.
    try {
      const json old = json::parse(read_file(manifest_path));
      for (const auto& d : old.at("datasets")) {
        const std::string path = d.at("path").get<std::string>();
        if (fs::exists(path) &&
            file_hash(path) != d.at("fnv64").get<std::string>()) {
          std::cerr << "warning: dataset " << path
                    << " changed since the previous run in " << out << "\n";
        }
      }
    } catch (const json::exception&) {
      std::cerr << "warning: unreadable previous manifest in " << out << "\n";
    }
  }

  // Load data.
  if (!fs::exists(cfg.src_prefs_path)) {
    throw ConfigError("train: missing dataset: " + cfg.src_prefs_path);
  }
  TrainData data;
  data.src_triples = datagen::read_preferences_jsonl(cfg.src_prefs_path);
  if (!cfg.tgt_unlabeled_path.empty()) {
    if (!fs::exists(cfg.tgt_unlabeled_path)) {
      throw ConfigError("train: missing dataset: " + cfg.tgt_unlabeled_path);
    }
    data.tgt_examples = datagen::read_examples_jsonl(cfg.tgt_unlabeled_path);
  }
  std::vector<datagen::GroundTruthRow> truth;
  if (!cfg.tgt_truth_path.empty()) {
    if (!fs::exists(cfg.tgt_truth_path)) {
      throw ConfigError("train: missing dataset: " + cfg.tgt_truth_path);
    }
    truth = datagen::read_truth_jsonl(cfg.tgt_truth_path);
  }
  validate_dims(data.src_triples, data.tgt_examples, truth);

  ModelConfig mc;
  mc.input_dim = data.src_triples[0].x.size() + data.src_triples[0].y_pos.size();
  mc.embed_layers = cfg.embed_layers;
  mc.critic_layers = cfg.critic_layers;

  // Manifest before training begins.
  json manifest;
  manifest["command"] = "train";
  manifest["code_version"] = kCodeVersion;
  manifest["config_hash"] = fnv1a64_hex(cfg.raw_json);
  manifest["seed"] = cfg.train.seed;
  json datasets = json::array();
  datasets.push_back({{"path", cfg.src_prefs_path},
                      {"fnv64", file_hash(cfg.src_prefs_path)}});
  if (!cfg.tgt_unlabeled_path.empty()) {
    datasets.push_back({{"path", cfg.tgt_unlabeled_path},
                        {"fnv64", file_hash(cfg.tgt_unlabeled_path)}});
  }
  if (!cfg.tgt_truth_path.empty()) {
    datasets.push_back({{"path", cfg.tgt_truth_path},
                        {"fnv64", file_hash(cfg.tgt_truth_path)}});
  }
  manifest["datasets"] = datasets;
  manifest["outputs"] = {"metrics.csv", "final_metrics.json", "checkpoint.json"};
  manifest["started_utc"] = utc_now();
  manifest["finished_utc"] = "";
  write_text(manifest_path, manifest.dump(2) + "\n");

  // Evaluation sets. The run PRNG is never consumed here.
  TgtEvalSets tgt_eval;
  if (!truth.empty()) {
    tgt_eval = build_tgt_eval(truth, cfg.eval_pairs,
                              Rng(cfg.train.seed).derive("eval-pairs"));
  }
  const bool use_top1 = cfg.eval_scorer == "top1";

  EvalHooks hooks;
  hooks.eval_src = [&data](const ModelParams& p) {
    return eval::preference_accuracy(p, data.src_triples);
  };
  if (!truth.empty()) {
    const std::vector<PreferenceTriple>* set =
        use_top1 ? &tgt_eval.top1_triples : &tgt_eval.pair_triples;
    if (!set->empty()) {
      hooks.eval_tgt = [set, use_top1](const ModelParams& p) {
        return use_top1 ? eval::top1_accuracy(p, *set)
                        : eval::preference_accuracy(p, *set);
      };
    }
  }

  // Embedding-distance bookkeeping: the same point subsets are measured at
  // initialization and after training.
  std::vector<Example> src_pool;
  for (const auto& t : data.src_triples) {
    src_pool.push_back(Example{t.x, t.y_pos});
    for (const auto& y : t.y_neg) src_pool.push_back(Example{t.x, y});
  }
  std::vector<Example> tgt_pool = data.tgt_examples;
  if (tgt_pool.empty()) {
    for (const auto& row : truth) tgt_pool.push_back(row.ex);
  }
  std::vector<std::size_t> w1_src_pick, w1_tgt_pick;
  if (!tgt_pool.empty()) {
    Rng pick_rng = Rng(cfg.train.seed).derive("emb-w1");
    const std::size_t k =
        std::min<std::size_t>({128, src_pool.size(), tgt_pool.size()});
    w1_src_pick = pick_indices(src_pool.size(), k, pick_rng);
    w1_tgt_pick = pick_indices(tgt_pool.size(), k, pick_rng);
  }

  TrainOutputs outputs;
  outputs.out_dir = out;
  {
    // Parameter initialization is the seed's first draw, so this replays it.
    TrainState init = make_train_state(mc, cfg.train);
    outputs.embedding_w1_initial =
        embedding_w1(init.params, src_pool, tgt_pool, w1_src_pick, w1_tgt_pick);
  }

  std::ofstream metrics((fs::path(out) / "metrics.csv").string(),
                        std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot open metrics.csv");
  metrics << "step,epoch,src_loss,wd_gap,grad_penalty,critic_loss,"
             "eval_accuracy_src,eval_accuracy_tgt\n";
  const auto on_step = [&metrics](const StepRecord& rec) {
    metrics << metrics_csv_row(rec);
  };

  const TrainResult result = train(data, mc, cfg.train, hooks, on_step);
  metrics.close();

  outputs.steps = result.steps;
  outputs.embedding_w1_final =
      embedding_w1(result.params, src_pool, tgt_pool, w1_src_pick, w1_tgt_pick);
  outputs.eval_accuracy_src = eval::preference_accuracy(result.params,
                                                        data.src_triples);
  if (!tgt_eval.pair_triples.empty()) {
    outputs.eval_accuracy_tgt_pairwise =
        eval::preference_accuracy(result.params, tgt_eval.pair_triples);
  }
  if (!tgt_eval.top1_triples.empty()) {
    outputs.eval_accuracy_tgt_top1 =
        eval::top1_accuracy(result.params, tgt_eval.top1_triples);
  }
  outputs.eval_accuracy_tgt = use_top1 ? outputs.eval_accuracy_tgt_top1
                                       : outputs.eval_accuracy_tgt_pairwise;
  if (!result.metrics.empty()) {
    outputs.final_losses = result.metrics.back().losses;
  }
  outputs.lipschitz_K =
      lipschitz_upper_bound(result.params.theta, result.params.phi);

  Checkpoint ck;
  ck.params = result.params;
  ck.config_json = cfg.raw_json;
  ck.rng_state = result.rng_state;
  ck.step = result.steps;
  save_checkpoint((fs::path(out) / "checkpoint.json").string(), ck);

  json fm;
  fm["method"] = cfg.method;
  fm["seed"] = cfg.train.seed;
  fm["steps"] = outputs.steps;
  fm["eval_accuracy_src"] = outputs.eval_accuracy_src;
  fm["eval_accuracy_tgt"] = outputs.eval_accuracy_tgt
                                ? json(*outputs.eval_accuracy_tgt)
                                : json();
  fm["eval_accuracy_tgt_pairwise"] =
      outputs.eval_accuracy_tgt_pairwise
          ? json(*outputs.eval_accuracy_tgt_pairwise)
          : json();
  fm["eval_accuracy_tgt_top1"] = outputs.eval_accuracy_tgt_top1
                                     ? json(*outputs.eval_accuracy_tgt_top1)
                                     : json();
  fm["src_loss_final"] = outputs.final_losses.src_loss;
  fm["wd_gap_final"] = outputs.final_losses.wd_gap;
  fm["grad_penalty_final"] = outputs.final_losses.grad_penalty;
  fm["critic_loss_final"] = outputs.final_losses.critic_loss;
  fm["embedding_w1_initial"] = outputs.embedding_w1_initial
                                   ? json(*outputs.embedding_w1_initial)
                                   : json();
  fm["embedding_w1_final"] = outputs.embedding_w1_final
                                 ? json(*outputs.embedding_w1_final)
                                 : json();
  fm["lipschitz_K"] = outputs.lipschitz_K;
  fm["checkpoint"] = "checkpoint.json";
  write_text((fs::path(out) / "final_metrics.json").string(),
             fm.dump(2) + "\n");

  manifest["finished_utc"] = utc_now();
  write_text(manifest_path, manifest.dump(2) + "\n");
  return outputs;
}

// ---------------------------------------------------------------------------
// eval / bound / project

namespace {

enum class FileKind { Preferences, Truth, Points };

FileKind sniff_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
    if (j.contains("y_pos")) return FileKind::Preferences;
    if (j.contains("f")) return FileKind::Truth;
    if (j.contains("p")) return FileKind::Points;
    throw ConfigError(path + ": unrecognized JSONL schema");
  }
  throw ConfigError(path + ": empty file");
}

std::vector<datagen::GroundTruthRow> rows_from_prefs(
    const std::vector<PreferenceTriple>& triples) {
  std::vector<datagen::GroundTruthRow> rows;
  for (const auto& t : triples) {
    rows.push_back({Example{t.x, t.y_pos}, 1.0});
    for (const auto& y : t.y_neg) rows.push_back({Example{t.x, y}, 0.0});
  }
  return rows;
}

std::vector<datagen::GroundTruthRow> load_rows_any(const std::string& path) {
  switch (sniff_jsonl(path)) {
    case FileKind::Preferences:
      return rows_from_prefs(datagen::read_preferences_jsonl(path));
    case FileKind::Truth:
      return datagen::read_truth_jsonl(path);
    default:
      throw ConfigError(path + ": expected preferences or ground-truth rows");
  }
}

ModelParams load_params(const std::string& checkpoint_path) {
  if (!fs::exists(checkpoint_path)) {
    throw ConfigError("missing checkpoint: " + checkpoint_path);
  }
  return load_checkpoint(checkpoint_path).params;
}

}  // namespace

std::string run_eval_cmd(const std::string& checkpoint_path,
                         const std::string& dataset_path,
                         const std::vector<std::string>& select) {
  const ModelParams params = load_params(checkpoint_path);
  if (!fs::exists(dataset_path)) {
    throw ConfigError("missing dataset: " + dataset_path);
  }
  json out;
  const FileKind kind = sniff_jsonl(dataset_path);
  if (kind == FileKind::Preferences) {
    const auto triples = datagen::read_preferences_jsonl(dataset_path);
    out["n_triples"] = triples.size();
    out["accuracy_pairwise"] = eval::preference_accuracy(params, triples);
    out["accuracy_top1"] = eval::top1_accuracy(params, triples);
    out["bt_loss"] = source_preference_loss(params, triples);
  } else if (kind == FileKind::Truth) {
    const auto rows = datagen::read_truth_jsonl(dataset_path);
    const auto sets = build_tgt_eval(rows, 2000, Rng(0).derive("eval-pairs"));
    out["n_rows"] = rows.size();
    if (!sets.pair_triples.empty()) {
      out["accuracy_pairwise"] =
          eval::preference_accuracy(params, sets.pair_triples);
    }
    if (!sets.top1_triples.empty()) {
      out["accuracy_top1"] = eval::top1_accuracy(params, sets.top1_triples);
    }
    std::vector<double> pred, truth_scores;
    for (const auto& row : rows) {
      pred.push_back(reward_score(params, row.ex));
      truth_scores.push_back(row.f);
    }
    try {
      const auto corr = eval::correlations(pred, truth_scores);
      out["pearson_r"] = corr.pearson_r;
      out["spearman_rho"] = corr.spearman_rho;
    } catch (const std::invalid_argument&) {
      // degenerate variance: correlations omitted
    }
  } else {
    throw ConfigError(dataset_path + ": point files belong to oracle-wd");
  }
  if (!select.empty()) {
    json filtered;
    for (const auto& key : select) {
      if (out.contains(key)) filtered[key] = out.at(key);
    }
    out = std::move(filtered);
  }
  return out.dump(2) + "\n";
}

BoundOutcome run_bound(const std::string& checkpoint_path,
                       const std::string& src_path, const std::string& tgt_path,
                       std::size_t n, std::uint64_t seed,
                       const std::string& out_path) {
  const ModelParams params = load_params(checkpoint_path);
  auto src_rows = load_rows_any(src_path);
  auto tgt_rows = load_rows_any(tgt_path);
  if (src_rows.empty() || tgt_rows.empty()) {
    throw ConfigError("bound: empty sample");
  }
  if (src_rows[0].ex.x.size() + src_rows[0].ex.y.size() !=
      params.config.input_dim) {
    throw ConfigError("bound: dataset dims do not match the checkpoint");
  }

  Rng rng(seed);
  rng.shuffle(src_rows);
  rng.shuffle(tgt_rows);
  const std::size_t k = std::min({n, src_rows.size(), tgt_rows.size(),
                                  oracle::kAssignmentCap});
  src_rows.resize(k);
  tgt_rows.resize(k);

  BoundOutcome outcome;
  outcome.report = eval::theorem1_check(params, src_rows, tgt_rows);
  outcome.lemma_max_ratio =
      eval::lemma1_check(params, 10000, Rng(seed).derive("lemma").state()[0],
                         src_rows[0].ex.x.size(), src_rows[0].ex.y.size());

  json j;
  j["eps_S"] = outcome.report.eps_S;
  j["eps_T"] = outcome.report.eps_T;
  j["K"] = outcome.report.K;
  j["L_sigma"] = outcome.report.L_sigma;
  j["W1"] = outcome.report.W1;
  j["rhs"] = outcome.report.rhs;
  j["holds"] = outcome.report.holds;
  j["extras"] = {{"w1_embedding", outcome.report.w1_embedding},
                 {"lemma_max_ratio", outcome.lemma_max_ratio},
                 {"n", outcome.report.n}};
  outcome.json_text = j.dump(2) + "\n";
  if (!out_path.empty()) write_text(out_path, outcome.json_text);
  return outcome;
}

void run_project(const std::string& checkpoint_path,
                 const std::string& src_prefs_path,
                 const std::string& tgt_truth_path, const std::string& out_dir,
                 bool force) {
  const ModelParams params = load_params(checkpoint_path);
  const std::string out = resolve_out_dir(out_dir);
  fs::create_directories(out);
  const std::string csv_path = (fs::path(out) / "embeddings.csv").string();
  guard_output(csv_path, force);

  std::vector<Example> examples;
  std::vector<std::pair<std::string, std::string>> tags;
  for (const auto& t : datagen::read_preferences_jsonl(src_prefs_path)) {
    examples.push_back(Example{t.x, t.y_pos});
    tags.emplace_back("src", "pos");
    for (const auto& y : t.y_neg) {
      examples.push_back(Example{t.x, y});
      tags.emplace_back("src", "neg");
    }
  }
  const auto truth = datagen::read_truth_jsonl(tgt_truth_path);
  double fmin = truth.empty() ? 0.0 : truth[0].f;
  double fmax = fmin;
  for (const auto& row : truth) {
    fmin = std::min(fmin, row.f);
    fmax = std::max(fmax, row.f);
  }
  const double mid = 0.5 * (fmin + fmax);
  for (const auto& row : truth) {
    examples.push_back(row.ex);
    tags.emplace_back("tgt", row.f > mid ? "pos" : "neg");
  }

  const auto points = eval::project_embeddings(params, examples, tags);
  eval::write_projection_csv(csv_path, points);

  const std::map<std::string, std::string> colors = {
      {"src/pos", "#1f77b4"},
      {"src/neg", "#9ecae1"},
      {"tgt/pos", "#d62728"},
      {"tgt/neg", "#f4a6a6"}};
  std::vector<svg::ScatterGroup> groups;
  for (const auto& [name, color] : colors) {
    svg::ScatterGroup g;
    g.name = name;
    g.color = color;
    for (const auto& p : points) {
      if (p.domain_tag + "/" + p.label_tag == name) {
        g.points.push_back({p.pc1, p.pc2});
      }
    }
    if (!g.points.empty()) groups.push_back(std::move(g));
  }
  svg::write_scatter((fs::path(out) / "embeddings.svg").string(),
                     "reward model embeddings (top-2 principal components)",
                     groups);
}

OracleWdResult run_oracle_wd(const std::string& file_a,
                             const std::string& file_b,
                             const std::string& method) {
  const auto a = datagen::read_points_jsonl(file_a);
  const auto b = datagen::read_points_jsonl(file_b);
  if (a.empty() || b.empty()) throw ConfigError("oracle-wd: empty point file");
  if (a.size() != b.size()) {
    throw ConfigError("oracle-wd: point counts " + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()) + " must match");
  }
  const std::size_t dim = a[0].size();
  OracleWdResult res;
  res.n = a.size();
  res.dim = dim;
  std::string m = method;
  if (m == "auto") m = dim == 1 ? "1d" : "assignment";
  if (m == "1d") {
    if (dim != 1) throw ConfigError("oracle-wd: --method 1d needs 1-D points");
    std::vector<double> av, bv;
    for (const auto& p : a) av.push_back(p.at(0));
    for (const auto& p : b) bv.push_back(p.at(0));
    res.w1 = oracle::w1_exact_1d(av, bv);
  } else if (m == "assignment") {
    try {
      res.w1 = oracle::w1_exact_assignment({a}, {b});
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else {
    throw ConfigError("oracle-wd: unknown method \"" + method + "\"");
  }
  res.method = m;
  return res;
}

// ---------------------------------------------------------------------------
// scaling

namespace {

struct ScalingBase {
  datagen::TwoMoonsOptions gen;
  std::string method = "dial";
  std::uint64_t seed = 1;
  json model = json::object();
  json train = json::object();
  std::size_t eval_pairs = 2000;
};

ScalingBase parse_scaling_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  check_known_keys(j, path, {"task", "seed"},
                   {"gen", "method", "model", "train", "eval_pairs"});
  if (j.at("task").get<std::string>() != "two-moons") {
    throw ConfigError(path + ": scaling driver supports task two-moons");
  }
  ScalingBase base;
  base.seed = static_cast<std::uint64_t>(get_size(j, "seed", path));
  if (j.contains("method")) {
    base.method = j.at("method").get<std::string>();
    if (base.method != "dial" && base.method != "src-pref") {
      throw ConfigError(path + ".method: must be dial or src-pref");
    }
  }
  if (j.contains("gen")) {
    const json& g = j.at("gen");
    check_known_keys(g, path + ".gen", {},
                     {"shift", "noise_sd", "arc_fraction", "angle_deg",
                      "offset"});
    if (g.contains("shift")) {
      const std::string s = g.at("shift").get<std::string>();
      if (s == "fewshot") {
        base.gen.shift = datagen::MoonShift::Fewshot;
      } else if (s == "rotate") {
        base.gen.shift = datagen::MoonShift::Rotate;
      } else if (s == "translate") {
        base.gen.shift = datagen::MoonShift::Translate;
      } else {
        throw ConfigError(path + ".gen.shift: unknown mode " + s);
      }
    }
    if (g.contains("noise_sd")) base.gen.noise_sd = get_num(g, "noise_sd", path);
    if (g.contains("arc_fraction")) {
      base.gen.arc_fraction = get_num(g, "arc_fraction", path);
    }
    if (g.contains("angle_deg")) base.gen.angle_deg = get_num(g, "angle_deg", path);
    if (g.contains("offset")) {
      base.gen.offset = {g.at("offset").at(0).get<double>(),
                         g.at("offset").at(1).get<double>()};
    }
  }
  if (j.contains("model")) base.model = j.at("model");
  if (j.contains("train")) base.train = j.at("train");
  if (j.contains("eval_pairs")) {
    base.eval_pairs = get_size(j, "eval_pairs", path);
  }
  return base;
}

std::uint64_t combine_seed(std::uint64_t base, std::uint64_t a,
                           std::uint64_t b) {
  std::uint64_t x = base ^ (a * 0x9e3779b97f4a7c15ull) ^
                    (b * 0xbf58476d1ce4e5b9ull);
  return Rng::splitmix64(x);
}

}  // namespace

std::vector<ScalingRow> run_scaling(const ScalingArgs& args) {
  const std::string out = resolve_out_dir(args.out_dir);
  fs::create_directories(out);
  const std::string csv_path = (fs::path(out) / "scaling.csv").string();
  guard_output(csv_path, args.force);
  if (args.grid.empty()) throw ConfigError("scaling: empty mix grid");
  for (const double m : args.grid) {
    if (m < 0.0 || m >= 1.0) {
      throw ConfigError("scaling: mix fractions must lie in [0, 1)");
    }
  }
  if (args.seeds < 1) throw ConfigError("scaling: need >= 1 seed");
  const ScalingBase base = parse_scaling_config(args.base_config_path);

  struct RunCell {
    bool valid = false;
    double acc = 0.0;
  };
  std::vector<std::vector<RunCell>> cells(
      args.grid.size(), std::vector<RunCell>(args.seeds));

  struct Task {
    std::size_t mi, si;
  };
  std::vector<Task> tasks;
  std::vector<std::string> warnings;
  for (std::size_t mi = 0; mi < args.grid.size(); ++mi) {
    const double mix = args.grid[mi];
    const std::size_t n_tgt =
        static_cast<std::size_t>(std::llround(mix * double(args.budget)));
    const std::size_t n_src = args.budget - n_tgt;
    if (n_src / 2 < 2) {
      warnings.push_back("mix " + fmt_double(mix) +
                         ": fewer than 2 source preference pairs; skipped");
      continue;
    }
    if (n_tgt > 0 && n_tgt < 4) {
      warnings.push_back("mix " + fmt_double(mix) +
                         ": target share below the generator minimum; skipped");
      continue;
    }
    for (std::size_t si = 0; si < args.seeds; ++si) tasks.push_back({mi, si});
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  auto run_one = [&](const Task& task) {
    const double mix = args.grid[task.mi];
    const std::size_t n_tgt =
        static_cast<std::size_t>(std::llround(mix * double(args.budget)));
    const std::size_t n_src = args.budget - n_tgt;
    const std::uint64_t run_seed = combine_seed(base.seed, task.mi + 1,
                                                task.si + 1);
    const std::uint64_t eval_seed = combine_seed(base.seed, 0, task.si + 1);

    const fs::path dir = fs::path(out) / ("mix_" + fmt_double(mix)) /
                         ("seed_" + std::to_string(task.si));
    fs::create_directories(dir / "data");

    // Training data drawn against the budget.
    datagen::TwoMoonsOptions gen_opt = base.gen;
    gen_opt.n_src = n_src;
    gen_opt.n_tgt = std::max<std::size_t>(n_tgt, 4);
    gen_opt.seed = run_seed;
    const auto gen = datagen::gen_two_moons(gen_opt);
    datagen::write_preferences_jsonl((dir / "data" / "src_prefs.jsonl").string(),
                                     gen.source.triples);
    const bool has_tgt = n_tgt >= 4;
    if (has_tgt) {
      datagen::write_examples_jsonl(
          (dir / "data" / "tgt_unlabeled.jsonl").string(),
          gen.target.examples);
    }

    // Held-out evaluation target, shared across mixes of the same seed and
    // outside the data budget.
    datagen::TwoMoonsOptions eval_opt = base.gen;
    eval_opt.n_src = 4;
    eval_opt.n_tgt = 500;
    eval_opt.seed = eval_seed;
    const auto eval_gen = datagen::gen_two_moons(eval_opt);
    datagen::write_truth_jsonl((dir / "data" / "tgt_truth.jsonl").string(),
                               eval_gen.target.truth);

    json cfg_json;
    cfg_json["method"] = has_tgt ? base.method : "src-pref";
    cfg_json["seed"] = run_seed;
    cfg_json["data"] = {{"src_prefs", (dir / "data" / "src_prefs.jsonl").string()},
                        {"tgt_truth", (dir / "data" / "tgt_truth.jsonl").string()},
                        {"eval_pairs", base.eval_pairs}};
    if (has_tgt) {
      cfg_json["data"]["tgt_unlabeled"] =
          (dir / "data" / "tgt_unlabeled.jsonl").string();
    }
    if (!base.model.empty()) cfg_json["model"] = base.model;
    if (!base.train.empty()) cfg_json["train"] = base.train;

    const RunConfig cfg = parse_run_config(cfg_json.dump(), "scaling-run");
    const TrainOutputs res = run_train(cfg, (dir / "run").string(), args.force);
    RunCell cell;
    cell.valid = res.eval_accuracy_tgt_pairwise.has_value();
    cell.acc = res.eval_accuracy_tgt_pairwise.value_or(0.0);
    cells[task.mi][task.si] = cell;
  };

  if (args.jobs <= 1) {
    for (const auto& task : tasks) run_one(task);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const std::size_t n_workers = std::min(args.jobs, tasks.size());
    std::vector<std::exception_ptr> errors(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            run_one(tasks[i]);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<ScalingRow> rows;
  for (std::size_t mi = 0; mi < args.grid.size(); ++mi) {
    std::vector<double> accs;
    for (const auto& cell : cells[mi]) {
      if (cell.valid) accs.push_back(cell.acc);
    }
    if (accs.empty()) continue;
    ScalingRow row;
    row.mix = args.grid[mi];
    const std::size_t n_tgt = static_cast<std::size_t>(
        std::llround(row.mix * double(args.budget)));
    row.n_tgt_points = n_tgt;
    row.n_src_points = args.budget - n_tgt;
    row.n_seeds = accs.size();
    double mean = 0.0;
    for (const double a : accs) mean += a;
    mean /= double(accs.size());
    double var = 0.0;
    for (const double a : accs) var += (a - mean) * (a - mean);
    row.acc_tgt_mean = mean;
    row.acc_tgt_stderr =
        accs.size() > 1 ? std::sqrt(var / double(accs.size() - 1)) /
                              std::sqrt(double(accs.size()))
                        : 0.0;
    rows.push_back(row);
  }

  std::string csv =
      "mix,n_src_points,n_tgt_points,n_seeds,acc_tgt_mean,acc_tgt_stderr\n";
  for (const auto& r : rows) {
    csv += fmt_double(r.mix) + "," + std::to_string(r.n_src_points) + "," +
           std::to_string(r.n_tgt_points) + "," + std::to_string(r.n_seeds) +
           "," + fmt_double(r.acc_tgt_mean) + "," +
           fmt_double(r.acc_tgt_stderr) + "\n";
  }
  write_text(csv_path, csv);

  svg::LineSeries series;
  series.name = base.method + " target accuracy";
  series.color = "#1f77b4";
  for (const auto& r : rows) {
    series.points.push_back({r.mix, r.acc_tgt_mean});
    series.yerr.push_back(r.acc_tgt_stderr);
  }
  svg::write_lines((fs::path(out) / "scaling.svg").string(),
                   "data-mix scaling at fixed budget " +
                       std::to_string(args.budget),
                   "target fraction of budget", "target accuracy", {series});
  return rows;
}

}  // namespace dial::run
