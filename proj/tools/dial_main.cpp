// Batch frontend: dataset generation, training, evaluation, the bound
// verifier, embedding projection, exact-OT oracles and the data-mix scaling
// driver.
//
// Exit codes: 0 success, 2 usage/config error, 3 numeric failure.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dial/format.hpp"
#include "dial/runner.hpp"
#include "dial/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct GenCli {
  std::string task;
  std::string out;
  std::uint64_t seed = 0;
  bool force = false;
  // two-moons
  std::size_t n_src = 50;
  std::size_t n_tgt = 500;
  std::string shift = "fewshot";
  double angle = 0.0;
  std::vector<double> offset = {0.0, 0.0};
  double noise = 0.1;
  double arc_fraction = 0.4;
  // odd-one-out
  std::size_t categories = 5;
  std::size_t items_per_cat = 100;
  std::size_t src_base = 0;
  std::size_t tgt_base = 1;
  std::size_t n_instances = 200;
  std::size_t dim = 8;
  double cluster_sd = 0.15;
  double center_scale = 1.0;
  // gaussian-pair
  std::size_t g_dim = 2;
  double mean_shift = 0.0;
  std::size_t g_n = 1024;
};

int do_gen(const GenCli& cli) {
  dial::run::GenArgs args;
  args.task = cli.task;
  args.seed = cli.seed;
  args.out_dir = cli.out;
  args.force = cli.force;
  args.moons.n_src = cli.n_src;
  args.moons.n_tgt = cli.n_tgt;
  if (cli.shift == "fewshot") {
    args.moons.shift = dial::datagen::MoonShift::Fewshot;
  } else if (cli.shift == "rotate") {
    args.moons.shift = dial::datagen::MoonShift::Rotate;
  } else if (cli.shift == "translate") {
    args.moons.shift = dial::datagen::MoonShift::Translate;
  } else {
    throw dial::run::ConfigError("gen: unknown --shift " + cli.shift);
  }
  args.moons.angle_deg = cli.angle;
  args.moons.offset = {cli.offset.at(0), cli.offset.at(1)};
  args.moons.noise_sd = cli.noise;
  args.moons.arc_fraction = cli.arc_fraction;
  args.ooo.categories = cli.categories;
  args.ooo.items_per_cat = cli.items_per_cat;
  args.ooo.src_base_cat = cli.src_base;
  args.ooo.tgt_base_cat = cli.tgt_base;
  args.ooo.n = cli.n_instances;
  args.ooo.dim = cli.dim;
  args.ooo.cluster_sd = cli.cluster_sd;
  args.ooo.center_scale = cli.center_scale;
  args.gauss_dim = cli.g_dim;
  args.gauss_mean_shift = cli.mean_shift;
  args.gauss_n = cli.g_n;
  dial::run::run_gen(args);
  std::cout << "wrote " << dial::run::resolve_out_dir(cli.out) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dial: domain-invariant reward models via adversarial "
               "Wasserstein alignment"};
  app.require_subcommand(1);

  GenCli gen_cli;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset pair");
  gen->add_option("--task", gen_cli.task,
                  "two-moons | odd-one-out | gaussian-pair")
      ->required();
  gen->add_option("--out", gen_cli.out, "output directory")->required();
  gen->add_option("--seed", gen_cli.seed, "generator seed");
  gen->add_flag("--force", gen_cli.force, "overwrite existing outputs");
  gen->add_option("--n-src", gen_cli.n_src, "source points (two-moons)");
  gen->add_option("--n-tgt", gen_cli.n_tgt, "target points (two-moons)");
  gen->add_option("--shift", gen_cli.shift, "fewshot | rotate | translate");
  gen->add_option("--angle", gen_cli.angle, "rotation degrees (rotate mode)");
  gen->add_option("--offset", gen_cli.offset, "dx dy (translate mode)")
      ->expected(2);
  gen->add_option("--noise", gen_cli.noise, "gaussian noise sd");
  gen->add_option("--arc-fraction", gen_cli.arc_fraction,
                  "source arc coverage (fewshot mode)");
  gen->add_option("--categories", gen_cli.categories, "odd-one-out categories");
  gen->add_option("--items-per-cat", gen_cli.items_per_cat,
                  "vocabulary size per category");
  gen->add_option("--src-base", gen_cli.src_base, "source base category");
  gen->add_option("--tgt-base", gen_cli.tgt_base, "target base category");
  gen->add_option("--n", gen_cli.n_instances, "instances per domain");
  gen->add_option("--dim", gen_cli.dim, "item feature dimension");
  gen->add_option("--cluster-sd", gen_cli.cluster_sd, "category cluster sd");
  gen->add_option("--center-scale", gen_cli.center_scale,
                  "category center scale");
  gen->add_option("--gauss-dim", gen_cli.g_dim, "gaussian-pair dimension");
  gen->add_option("--mean-shift", gen_cli.mean_shift,
                  "gaussian-pair first-coordinate shift");
  gen->add_option("--gauss-n", gen_cli.g_n, "gaussian-pair sample count");

  std::string train_config, train_out;
  bool train_force = false;
  auto* train = app.add_subcommand("train", "train a reward model from a "
                                            "JSON config");
  train->add_option("--config", train_config, "config JSON path")->required();
  train->add_option("--out", train_out, "run directory (overrides config)");
  train->add_flag("--force", train_force, "overwrite existing outputs");

  std::string eval_ck, eval_data, eval_out;
  std::vector<std::string> eval_metrics;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_ck, "checkpoint.json path")->required();
  eval->add_option("--data", eval_data, "preference or truth JSONL")->required();
  eval->add_option("--metrics", eval_metrics, "restrict emitted metric keys");
  eval->add_option("--out", eval_out, "also write the JSON here");

  std::string bound_ck, bound_src, bound_tgt, bound_out = "bound_report.json";
  std::size_t bound_n = 128;
  std::uint64_t bound_seed = 0;
  auto* bound = app.add_subcommand(
      "bound", "check the generalization bound on a checkpoint");
  bound->add_option("--checkpoint", bound_ck, "checkpoint.json path")
      ->required();
  bound->add_option("--src", bound_src, "source prefs or truth JSONL")
      ->required();
  bound->add_option("--tgt", bound_tgt, "target truth JSONL")->required();
  bound->add_option("--n", bound_n, "sample size per side (<= 512)");
  bound->add_option("--seed", bound_seed, "subsample seed");
  bound->add_option("--out", bound_out, "report path");

  std::string proj_ck, proj_src, proj_tgt, proj_out;
  bool proj_force = false;
  auto* project = app.add_subcommand(
      "project", "project embeddings onto top-2 principal components");
  project->add_option("--checkpoint", proj_ck, "checkpoint.json path")
      ->required();
  project->add_option("--src-prefs", proj_src, "source preference JSONL")
      ->required();
  project->add_option("--tgt-truth", proj_tgt, "target truth JSONL")
      ->required();
  project->add_option("--out", proj_out, "output directory")->required();
  project->add_flag("--force", proj_force, "overwrite existing outputs");

  std::string wd_a, wd_b, wd_method = "auto";
  auto* wd = app.add_subcommand("oracle-wd",
                                "exact W1 between two JSONL point files");
  wd->add_option("--a", wd_a, "point file A")->required();
  wd->add_option("--b", wd_b, "point file B")->required();
  wd->add_option("--method", wd_method, "auto | 1d | assignment");

  dial::run::ScalingArgs scaling_args;
  std::vector<double> scaling_grid = {0.0, 0.2, 0.4, 0.6, 0.8};
  auto* scaling = app.add_subcommand(
      "scaling", "target-fraction sweep at a fixed data budget");
  scaling->add_option("--config", scaling_args.base_config_path,
                      "scaling config JSON")
      ->required();
  scaling->add_option("--out", scaling_args.out_dir, "output directory")
      ->required();
  scaling->add_option("--budget", scaling_args.budget,
                      "total source+target points per run");
  scaling->add_option("--grid", scaling_grid, "target fractions in [0,1)");
  scaling->add_option("--seeds", scaling_args.seeds, "seeds per grid point");
  scaling->add_option("--jobs", scaling_args.jobs, "parallel workers");
  scaling->add_flag("--force", scaling_args.force,
                    "overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return do_gen(gen_cli);
    if (*train) {
      const auto cfg = dial::run::load_run_config(train_config);
      std::string out = !train_out.empty() ? train_out : cfg.out_dir;
      if (out.empty()) {
        throw dial::run::ConfigError(
            "train: no output directory (config \"out\" or --out)");
      }
      const auto res = dial::run::run_train(cfg, out, train_force);
      std::cout << "run dir: " << res.out_dir << "\n"
                << "steps: " << res.steps << "\n"
                << "eval_accuracy_src: " << dial::fmt_double(res.eval_accuracy_src)
                << "\n";
      if (res.eval_accuracy_tgt) {
        std::cout << "eval_accuracy_tgt: "
                  << dial::fmt_double(*res.eval_accuracy_tgt) << "\n";
      }
      return kExitOk;
    }
    if (*eval) {
      const std::string text =
          dial::run::run_eval_cmd(eval_ck, eval_data, eval_metrics);
      std::cout << text;
      if (!eval_out.empty()) {
        std::ofstream f(eval_out, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open " + eval_out);
        f << text;
      }
      return kExitOk;
    }
    if (*bound) {
      const auto outcome = dial::run::run_bound(bound_ck, bound_src, bound_tgt,
                                                bound_n, bound_seed, bound_out);
      std::cout << outcome.json_text;
      if (!outcome.report.holds) {
        std::cerr << "bound violated: eps_T="
                  << dial::fmt_double(outcome.report.eps_T)
                  << " > rhs=" << dial::fmt_double(outcome.report.rhs)
                  << " (implementation-bug detector)\n";
        return kExitNumeric;
      }
      return kExitOk;
    }
    if (*project) {
      dial::run::run_project(proj_ck, proj_src, proj_tgt, proj_out, proj_force);
      std::cout << "wrote " << dial::run::resolve_out_dir(proj_out) << "\n";
      return kExitOk;
    }
    if (*wd) {
      const auto res = dial::run::run_oracle_wd(wd_a, wd_b, wd_method);
      std::cout << "{\"w1\": " << dial::fmt_double(res.w1)
                << ", \"n\": " << res.n << ", \"dim\": " << res.dim
                << ", \"method\": \"" << res.method << "\"}\n";
      return kExitOk;
    }
    if (*scaling) {
      scaling_args.grid = scaling_grid;
      const auto rows = dial::run::run_scaling(scaling_args);
      std::cout << "mix,acc_tgt_mean,acc_tgt_stderr\n";
      for (const auto& r : rows) {
        std::cout << dial::fmt_double(r.mix) << ","
                  << dial::fmt_double(r.acc_tgt_mean) << ","
                  << dial::fmt_double(r.acc_tgt_stderr) << "\n";
      }
      return kExitOk;
    }
  } catch (const dial::run::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const dial::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
