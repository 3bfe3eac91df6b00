// SPDX-License-Identifier: Apache-2.0
// ftlab: prepare data, train one run, sweep hyperparameters, print reports.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ftlab/cli/commands.hpp"
#include "ftlab/cli/experiment.hpp"
#include "ftlab/error.hpp"
#include "ftlab/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace ftlab;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  bool synthetic = false;
  std::optional<std::size_t> n;
  std::optional<fs::path> out;
};

void add_overrides(CLI::App* cmd, fs::path& config, Overrides& o) {
  cmd->add_option("--config", config, "experiment config (JSON)")->required();
  cmd->add_option("--seed", o.seed, "override the experiment seed");
  cmd->add_flag("--synthetic", o.synthetic, "use the synthetic agreement corpus");
  cmd->add_option("--n", o.n, "synthetic train size; eval splits get n/4");
  cmd->add_option("--out", o.out, "output directory");
}

cli::ExperimentConfig resolve(const fs::path& path, const Overrides& o) {
  cli::ExperimentConfig c = cli::load_config(path);
  if (o.seed) c.set_seed(*o.seed);
  if (o.synthetic || o.n) {
    c.data.synthetic = true;
    c.data.dir.reset();
  }
  if (o.n) {
    c.data.n = *o.n;
    c.data.n_eval = *o.n / 4;
  }
  if (o.out) c.output_dir = *o.out;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-tuning laboratory: prepare, train, optimize, report"};
  app.require_subcommand(1);

  cli::PrepareOptions prep;
  bool no_balance = false;
  auto* prepare = app.add_subcommand("prepare", "write canonical train / id_eval / ood_eval splits");
  prepare->add_flag("--synthetic", prep.synthetic, "generate the synthetic agreement corpus");
  prepare->add_option("--n", prep.n, "synthetic train size; eval splits get n/4");
  prepare->add_option("--seed", prep.seed, "generator / balancing seed");
  prepare->add_option("--train", prep.cola_train, "CoLA in-domain train TSV");
  prepare->add_option("--id-eval", prep.cola_id_eval, "CoLA in-domain dev TSV");
  prepare->add_option("--ood-eval", prep.cola_ood_eval, "CoLA out-of-domain dev TSV");
  prepare->add_flag("--no-balance", no_balance, "keep CoLA label proportions as given");
  prepare->add_option("--out", prep.out, "output directory")->required();

  fs::path train_config;
  Overrides train_over;
  cli::TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "run one experiment into its output directory");
  add_overrides(train, train_config, train_over);
  train->add_flag("--inline-timing", train_opts.inline_timing,
                  "write measured epoch times into the trace instead of null");

  fs::path opt_config;
  Overrides opt_over;
  std::optional<std::size_t> trials;
  std::optional<std::string> sampler;
  auto* optimize = app.add_subcommand("optimize", "hyperparameter sweep over the config's space");
  add_overrides(optimize, opt_config, opt_over);
  optimize->add_option("--trials", trials, "override n_trials");
  optimize->add_option("--sampler", sampler, "tpe or random");

  std::vector<fs::path> report_inputs;
  std::optional<fs::path> report_out, curves;
  bool report_timing = false;
  auto* report = app.add_subcommand("report", "accuracy and efficiency tables from traces");
  report->add_option("paths", report_inputs, "trace files or directories to search")->required();
  report->add_option("--out", report_out, "also write the tables to this file");
  report->add_option("--curves", curves, "write per-epoch curves as CSV");
  report->add_flag("--timing", report_timing, "fill epoch times from timing.jsonl sidecars");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*prepare) {
      prep.balance = !no_balance;
      const auto stats = cli::cmd_prepare(prep);
      std::cout << stats.dump(2) << '\n';
    } else if (*train) {
      const auto c = resolve(train_config, train_over);
      const auto r = cli::cmd_train(c, train_opts);
      const auto& last = r.trace.final_epoch();
      std::cout << "run " << r.trace.run_id << " (" << r.trace.strategy << ") -> "
                << c.output_dir.string() << "\nfinal id_acc " << last.id_acc << " ood_acc "
                << last.ood_acc << " loss " << last.loss << '\n';
    } else if (*optimize) {
      auto c = resolve(opt_config, opt_over);
      if (trials) c.n_trials = *trials;
      if (sampler) c.sampler = hpo::sampler_from_string(*sampler);
      c.validate();
      const auto r = cli::cmd_optimize(c);
      std::size_t ok = 0;
      for (const auto& t : r.trials) ok += t.status == hpo::TrialStatus::ok;
      std::cout << ok << "/" << r.trials.size() << " trials ok; best trial " << r.best.id
                << " objective " << *r.best.objective << "\nassignment " << r.best.assignment.dump()
                << "\nbest config " << (c.output_dir / cli::kBestConfigFile).string() << '\n';
    } else if (*report) {
      const auto traces = cli::find_traces(report_inputs);
      const std::string text = cli::format_report(cli::summarize(traces, report_timing));
      std::cout << text;
      if (report_out) {
        std::ofstream out(*report_out, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + report_out->string());
        out << text;
      }
      if (curves) cli::write_curves(*curves, traces, report_timing);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const train::TrainingError& e) {
    std::cerr << "training aborted at epoch " << e.epoch() << ", step " << e.step() << ": "
              << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
