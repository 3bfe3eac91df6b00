// SPDX-License-Identifier: Apache-2.0
#include "ftlab/cli/commands.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "ftlab/data/cola.hpp"
#include "ftlab/data/synthetic.hpp"
#include "ftlab/error.hpp"
#include "ftlab/kernels/kernels.hpp"
#include "ftlab/lora/lora.hpp"
#include "ftlab/model/checkpoint.hpp"
#include "ftlab/train/trainer.hpp"

namespace ftlab::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::uint64_t full_hash(const TransformerClassifier& m) {
  std::vector<std::string> names;
  for (const auto& p : m.parameters()) names.push_back(p.name);
  return m.hash_of(names);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

// Wall-clock and host details live here and nowhere else.
class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {
    if (!out_) throw Error("cannot write " + path.string());
  }

  void line(const std::string& msg) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
    out_.flush();
  }

  void header(const std::string& command) {
    char host[256] = "unknown";
    gethostname(host, sizeof host - 1);
    line(command + " host=" + host + " kernels=" + std::string(kernels::active().name));
  }

  void epochs(const train::MetricsTrace& trace, const std::string& label) {
    for (const auto& e : trace.epochs) {
      std::ostringstream s;
      s << label << " epoch " << e.epoch << " loss " << e.loss << " id " << e.id_acc << " ood "
        << e.ood_acc << " time_s " << e.iter_time_s.value_or(0.0) << " mem_bytes " << e.mem_bytes;
      line(s.str());
    }
  }

 private:
  std::ofstream out_;
};

json counts_json(std::span<const data::Example> xs) {
  const auto c = data::label_counts(xs);
  return {{"total", c.total()},
          {"acceptable", c.acceptable},
          {"unacceptable", c.unacceptable},
          {"acceptable_fraction", c.acceptable_fraction()}};
}

json split_counts(const data::Splits& s) {
  return {{"train", counts_json(s.train)},
          {"id_eval", counts_json(s.id_eval)},
          {"ood_eval", counts_json(s.ood_eval)}};
}

void save_vocab(const fs::path& path, const data::Vocab& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << json(v).dump() << '\n';
}

}  // namespace

data::Splits load_splits(const ExperimentConfig& c) {
  if (c.data.synthetic) return data::synthetic_splits(c.data.n, c.data.n_eval, c.data.seed.value_or(c.seed));
  if (!c.data.dir) throw ConfigError("data: dir is required when synthetic is false");
  return data::read_splits(*c.data.dir);
}

data::Vocab make_vocab(const ExperimentConfig& c, const data::Splits& splits) {
  return data::build_vocab(splits.train, 1, c.model.vocab_size);
}

RunResult run_experiment(const ExperimentConfig& c, const data::Splits& splits,
                         const data::Vocab& vocab) {
  c.validate();
  const json identity = run_identity(c);

  const Rng root(c.seed);
  Rng init = root.fork(1);
  TransformerClassifier model = TransformerClassifier::build(c.model, init);

  train::TrainInputs in;
  in.vocab = &vocab;
  in.splits = &splits;
  in.run_id = train::make_run_id(identity);
  in.hyperparameters = identity;

  std::optional<TransformerClassifier> teacher;
  std::optional<train::MetricsTrace> teacher_trace;
  std::optional<std::uint64_t> before, after, base_init;
  if (c.strategy == train::Strategy::cd) {
    teacher = model.clone();
    if (c.distill->teacher_init == train::TeacherInit::finetuned) {
      train::TrainConfig tc = c.train;
      tc.epochs = c.distill->teacher_epochs;
      tc.learning_rate = c.distill->teacher_learning_rate.value_or(c.train.learning_rate);
      tc.k_per_class.reset();
      tc.prompt = data::Template::cd_teacher;
      train::TrainInputs ti = in;
      ti.run_id = train::make_run_id({{"teacher_of", in.run_id}});
      ti.hyperparameters = {{"teacher_of", in.run_id}, {"train", tc}};
      teacher_trace = train::train(*teacher, ti, tc, train::Strategy::pbft);
    }
    teacher->set_all_trainable(false);
    in.teacher = &*teacher;
    in.distill = c.distill;
    before = full_hash(*teacher);
  }
  if (train::uses_lora(c.strategy)) {
    lora::inject(model, *c.lora, init);
    base_init = model.base_hash();
  }

  train::MetricsTrace trace = train::train(model, in, c.train, c.strategy);
  if (teacher) after = full_hash(*teacher);
  return RunResult{std::move(trace), std::move(model), std::move(teacher_trace), base_init, before, after};
}

json cmd_prepare(const PrepareOptions& o) {
  data::Splits splits;
  json stats;
  if (o.synthetic) {
    if (o.cola_train || o.cola_id_eval || o.cola_ood_eval)
      throw ConfigError("prepare: --synthetic cannot be combined with CoLA inputs");
    if (o.n < 8) throw ConfigError("prepare: --n must be at least 8");
    splits = data::synthetic_splits(o.n, o.n / 4, o.seed);
    std::set<std::string> shared;
    const auto in_words = data::in_domain_lexicon().words();
    for (const auto& w : data::out_of_domain_lexicon().words())
      if (in_words.count(w)) shared.insert(w);
    stats = {{"source", "synthetic"}, {"seed", o.seed}, {"n", o.n},
             {"shared_content_words", shared.size()}};
  } else {
    if (!o.cola_train || !o.cola_id_eval || !o.cola_ood_eval)
      throw ConfigError("prepare: give --synthetic or all of --train, --id-eval, --ood-eval");
    const auto train_rows = data::read_cola_tsv(*o.cola_train);
    const auto id_rows = data::read_cola_tsv(*o.cola_id_eval);
    const auto ood_rows = data::read_cola_tsv(*o.cola_ood_eval);
    const Rng root(o.seed);
    Rng a = root.fork(1), b = root.fork(2);
    splits.train = o.balance ? data::balance(train_rows, a) : train_rows;
    splits.id_eval = o.balance ? data::balance(id_rows, b) : id_rows;
    splits.ood_eval = ood_rows;
    stats = {{"source", "cola"},
             {"seed", o.seed},
             {"balanced", o.balance},
             {"input", {{"train", counts_json(train_rows)},
                        {"id_eval", counts_json(id_rows)},
                        {"ood_eval", counts_json(ood_rows)}}}};
  }
  stats["splits"] = split_counts(splits);
  fs::create_directories(o.out);
  data::write_splits(o.out, splits);
  write_json(o.out / kStatsFile, stats);
  return stats;
}

RunResult cmd_train(const ExperimentConfig& c, const TrainOptions& o) {
  c.validate();
  const fs::path& dir = c.output_dir;
  fs::create_directories(dir);
  RunLog log(dir / kLogFile);
  log.header("train strategy=" + train::to_string(c.strategy) + " seed=" + std::to_string(c.seed));

  const data::Splits splits = load_splits(c);
  const data::Vocab vocab = make_vocab(c, splits);
  save_config(dir / kConfigFile, c);
  save_vocab(dir / kVocabFile, vocab);

  RunResult r = [&] {
    try {
      return run_experiment(c, splits, vocab);
    } catch (const std::exception& e) {
      log.line(std::string("failed: ") + e.what());
      throw;
    }
  }();

  write_trace(dir / kTraceFile, r.trace, o.inline_timing);
  write_timing(dir / kTimingFile, r.trace);
  if (r.teacher_trace) {
    log.epochs(*r.teacher_trace, "teacher");
    write_trace(dir / kTeacherTraceFile, *r.teacher_trace, o.inline_timing);
    write_timing(dir / kTeacherTimingFile, *r.teacher_trace);
  }
  log.epochs(r.trace, "student");

  json meta = {{"run_id", r.trace.run_id}, {"strategy", r.trace.strategy}};
  if (r.base_hash_init) meta["base_hash_init"] = hex(*r.base_hash_init);
  checkpoint::save(r.model, dir / kCheckpointFile, meta);
  if (r.model.has_adapters()) lora::save_adapters(r.model, dir / kAdapterFile);

  std::size_t trainable = 0;
  for (const auto& p : r.model.trainable_parameters()) trainable += p.tensor.numel();
  const auto& last = r.trace.final_epoch();
  json summary = {{"run_id", r.trace.run_id},
                  {"strategy", r.trace.strategy},
                  {"epochs", r.trace.epochs.size()},
                  {"final_loss", last.loss},
                  {"final_id_acc", last.id_acc},
                  {"final_ood_acc", last.ood_acc},
                  {"max_id_acc", r.trace.max_id_acc()},
                  {"max_ood_acc", r.trace.max_ood_acc()},
                  {"max_mem_bytes", r.trace.max_mem_bytes()},
                  {"trainable_parameters", trainable},
                  {"total_parameters", r.model.parameter_count()},
                  {"vocab_size", vocab.size()}};
  if (r.base_hash_init) {
    summary["base_hash_init"] = hex(*r.base_hash_init);
    summary["base_hash_final"] = hex(r.model.base_hash());
  }
  if (r.teacher_hash_before) {
    summary["teacher_hash_before"] = hex(*r.teacher_hash_before);
    summary["teacher_hash_after"] = hex(*r.teacher_hash_after);
  }
  write_json(dir / kSummaryFile, summary);
  log.line("done run_id=" + r.trace.run_id);
  return r;
}

hpo::OptimizeResult cmd_optimize(const ExperimentConfig& c) {
  c.validate();
  if (!c.space) throw ConfigError("optimize: the config declares no space");
  const hpo::SearchSpace space = hpo::space_by_name(*c.space);
  extract_assignment(c, space);  // every parameter must map onto this strategy

  const fs::path& dir = c.output_dir;
  fs::create_directories(dir / "trials");
  RunLog log(dir / kLogFile);
  log.header("optimize space=" + space.name + " sampler=" + hpo::to_string(c.sampler) +
             " trials=" + std::to_string(c.n_trials) + " seed=" + std::to_string(c.seed));
  save_config(dir / kConfigFile, c);

  const data::Splits splits = load_splits(c);
  const data::Vocab vocab = make_vocab(c, splits);

  hpo::TrialStore store(dir / kTrialsFile);
  hpo::OptimizeOptions opts;
  opts.sampler = c.sampler;
  opts.trial_seed = c.seed;
  opts.store = &store;

  const hpo::Objective objective = [&](const hpo::Assignment& a, std::size_t id) {
    ExperimentConfig tc = apply_assignment(c, a);
    char name[32];
    std::snprintf(name, sizeof name, "trial-%04zu", id);
    try {
      RunResult r = run_experiment(tc, splits, vocab);
      const fs::path rel = fs::path("trials") / name;
      fs::create_directories(dir / rel);
      write_trace(dir / rel / kTraceFile, r.trace);
      write_timing(dir / rel / kTimingFile, r.trace);
      const auto& last = r.trace.final_epoch();
      log.line(std::string(name) + " id_acc " + std::to_string(last.id_acc) + " assignment " + a.dump());
      hpo::Evaluation ev;
      ev.objective = last.id_acc;
      ev.aux = {{"run_id", r.trace.run_id},
                {"final_ood_acc", last.ood_acc},
                {"final_loss", last.loss},
                {"max_id_acc", r.trace.max_id_acc()},
                {"max_ood_acc", r.trace.max_ood_acc()},
                {"trace", (rel / kTraceFile).generic_string()}};
      return ev;
    } catch (const std::exception& e) {
      log.line(std::string(name) + " failed: " + e.what());
      throw;
    }
  };

  Rng rng = Rng(c.seed).fork(7);
  hpo::OptimizeResult result = hpo::optimize(space, objective, c.n_trials, rng, opts);

  ExperimentConfig best = apply_assignment(c, result.best.assignment);
  best.output_dir = dir / "best";
  save_config(dir / kBestConfigFile, best);
  log.line("best trial " + std::to_string(result.best.id) + " objective " +
           std::to_string(*result.best.objective));
  return result;
}

std::vector<fs::path> find_traces(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> out;
  std::set<fs::path> seen;
  auto take = [&](const fs::path& p) {
    if (seen.insert(p).second) out.push_back(p);
  };
  for (const auto& in : inputs) {
    if (fs::is_regular_file(in)) {
      take(in);
    } else if (fs::is_directory(in)) {
      std::vector<fs::path> local;
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().filename() == kTraceFile) local.push_back(e.path());
      }
      std::sort(local.begin(), local.end());
      for (const auto& p : local) take(p);
    } else {
      throw Error("no such file or directory: " + in.string());
    }
  }
  return out;
}

namespace {

train::MetricsTrace read_with_sidecar(const fs::path& trace, bool timing_sidecars) {
  const fs::path timing = trace.parent_path() / kTimingFile;
  if (timing_sidecars && trace.filename() == kTraceFile && fs::exists(timing)) return train::read_trace(trace, timing);
  return train::read_trace(trace);
}

}  // namespace

std::vector<ReportRow> summarize(const std::vector<fs::path>& traces, bool timing_sidecars) {
  if (traces.empty()) throw DataError("report: no trace files found");
  std::vector<ReportRow> rows;
  std::map<std::string, std::size_t> index;
  for (const auto& path : traces) {
    const train::MetricsTrace t = read_with_sidecar(path, timing_sidecars);
    if (t.epochs.empty()) throw DataError("report: trace has no epochs: " + path.string());
    auto [it, fresh] = index.emplace(t.strategy, rows.size());
    if (fresh) {
      ReportRow r;
      r.method = t.strategy;
      r.max_id_acc = t.max_id_acc();
      r.max_ood_acc = t.max_ood_acc();
      rows.push_back(r);
    }
    ReportRow& r = rows[it->second];
    r.max_id_acc = std::max(r.max_id_acc, t.max_id_acc());
    r.max_ood_acc = std::max(r.max_ood_acc, t.max_ood_acc());
    if (auto tm = t.max_iter_time()) r.max_iter_time_s = std::max(r.max_iter_time_s.value_or(*tm), *tm);
    r.max_mem_mb = std::max(r.max_mem_mb, static_cast<double>(t.max_mem_bytes()) / (1024.0 * 1024.0));
    ++r.runs;
  }
  return rows;
}

namespace {

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

std::string table(const std::string& title, const std::vector<std::string>& head,
                  const std::vector<std::vector<std::string>>& body) {
  std::vector<std::size_t> w(head.size());
  for (std::size_t i = 0; i < head.size(); ++i) w[i] = head[i].size();
  for (const auto& row : body)
    for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], row[i].size());
  auto render = [&](const std::vector<std::string>& cells) {
    std::string s = "|";
    for (std::size_t i = 0; i < cells.size(); ++i) {
      s += ' ' + cells[i] + std::string(w[i] - cells[i].size(), ' ') + " |";
    }
    return s + '\n';
  };
  std::string out = title + "\n\n" + render(head) + "|";
  for (auto x : w) out += std::string(x + 2, '-') + "|";
  out += '\n';
  for (const auto& row : body) out += render(row);
  return out;
}

}  // namespace

std::string format_report(const std::vector<ReportRow>& rows) {
  std::vector<std::vector<std::string>> acc, eff;
  for (const auto& r : rows) {
    acc.push_back({r.method, fixed4(r.max_id_acc), fixed4(r.max_ood_acc)});
    eff.push_back({r.method, r.max_iter_time_s ? fixed4(*r.max_iter_time_s) : "n/a",
                   fixed4(r.max_mem_mb)});
  }
  return table("Accuracy (max over epochs)", {"Method", "Max In-Domain", "Max Out-Domain"},
               acc) +
         "\n" +
         table("Efficiency (max over epochs)",
               {"Method", "Max Iteration Time (s)", "Max Memory (MB)"}, eff);
}

void write_curves(const fs::path& path, const std::vector<fs::path>& traces, bool timing_sidecars) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "method,run_id,trace,epoch,loss,id_acc,ood_acc,iter_time_s,mem_bytes\n";
  out << std::setprecision(17);
  for (const auto& p : traces) {
    const train::MetricsTrace t = read_with_sidecar(p, timing_sidecars);
    for (const auto& e : t.epochs) {
      out << t.strategy << ',' << t.run_id << ',' << p.generic_string() << ',' << e.epoch << ','
          << e.loss << ',' << e.id_acc << ',' << e.ood_acc << ',';
      if (e.iter_time_s) out << *e.iter_time_s;
      out << ',' << e.mem_bytes << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace ftlab::cli
