// Copyright 2026 The Hydra Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// hydra_lab: data generation, training, evaluation, ablations and benchmarks.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hydra/bench.hpp"
#include "hydra/errors.hpp"
#include "hydra/rng.hpp"
#include "hydra/train.hpp"

#ifndef HYDRA_VERSION
#define HYDRA_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace hydra {
namespace {

constexpr const char* kDefaultRoot = "hydra_runs";
constexpr const char* kComponents[] = {"sga", "moe", "workspace", "pkm"};
// gen-data flags that set protocol knobs.
const std::vector<std::pair<std::string, std::string>> kDataKnobs = {
    {"--chain-len", "chain_len"},     {"--n-vars", "n_vars"},       {"--n-distractors", "n_distractors"},
    {"--n-facts", "n_facts"},         {"--seq-len", "seq_len"},     {"--premise-pos", "premise_pos"},
    {"--n-domains", "n_domains"}};
const std::vector<std::string> kDataTasks = {"logic", "pkm_recall", "distant_premise", "moe_dense",
                                             "random"};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string out_root() {
  const char* env = std::getenv("HYDRA_LAB_OUT");
  return env && *env ? env : kDefaultRoot;
}

std::pair<std::string, std::string> split_assignment(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_metrics(const fs::path& path, const std::map<std::string, double>& metrics) {
  std::string csv = "metric,value\n";
  for (const auto& [k, v] : metrics) csv += k + "," + num(v) + "\n";
  write_text(path, csv);
}

void print_metrics(const std::map<std::string, double>& metrics) {
  for (const auto& [k, v] : metrics) std::cout << k << "=" << num(v) << "\n";
}

// One manifest per run directory. Only the timestamps vary between
// identical invocations.
struct Manifest {
  json doc;

  Manifest(const std::string& command, const std::vector<std::string>& args) {
    doc["command"] = command;
    doc["args"] = args;
    doc["version"] = HYDRA_VERSION;
    doc["started_at"] = utc_now();
  }
  void finish(const fs::path& dir, const std::vector<std::string>& outputs) {
    doc["outputs"] = outputs;
    doc["finished_at"] = utc_now();
    write_text(dir / "manifest.json", doc.dump(2) + "\n");
  }
};

// ---- run settings: flag > config file > default ----

struct Setting {
  std::string value;
  std::string source = "default";
};

struct RunFlags {
  std::string experiment;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string seeds;
  double scale = 1.0;
  std::string arm = "hydra";
  std::vector<std::string> ablate;
  bool curriculum = false;
  std::string corpus;
  std::vector<std::string> sets, models;
  std::string out;
  std::string components = "sga,moe,workspace,pkm";
};

struct Resolved {
  ExperimentOptions options;
  std::vector<std::uint64_t> seeds;
  ExperimentProtocol protocol;
  std::map<std::string, std::string> sources;  // key -> flag | file | default
};

Resolved resolve(const RunFlags& f, const CLI::App& cmd) {
  std::map<std::string, Setting> run = {{"arm", {f.arm}},
                                        {"seed", {std::to_string(f.seed)}},
                                        {"scale", {num(f.scale)}},
                                        {"ablate", {""}},
                                        {"curriculum", {"false"}},
                                        {"corpus", {""}}};
  std::map<std::string, Setting> protocol, model;
  if (!f.config_path.empty()) {
    for (const auto& [k, v] : read_config_file(f.config_path)) {
      if (k.rfind("model.", 0) == 0) {
        model[k.substr(6)] = {v, "file"};
      } else if (run.count(k)) {
        run[k] = {v, "file"};
      } else {
        protocol[k] = {v, "file"};
      }
    }
  }
  auto flag = [&](const char* name) { return cmd.count(name) > 0; };
  if (flag("--arm")) run["arm"] = {f.arm, "flag"};
  if (flag("--seed")) run["seed"] = {std::to_string(f.seed), "flag"};
  if (flag("--scale")) run["scale"] = {num(f.scale), "flag"};
  if (flag("--corpus")) run["corpus"] = {f.corpus, "flag"};
  if (flag("--curriculum")) run["curriculum"] = {"true", "flag"};
  if (flag("--ablate")) {
    std::string joined;
    for (const auto& a : f.ablate) joined += (joined.empty() ? "" : ",") + a;
    run["ablate"] = {joined, "flag"};
  }
  for (const auto& kv : f.sets) {
    const auto [k, v] = split_assignment(kv);
    protocol[k] = {v, "flag"};
  }
  for (const auto& kv : f.models) {
    const auto [k, v] = split_assignment(kv);
    model[k] = {v, "flag"};
  }

  Resolved r;
  ExperimentOptions& o = r.options;
  o.name = f.experiment;
  o.model = experiment_model(f.experiment);
  for (const auto& [k, s] : model) {
    o.model.set(k, s.value);
    r.sources["model." + k] = s.source;
  }
  o.arm = run["arm"].value;
  try {
    o.seed = std::stoull(run["seed"].value);
    o.scale = std::stod(run["scale"].value);
  } catch (const std::logic_error&) {
    throw UsageError("bad seed or scale value");
  }
  o.ablate = split_list(run["ablate"].value);
  if (o.arm == "transformer" && !o.ablate.empty()) {
    throw UsageError("conflicting flags: --ablate removes Hydra components, arm is transformer");
  }
  const std::string& cur = run["curriculum"].value;
  if (cur != "true" && cur != "false") throw UsageError("curriculum must be true or false");
  o.curriculum = cur == "true";
  o.corpus_path = run["corpus"].value;
  for (const auto& [k, s] : run) r.sources[k] = s.source;
  for (const auto& [k, s] : protocol) {
    o.overrides[k] = s.value;
    r.sources[k] = s.source;
  }
  r.protocol = ExperimentProtocol::defaults(o.name);
  r.protocol.apply(o.overrides);

  if (!f.seeds.empty()) {
    for (const auto& s : split_list(f.seeds)) {
      try {
        r.seeds.push_back(std::stoull(s));
      } catch (const std::logic_error&) {
        throw UsageError("bad seed '" + s + "' in --seeds");
      }
    }
    r.sources["seed"] = "flag";
  } else {
    r.seeds.push_back(o.seed);
  }
  return r;
}

std::string run_name(const ExperimentOptions& o) {
  std::string stem = o.name + "_" + o.arm;
  for (const auto& a : o.ablate) stem += "_no" + a;
  return stem + "_seed" + std::to_string(o.seed);
}

json config_snapshot(const Resolved& r, const ExperimentOptions& o) {
  json c;
  c["experiment"] = o.name;
  c["arm"] = o.arm;
  c["seed"] = o.seed;
  c["scale"] = o.scale;
  c["epochs"] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r.protocol.epochs * o.scale)));
  c["ablate"] = o.ablate;
  c["curriculum"] = o.curriculum;
  c["corpus"] = o.corpus_path;
  c["protocol"] = r.protocol.to_map();
  c["model"] = o.model.to_map();
  c["sources"] = r.sources;
  return c;
}

// Trains one configuration into `dir`.
std::map<std::string, double> train_one(const Resolved& r, ExperimentOptions o, const fs::path& dir,
                                        const std::vector<std::string>& args) {
  Manifest man("train", args);
  man.doc["seed"] = o.seed;
  man.doc["config"] = config_snapshot(r, o);
  fs::create_directories(dir);
  o.out_dir = dir.string();
  const TrainReport rep = run_experiment(o);
  write_metrics(dir / "metrics.csv", rep.metrics);
  std::vector<std::string> outputs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().filename() != "manifest.json") outputs.push_back(entry.path().string());
  }
  std::sort(outputs.begin(), outputs.end());
  man.finish(dir, outputs);
  return rep.metrics;
}

int cmd_train(const RunFlags& f, const CLI::App& cmd, const std::vector<std::string>& args) {
  const Resolved r = resolve(f, cmd);
  for (std::uint64_t seed : r.seeds) {
    ExperimentOptions o = r.options;
    o.seed = seed;
    fs::path dir = f.out.empty() ? fs::path(out_root()) / run_name(o) : fs::path(f.out);
    if (!f.out.empty() && r.seeds.size() > 1) dir /= run_name(o);
    std::cout << "# " << dir.string() << "\n";
    print_metrics(train_one(r, o, dir, args));
  }
  return 0;
}

int cmd_ablate(const RunFlags& f, const CLI::App& cmd, const std::vector<std::string>& args) {
  const Resolved r = resolve(f, cmd);
  if (r.options.arm != "hydra") throw UsageError("ablate: runs Hydra arms only");
  std::vector<std::vector<std::string>> matrix = {{}};
  for (const auto& c : split_list(f.components)) {
    if (std::find(std::begin(kComponents), std::end(kComponents), c) == std::end(kComponents)) {
      throw UsageError("ablate: unknown component '" + c + "' (sga, moe, workspace, pkm)");
    }
    matrix.push_back({c});
  }
  const fs::path root = f.out.empty() ? fs::path(out_root()) / ("ablate_" + f.experiment) : fs::path(f.out);
  Manifest man("ablate", args);
  man.doc["seeds"] = r.seeds;
  man.doc["components"] = split_list(f.components);
  std::string summary = "run,seed,metric,value\n";
  std::vector<std::string> outputs;
  for (std::uint64_t seed : r.seeds) {
    for (const auto& ablate : matrix) {
      ExperimentOptions o = r.options;
      o.seed = seed;
      o.ablate = ablate;
      const std::string name = run_name(o);
      std::cout << "# " << name << "\n";
      const auto metrics = train_one(r, o, root / name, args);
      print_metrics(metrics);
      for (const auto& [k, v] : metrics) {
        summary += name + "," + std::to_string(seed) + "," + k + "," + num(v) + "\n";
      }
      outputs.push_back((root / name).string());
    }
  }
  write_text(root / "summary.csv", summary);
  outputs.push_back((root / "summary.csv").string());
  man.finish(root, outputs);
  return 0;
}

// ---- gen-data ----

struct DataFlags {
  std::string task;
  std::size_t n = 100;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::size_t vocab = 64;
  std::vector<std::string> sets;
  std::map<std::string, std::size_t> knobs;  // flag-backed protocol knobs
  std::string out;
};

int cmd_gen_data(DataFlags& f, const CLI::App& cmd, const std::vector<std::string>& args) {
  const Split split = f.split == "eval" ? Split::kEval : Split::kTrain;
  ExperimentProtocol p = ExperimentProtocol::defaults(f.task == "random" ? "efficiency" : f.task);
  if (f.task == "random") p.seq_len = 1024;
  std::map<std::string, std::string> overrides;
  for (const auto& [flag, key] : kDataKnobs) {
    if (cmd.count(flag)) overrides[key] = std::to_string(f.knobs.at(key));
  }
  for (const auto& kv : f.sets) {
    const auto [k, v] = split_assignment(kv);
    overrides[k] = v;
  }
  p.apply(overrides);
  (split == Split::kTrain ? p.n_train : p.n_eval) = f.n;

  std::vector<TaskSample> samples;
  if (f.task == "random") {
    if (f.vocab == 0 || p.seq_len == 0) throw UsageError("gen-data random: vocab and seq_len must be > 0");
    const std::uint64_t base = mix_seed(f.seed, "data");
    for (std::size_t i = 0; i < f.n; ++i) {
      samples.push_back(gen_random_tokens(p.seq_len, f.vocab, split_seed(base, split, i)));
    }
  } else {
    samples = experiment_samples(f.task, p, f.seed, split);
  }

  const fs::path dir = f.out.empty()
                           ? fs::path(out_root()) / "data" /
                                 (f.task + "_" + f.split + "_seed" + std::to_string(f.seed))
                           : fs::path(f.out);
  fs::create_directories(dir);
  Manifest man("gen-data", args);
  man.doc["seed"] = f.seed;
  json c;
  c["task"] = f.task;
  c["split"] = f.split;
  c["n"] = f.n;
  if (f.task == "random") c["vocab"] = f.vocab;
  c["protocol"] = p.to_map();
  man.doc["config"] = c;
  const fs::path file = dir / "samples.txt";
  write_samples(file.string(), samples);
  man.finish(dir, {file.string()});
  std::cout << file.string() << ": " << samples.size() << " samples\n";
  return 0;
}

// ---- eval ----

int cmd_eval(const std::string& ckpt, const std::string& task_file, const std::string& out,
             const std::vector<std::string>& args) {
  const std::vector<TaskSample> samples = read_samples(task_file);
  const auto metrics = evaluate_checkpoint(ckpt, samples);
  const fs::path dir = out.empty() ? fs::path(out_root()) / "eval" /
                                         (fs::path(ckpt).stem().string() + "__" +
                                          fs::path(task_file).parent_path().filename().string() +
                                          fs::path(task_file).stem().string())
                                   : fs::path(out);
  fs::create_directories(dir);
  Manifest man("eval", args);
  json c;
  c["checkpoint"] = ckpt;
  c["task_file"] = task_file;
  c["n_samples"] = samples.size();
  man.doc["config"] = c;
  write_metrics(dir / "metrics.csv", metrics);
  man.finish(dir, {(dir / "metrics.csv").string()});
  print_metrics(metrics);
  return 0;
}

// ---- bench ----

struct BenchFlags {
  std::string variant = "both";
  std::vector<std::size_t> lens = {1024, 2048, 4096, 8192, 16384};
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::string config_path;
  std::vector<std::string> models;
  std::string out;
};

int cmd_bench(const BenchFlags& f, const std::vector<std::string>& args) {
  ModelConfig c = experiment_model("efficiency");
  std::map<std::string, std::string> sources;
  if (!f.config_path.empty()) {
    for (const auto& [k, v] : read_config_file(f.config_path)) {
      if (k.rfind("model.", 0) != 0) throw UsageError("bench config: only model.* keys apply, got '" + k + "'");
      c.set(k.substr(6), v);
      sources[k] = "file";
    }
  }
  for (const auto& kv : f.models) {
    const auto [k, v] = split_assignment(kv);
    c.set(k, v);
    sources["model." + k] = "flag";
  }
  std::vector<std::size_t> lens = f.lens;
  std::sort(lens.begin(), lens.end());
  lens.erase(std::unique(lens.begin(), lens.end()), lens.end());
  c.max_len = std::max(c.max_len, lens.back());
  c.seed = mix_seed(f.seed, "init");
  c.validate();

  const bool do_h = f.variant != "transformer", do_t = f.variant != "hydra";
  std::vector<BenchRecord> hr, tr;
  if (do_h) {
    const HydraModel m = HydraModel::init(c);
    for (std::size_t len : lens) hr.push_back(measure_throughput(m, len, f.repeats, f.seed));
  }
  if (do_t) {
    const TransformerModel m = TransformerModel::init(c);
    for (std::size_t len : lens) tr.push_back(measure_throughput(m, len, f.repeats, f.seed));
  }
  std::vector<ScalingFit> fits;
  for (const auto* recs : {&hr, &tr}) {
    if (recs->size() >= 4) fits.push_back(fit_scaling(*recs));
  }

  const fs::path dir = f.out.empty() ? fs::path(out_root()) / ("bench_" + f.variant) : fs::path(f.out);
  fs::create_directories(dir);
  Manifest man("bench", args);
  man.doc["seed"] = f.seed;
  json cfg;
  cfg["variant"] = f.variant;
  cfg["lens"] = lens;
  cfg["repeats"] = f.repeats;
  cfg["model"] = c.to_map();
  cfg["sources"] = sources;
  man.doc["config"] = cfg;

  std::vector<BenchRecord> all = hr;
  all.insert(all.end(), tr.begin(), tr.end());
  const fs::path csv = dir / "bench.csv", plot = dir / "plot.csv", fit = dir / "fits.csv";
  emit_report(all, fits, csv.string(), plot.string());
  std::string fit_csv = "variant,exponent,coefficient,r2,n_points\n";
  for (const ScalingFit& s : fits) {
    fit_csv += s.variant + "," + num(s.exponent) + "," + num(s.coefficient) + "," + num(s.r2) + "," +
               std::to_string(s.n_points) + "\n";
  }
  write_text(fit, fit_csv);
  man.finish(dir, {csv.string(), plot.string(), fit.string()});

  std::cout << bench_csv(all);
  for (const ScalingFit& s : fits) {
    std::cout << "# " << s.variant << " exponent=" << num(s.exponent) << " r2=" << num(s.r2) << "\n";
  }
  if (do_h && do_t) {
    const auto cross = measured_crossover(hr, tr);
    std::cout << "# measured_crossover=" << (cross ? std::to_string(*cross) : "none") << "\n";
    if (fits.size() == 2) std::cout << "# fitted_crossover=" << num(fitted_crossover(fits[0], fits[1])) << "\n";
  }
  return 0;
}

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_ablate) {
  std::vector<std::string> names(std::begin(kExperimentNames), std::end(kExperimentNames));
  cmd->add_option("experiment", f.experiment, "Experiment name")->required()->check(CLI::IsMember(names));
  cmd->add_option("--config", f.config_path,
                  "key = value file: run keys (arm, seed, scale, ablate, curriculum, corpus), "
                  "protocol knobs, and model.<key>");
  auto* seed = cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--seeds", f.seeds, "Comma-separated seeds, one run each")->excludes(seed);
  cmd->add_option("--scale", f.scale, "Multiplier on the protocol's epoch count")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--arm", f.arm, "Model arm")->check(CLI::IsMember({"hydra", "transformer", "dense"}));
  if (with_ablate) {
    cmd->add_option("--ablate", f.ablate, "Component to remove (repeatable)")
        ->check(CLI::IsMember({"sga", "moe", "workspace", "pkm"}));
  } else {
    cmd->add_option("--components", f.components, "Comma-separated components to ablate one at a time");
  }
  cmd->add_flag("--curriculum", f.curriculum, "Use the staged A-D curriculum");
  cmd->add_option("--corpus", f.corpus, "Plain-text corpus (wikitext)");
  cmd->add_option("--set", f.sets, "Protocol knob key=value (repeatable)");
  cmd->add_option("--model", f.models, "Model config key=value (repeatable)");
  cmd->add_option("--out", f.out, "Output directory");
}

int run(int argc, char** argv) {
  CLI::App app{"Hydra experiments: data generation, training, evaluation and benchmarks"};
  app.set_version_flag("--version", HYDRA_VERSION);
  app.require_subcommand(1);
  app.footer("Outputs go under $HYDRA_LAB_OUT (default ./hydra_runs) unless --out is given.");
  const std::vector<std::string> args(argv + 1, argv + argc);

  DataFlags data;
  auto* gen = app.add_subcommand("gen-data", "Write task samples, one per line");
  gen->add_option("task", data.task, "Task name")->required()->check(CLI::IsMember(kDataTasks));
  gen->add_option("--n", data.n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", data.seed, "Seed (the same as a train run's seed)");
  gen->add_option("--split", data.split, "Seed range")->check(CLI::IsMember({"train", "eval"}));
  gen->add_option("--vocab", data.vocab, "Vocabulary size (random)");
  for (const auto& [flag, key] : kDataKnobs) {
    gen->add_option(flag, data.knobs[key], "Protocol knob " + key);
  }
  gen->add_option("--set", data.sets, "Other protocol knob key=value (repeatable)");
  gen->add_option("--out", data.out, "Output directory");

  RunFlags train;
  auto* tr = app.add_subcommand("train", "Train and evaluate one experiment arm");
  add_run_flags(tr, train, true);

  RunFlags abl;
  auto* ab = app.add_subcommand("ablate", "Full Hydra plus one run per removed component");
  add_run_flags(ab, abl, false);

  std::string ckpt, task_file, eval_out;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a sample file");
  ev->add_option("checkpoint", ckpt, "Checkpoint from train")->required();
  ev->add_option("task_file", task_file, "Sample file from gen-data")->required();
  ev->add_option("--out", eval_out, "Output directory");

  BenchFlags bench;
  auto* be = app.add_subcommand("bench", "Throughput and peak memory against sequence length");
  be->add_option("--variant", bench.variant, "Model variant")
      ->check(CLI::IsMember({"hydra", "transformer", "both"}));
  be->add_option("--lens", bench.lens, "Sequence lengths")->delimiter(',')->check(CLI::PositiveNumber);
  be->add_option("--repeats", bench.repeats, "Timed repeats per length (>= 3)")
      ->check(CLI::Range(kMinRepeats, std::size_t{1000}));
  be->add_option("--seed", bench.seed, "Seed for weights and tokens");
  be->add_option("--config", bench.config_path, "key = value file of model.<key> entries");
  be->add_option("--model", bench.models, "Model config key=value (repeatable)");
  be->add_option("--out", bench.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(data, *gen, args);
    if (*tr) return cmd_train(train, *tr, args);
    if (*ab) return cmd_ablate(abl, *ab, args);
    if (*ev) return cmd_eval(ckpt, task_file, eval_out, args);
    if (*be) return cmd_bench(bench, args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace
}  // namespace hydra

int main(int argc, char** argv) { return hydra::run(argc, argv); }
