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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "hydra/bench.hpp"
#include "hydra/checkpoint.hpp"
#include "hydra/errors.hpp"
#include "hydra/ops.hpp"
#include "hydra/train.hpp"

namespace hydra {
namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

bool known_experiment(const std::string& name) {
  for (const char* n : kExperimentNames) {
    if (name == n) return true;
  }
  return false;
}

// ---- protocol fields ----

struct Knob {
  const char* key;
  std::function<void(ExperimentProtocol&, const std::string&)> set;
  std::function<std::string(const ExperimentProtocol&)> get;
};

template <class T>
Knob knob(const char* key, T ExperimentProtocol::*field) {
  return Knob{key,
              [key, field](ExperimentProtocol& p, const std::string& v) {
                try {
                  std::size_t used = 0;
                  if constexpr (std::is_same_v<T, double>) {
                    p.*field = std::stod(v, &used);
                  } else if constexpr (std::is_same_v<T, bool>) {
                    if (v != "true" && v != "false" && v != "0" && v != "1") throw std::invalid_argument(v);
                    p.*field = v == "true" || v == "1";
                    used = v.size();
                  } else {
                    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
                    p.*field = static_cast<T>(std::stoull(v, &used));
                  }
                  if (used != v.size()) throw std::invalid_argument(v);
                } catch (const std::logic_error&) {
                  throw UsageError("protocol: bad value '" + v + "' for " + key);
                }
              },
              [field](const ExperimentProtocol& p) {
                if constexpr (std::is_same_v<T, double>) {
                  return fmt(p.*field);
                } else if constexpr (std::is_same_v<T, bool>) {
                  return std::string(p.*field ? "true" : "false");
                } else {
                  return std::to_string(p.*field);
                }
              }};
}

const std::vector<Knob>& knobs() {
  static const std::vector<Knob> k = {
      knob("epochs", &ExperimentProtocol::epochs),
      knob("n_train", &ExperimentProtocol::n_train),
      knob("n_eval", &ExperimentProtocol::n_eval),
      knob("batch", &ExperimentProtocol::batch),
      knob("lr", &ExperimentProtocol::lr),
      knob("adamw", &ExperimentProtocol::adamw),
      knob("balance_weight", &ExperimentProtocol::balance_weight),
      knob("beta_l1", &ExperimentProtocol::beta_l1),
      knob("eval_every", &ExperimentProtocol::eval_every),
      knob("chain_len", &ExperimentProtocol::chain_len),
      knob("n_vars", &ExperimentProtocol::n_vars),
      knob("n_distractors", &ExperimentProtocol::n_distractors),
      knob("n_facts", &ExperimentProtocol::n_facts),
      knob("seq_len", &ExperimentProtocol::seq_len),
      knob("premise_pos", &ExperimentProtocol::premise_pos),
      knob("premise_jitter", &ExperimentProtocol::premise_jitter),
      knob("n_domains", &ExperimentProtocol::n_domains),
      knob("context_len", &ExperimentProtocol::context_len),
      knob("max_vocab", &ExperimentProtocol::max_vocab),
      knob("repeats", &ExperimentProtocol::repeats),
  };
  return k;
}

// ---- models ----

// Either a Hydra model or the dense baseline behind one forward call.
struct Arm {
  std::optional<HydraModel> hydra;
  std::optional<TransformerModel> transformer;

  ParamList& params() { return hydra ? hydra->params() : transformer->params(); }
  const ModelConfig& config() const { return hydra ? hydra->config() : transformer->config(); }

  ForwardResult forward(std::span<const std::int64_t> tokens, const ForwardOptions& opt) const {
    if (hydra) return hydra->forward(tokens, opt);
    ForwardResult r;
    r.logits = transformer->forward(tokens, opt.logit_rows);
    return r;
  }
};

// ---- data ----

struct Dataset {
  std::vector<TaskSample> train, eval;
  std::size_t vocab = 0;
  std::size_t max_len = 0;
  double chance = 0.0;
};

std::size_t longest(const std::vector<TaskSample>& a, const std::vector<TaskSample>& b) {
  std::size_t n = 0;
  for (const auto* v : {&a, &b}) {
    for (const auto& s : *v) n = std::max(n, s.tokens.size());
  }
  return n;
}

TaskSample premise_sample(const ExperimentProtocol& p, std::uint64_t seed) {
  std::size_t pos = p.premise_pos;
  if (p.premise_jitter > 0) {
    Rng rng = Rng::stream(seed, "premise-position");
    pos = p.premise_pos - std::min(p.premise_pos, p.premise_jitter) +
          static_cast<std::size_t>(rng.below(2 * p.premise_jitter + 1));
  }
  return gen_distant_premise(p.seq_len, pos, seed);
}

// `seed` is the run seed.
Dataset build_dataset(const std::string& name, const ExperimentProtocol& p, std::uint64_t seed,
                      const std::string& corpus_path) {
  Dataset d;
  if (name != "wikitext") {
    d.train = experiment_samples(name, p, seed, Split::kTrain);
    d.eval = experiment_samples(name, p, seed, Split::kEval);
  }
  if (name == "logic") {
    d.vocab = logic_vocab(p.n_vars).size();
    d.chance = 1.0 / static_cast<double>(p.n_vars);
  } else if (name == "pkm_recall") {
    d.vocab = qa_vocab(p.n_facts).size();
    d.chance = 1.0 / static_cast<double>(QaOptions{}.n_values);
  } else if (name == "distant_premise") {
    d.vocab = premise_vocab().size();
    d.chance = 1.0 / static_cast<double>(kPremiseColors);
  } else if (name == "moe_dense") {
    d.vocab = multidomain_vocab(p.n_domains).size();
    d.chance = 1.0 / static_cast<double>(kDomainBase);
  } else if (name == "wikitext") {
    if (corpus_path.empty()) throw UsageError("wikitext: a corpus path is required");
    const TextCorpus corpus = load_text_corpus(corpus_path, p.max_vocab);
    const std::vector<TaskSample> all = corpus.windows(p.context_len);
    if (all.size() < 2) throw InputError("wikitext: corpus shorter than two windows");
    // The last tenth of the windows is held out.
    const std::size_t n_held = std::max<std::size_t>(1, all.size() / 10);
    const std::size_t n_fit = all.size() - n_held;
    for (std::size_t i = 0; i < std::min(p.n_train, n_fit); ++i) d.train.push_back(all[i]);
    for (std::size_t i = 0; i < std::min(p.n_eval, n_held); ++i) d.eval.push_back(all[n_fit + i]);
    d.vocab = corpus.vocab.size();
    d.chance = 1.0 / static_cast<double>(d.vocab);
  }
  d.max_len = longest(d.train, d.eval);
  return d;
}

// ---- evaluation ----

struct SampleEval {
  std::size_t correct = 0;
  std::size_t n_targets = 0;
  double loss_sum = 0.0;
  double beta_ws = 0.0;   // gate values at the chunk of the last target
  double beta_pkm = 0.0;
  double p_sga = 0.0;     // mean over chunks
  std::vector<std::size_t> top_experts;  // best expert of each chunk
};

struct EvalResult {
  std::vector<SampleEval> samples;
  double seconds = 0.0;
  std::size_t tokens = 0;

  double accuracy() const {
    std::size_t c = 0, n = 0;
    for (const auto& s : samples) {
      c += s.correct;
      n += s.n_targets;
    }
    return n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
  }
  double loss() const {
    double l = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
      l += s.loss_sum;
      n += s.n_targets;
    }
    return n ? l / static_cast<double>(n) : 0.0;
  }
};

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t v = logits.dim(1);
  const double* p = logits.ptr() + row * v;
  return static_cast<std::size_t>(std::max_element(p, p + v) - p);
}

SampleEval score_sample(const TaskSample& s, const ForwardResult& r, bool hydra) {
  SampleEval e;
  e.n_targets = s.targets.size();
  for (std::size_t i = 0; i < s.targets.size(); ++i) {
    e.correct += argmax_row(r.logits, i) == static_cast<std::size_t>(s.targets[i]) ? 1 : 0;
  }
  if (hydra && r.decision.n_chunks() > 0) {
    const std::size_t c = r.token_chunk.at(s.target_positions.back());
    e.beta_ws = r.decision.beta_ws.at(c);
    e.beta_pkm = r.decision.beta_pkm.at(c);
    double p = 0.0;
    for (double x : r.decision.p_sga.data()) p += x;
    e.p_sga = p / static_cast<double>(r.decision.n_chunks());
    const auto& ids = r.decision.moe.expert_ids;
    if (!ids.empty()) {
      const std::size_t k = ids.size() / r.decision.n_chunks();
      for (std::size_t j = 0; j < ids.size(); j += k) e.top_experts.push_back(ids[j]);
    }
  }
  return e;
}

EvalResult evaluate(const Arm& arm, const std::vector<TaskSample>& samples, const PathSchedule& paths,
                    double tau) {
  EvalResult out;
  NoGradScope no_grad;
  const auto t0 = std::chrono::steady_clock::now();
  for (const TaskSample& s : samples) {
    ForwardOptions opt;
    opt.paths = paths;
    opt.tau = tau;
    opt.logit_rows = s.target_positions;
    const ForwardResult r = arm.forward(s.tokens, opt);
    SampleEval e = score_sample(s, r, arm.hydra.has_value());
    e.loss_sum = ops::cross_entropy(r.logits, s.targets).item() * static_cast<double>(s.targets.size());
    out.samples.push_back(std::move(e));
    out.tokens += s.tokens.size();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// Per-mode accuracy and PKM gate means for open/closed-book samples.
void add_mode_metrics(const std::vector<TaskSample>& samples, const EvalResult& ev, bool with_beta,
                      std::map<std::string, double>& metrics) {
  double beta[2] = {0, 0}, acc[2] = {0, 0}, n[2] = {0, 0};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto it = samples[i].meta.find("is_open_book");
    if (it == samples[i].meta.end()) continue;
    const int mode = it->second == "1" ? 1 : 0;
    beta[mode] += ev.samples[i].beta_pkm;
    acc[mode] += static_cast<double>(ev.samples[i].correct) /
                 static_cast<double>(std::max<std::size_t>(1, ev.samples[i].n_targets));
    n[mode] += 1.0;
  }
  for (int m = 0; m < 2; ++m) {
    if (n[m] == 0) continue;
    const std::string tag = m ? "open" : "closed";
    if (with_beta) metrics["beta_pkm_" + tag] = beta[m] / n[m];
    metrics["accuracy_" + tag] = acc[m] / n[m];
  }
}

// ---- model construction ----

ModelConfig arm_config(const ExperimentOptions& o, const Dataset& data) {
  ModelConfig c = o.model;
  c.vocab = data.vocab;
  c.max_len = std::max(c.max_len, data.max_len);
  c.seed = mix_seed(o.seed, "init");
  for (const std::string& a : o.ablate) {
    if (o.arm == "transformer") throw UsageError("--ablate applies to Hydra arms only");
    if (a == "sga") {
      c.use_sga = false;
    } else if (a == "moe") {
      c.use_moe = false;
    } else if (a == "workspace") {
      c.use_workspace = false;
    } else if (a == "pkm") {
      c.use_pkm = false;
    } else {
      throw UsageError("unknown ablation '" + a + "' (sga, moe, workspace, pkm)");
    }
  }
  if (o.arm == "dense") {
    if (o.name != "moe_dense") throw UsageError("arm 'dense' is only defined for moe_dense");
    c.expert_hidden *= c.n_experts;
    c.n_experts = 1;
  } else if (o.arm != "hydra" && o.arm != "transformer") {
    throw UsageError("unknown arm '" + o.arm + "' (hydra, transformer, dense)");
  }
  return c;
}

Arm make_arm(const std::string& arm, const ModelConfig& c) {
  Arm a;
  if (arm == "transformer") {
    a.transformer = TransformerModel::init(c);
  } else {
    a.hydra = HydraModel::init(c);
  }
  return a;
}

std::string run_stem(const ExperimentOptions& o) {
  std::string stem = o.name + "_" + o.arm;
  for (const auto& a : o.ablate) stem += "_no" + a;
  return stem + "_seed" + std::to_string(o.seed);
}

// ---- efficiency (timing only) ----

TrainReport run_efficiency(const ExperimentOptions& o, const ExperimentProtocol& p) {
  TrainReport rep;
  rep.experiment = o.name;
  rep.arm = "both";
  rep.seed = o.seed;
  ModelConfig c = o.model;
  c.max_len = std::max(c.max_len, p.seq_len);
  c.seed = mix_seed(o.seed, "init");
  const HydraModel h = HydraModel::init(c);
  const TransformerModel t = TransformerModel::init(c);
  std::vector<BenchRecord> hr, tr;
  for (std::size_t len = 1024; len <= p.seq_len; len *= 2) {
    hr.push_back(measure_throughput(h, len, p.repeats, o.seed));
    tr.push_back(measure_throughput(t, len, p.repeats, o.seed));
    const std::string l = std::to_string(len);
    rep.metrics["hydra_tokens_per_sec_" + l] = hr.back().tokens_per_sec;
    rep.metrics["transformer_tokens_per_sec_" + l] = tr.back().tokens_per_sec;
    rep.metrics["memory_ratio_" + l] = hr.back().peak_mem_mb / tr.back().peak_mem_mb;
  }
  if (hr.size() >= 4) {
    const ScalingFit fh = fit_scaling(hr), ft = fit_scaling(tr);
    rep.metrics["hydra_exponent"] = fh.exponent;
    rep.metrics["transformer_exponent"] = ft.exponent;
    rep.metrics["fitted_crossover"] = fitted_crossover(fh, ft);
  }
  const auto cross = measured_crossover(hr, tr);
  rep.metrics["measured_crossover"] = cross ? static_cast<double>(*cross) : -1.0;
  rep.metrics["speedup_at_max_len"] = hr.back().tokens_per_sec / tr.back().tokens_per_sec;
  if (!o.out_dir.empty()) {
    std::filesystem::create_directories(o.out_dir);
    std::vector<BenchRecord> all = hr;
    all.insert(all.end(), tr.begin(), tr.end());
    std::vector<ScalingFit> fits;
    if (hr.size() >= 4) fits = {fit_scaling(hr), fit_scaling(tr)};
    emit_report(all, fits, o.out_dir + "/" + run_stem(o) + "_bench.csv",
                o.out_dir + "/" + run_stem(o) + "_plot.csv");
  }
  return rep;
}

}  // namespace

// ---- protocol ----

ExperimentProtocol ExperimentProtocol::defaults(const std::string& name) {
  if (!known_experiment(name)) throw UsageError("unknown experiment '" + name + "'");
  ExperimentProtocol p;
  if (name == "logic") {
    p.epochs = 1000;
    p.n_train = 1000;
    p.n_eval = 100;
    p.batch = 32;
  } else if (name == "efficiency") {
    p.seq_len = 16384;
  } else if (name == "wikitext") {
    p.epochs = 1;
    p.n_train = 1000000;  // caps the window count: one pass over the training split
    p.n_eval = 128;
    p.batch = 1;
    p.context_len = 128;
    p.seq_len = 4096;
  } else if (name == "pkm_recall") {
    p.epochs = 40;
    p.n_train = 1024;
    p.n_eval = 256;
    p.batch = 16;
    p.beta_l1 = 0.02;
  } else if (name == "distant_premise") {
    p.epochs = 100;
    p.n_train = 16;
    p.n_eval = 20;
    p.batch = 1;
    p.adamw = true;
    p.seq_len = 4096;
    p.premise_pos = 2000;
    p.premise_jitter = 64;
  } else if (name == "moe_dense") {
    p.epochs = 5;
    p.n_train = 2000;
    p.n_eval = 200;
    p.lr = 3e-3;
    p.batch = 1;
    p.seq_len = 36;
    p.n_domains = 4;
  }
  return p;
}

void ExperimentProtocol::apply(const std::map<std::string, std::string>& overrides) {
  for (const auto& [key, value] : overrides) {
    auto it = std::find_if(knobs().begin(), knobs().end(),
                           [&](const Knob& k) { return key == k.key; });
    if (it == knobs().end()) throw UsageError("protocol: unknown key '" + key + "'");
    it->set(*this, value);
  }
  if (batch == 0) throw UsageError("protocol: batch must be > 0");
}

std::map<std::string, std::string> ExperimentProtocol::to_map() const {
  std::map<std::string, std::string> out;
  for (const Knob& k : knobs()) out[k.key] = k.get(*this);
  return out;
}

ModelConfig experiment_model(const std::string& name) {
  if (!known_experiment(name)) throw UsageError("unknown experiment '" + name + "'");
  ModelConfig c;
  if (name == "efficiency") {
    // The full-size model makes the quadratic baseline take hours at 16k.
    c.d = 64;
    c.n_blocks = 4;
    c.memory_after = 2;
    c.router_dim = 32;
    c.expert_hidden = 256;
    c.n_heads = 2;
    c.max_globals = 8;
    c.sga_period = 2;
    c.ws_rank = 16;
    c.pkm_dk = 16;
    return c;
  }
  c.d = 64;
  c.n_blocks = 2;
  c.max_len = 64;
  c.router_dim = 32;
  c.n_experts = 4;
  c.expert_hidden = 128;
  c.n_heads = 2;
  c.window = 64;
  c.max_globals = 8;
  c.sga_period = 2;
  c.moe_period = 2;
  c.ws_slots = 16;
  c.ws_active = 8;
  c.ws_rank = 32;
  c.pkm_n = 16;
  c.pkm_dk = 32;
  c.memory_after = 1;
  if (name == "logic") {
    c.chunk_size = 4;
  } else if (name == "pkm_recall") {
    c.chunk_size = 4;
  } else if (name == "distant_premise") {
    c.d = 32;
    c.router_dim = 16;
    c.expert_hidden = 64;
    c.chunk_size = 64;
    c.window = 32;
    c.max_globals = 4;
    c.ws_rank = 16;
    c.pkm_dk = 16;
  } else if (name == "moe_dense") {
    c.chunk_size = kProblemLen;
  } else if (name == "wikitext") {
    c.chunk_size = 16;
    c.window = 32;
  }
  return c;
}

std::string TrainReport::to_csv() const {
  std::string out =
      "epoch,step,phase,loss,accuracy,aux_loss,mean_p_sga,mean_beta_ws,mean_beta_pkm,"
      "expert_hist,eval_accuracy,eval_loss\n";
  for (const EpochRow& r : rows) {
    std::string hist;
    for (std::size_t i = 0; i < r.expert_hist.size(); ++i) hist += (i ? ";" : "") + fmt(r.expert_hist[i]);
    out += std::to_string(r.epoch) + ',' + std::to_string(r.step) + ',' + r.phase + ',' +
           fmt(r.loss) + ',' + fmt(r.accuracy) + ',' + fmt(r.aux_loss) + ',' + fmt(r.mean_p_sga) +
           ',' + fmt(r.mean_beta_ws) + ',' + fmt(r.mean_beta_pkm) + ',' + hist + ',' +
           fmt(r.eval_accuracy) + ',' + fmt(r.eval_loss) + '\n';
  }
  return out;
}

// ---- training ----

std::vector<TaskSample> experiment_samples(const std::string& name, const ExperimentProtocol& p,
                                           std::uint64_t seed, Split split) {
  const std::size_t n = split == Split::kTrain ? p.n_train : p.n_eval;
  std::function<TaskSample(std::uint64_t, std::size_t)> gen;
  if (name == "logic") {
    gen = [&](std::uint64_t s, std::size_t) {
      return gen_logic_chain(p.n_vars, p.chain_len, s, p.n_distractors);
    };
  } else if (name == "pkm_recall") {
    // Modes alternate by index, open book first.
    gen = [&](std::uint64_t s, std::size_t i) { return gen_qa_openclosed(p.n_facts, i % 2 == 0, s); };
  } else if (name == "distant_premise") {
    gen = [&](std::uint64_t s, std::size_t) { return premise_sample(p, s); };
  } else if (name == "moe_dense") {
    gen = [&](std::uint64_t s, std::size_t) { return gen_multidomain(p.n_domains, p.seq_len, s); };
  } else {
    throw UsageError("no generated samples for experiment '" + name + "'");
  }
  const std::uint64_t base = mix_seed(seed, "data");
  std::vector<TaskSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(gen(split_seed(base, split, i), i));
  return out;
}


TrainReport run_experiment(const ExperimentOptions& o) {
  const auto wall0 = std::chrono::steady_clock::now();
  ExperimentProtocol p = ExperimentProtocol::defaults(o.name);
  p.apply(o.overrides);
  if (!(o.scale > 0.0)) throw UsageError("scale must be > 0");
  if (o.name == "efficiency") {
    TrainReport rep = run_efficiency(o, p);
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return rep;
  }

  const Dataset data = build_dataset(o.name, p, o.seed, o.corpus_path);
  if (data.train.empty()) throw UsageError(o.name + ": empty training set");
  const ModelConfig cfg = arm_config(o, data);
  Arm arm = make_arm(o.arm, cfg);
  const bool is_hydra = arm.hydra.has_value();
  OptimState opt =
      OptimState::create(arm.params(), p.adamw ? AdamOptions::adamw(p.lr) : AdamOptions::adam(p.lr));

  const std::size_t epochs =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(p.epochs * o.scale)));
  const std::size_t steps_per_epoch = (data.train.size() + p.batch - 1) / p.batch;
  const CurriculumSchedule schedule = CurriculumSchedule::even(epochs * steps_per_epoch);
  PhaseFlags steady;
  steady.phase = Phase::kD;
  steady.tau = cfg.sga_threshold;
  steady.balance_weight = p.balance_weight;

  TrainReport rep;
  rep.experiment = o.name;
  rep.arm = o.arm;
  rep.seed = o.seed;
  Rng order = Rng::stream(o.seed, "order");
  std::vector<std::size_t> idx(data.train.size());
  std::size_t step = 0;
  PhaseFlags flags = o.curriculum ? curriculum_step(schedule, 0) : steady;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    order.shuffle(idx);
    EpochRow row;
    row.epoch = epoch + 1;
    std::size_t n_targets = 0, n_correct = 0, n_aux = 0, n_gate = 0;
    std::vector<double> hist(cfg.n_experts, 0.0);

    for (std::size_t b0 = 0; b0 < idx.size(); b0 += p.batch) {
      if (o.curriculum) flags = curriculum_step(schedule, step);
      const std::size_t b1 = std::min(idx.size(), b0 + p.batch);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const TaskSample& s = data.train[idx[bi]];
        Tape tape;
        TapeScope scope(tape);
        ForwardOptions fo;
        fo.training = true;
        fo.paths = flags.paths;
        fo.tau = flags.tau;
        fo.logit_rows = s.target_positions;
        const ForwardResult r = arm.forward(s.tokens, fo);
        const Tensor task = ops::cross_entropy(r.logits, s.targets);
        Tensor total = ops::scale(task, inv);
        if (r.balance_loss.defined() && flags.balance_weight > 0.0) {
          total = ops::add(total, ops::scale(r.balance_loss, flags.balance_weight * inv));
        }
        if (is_hydra && p.beta_l1 > 0.0 && cfg.use_pkm && flags.paths.memory &&
            r.decision.n_chunks() > 0) {
          total = ops::add(total, ops::scale(ops::mean(r.decision.beta_pkm), p.beta_l1 * inv));
        }
        tape.backward(total);

        row.loss += task.item() * static_cast<double>(s.targets.size());
        const SampleEval e = score_sample(s, r, is_hydra);
        n_correct += e.correct;
        n_targets += s.targets.size();
        if (r.balance_loss.defined()) {
          row.aux_loss += r.balance_loss.item();
          ++n_aux;
          for (std::size_t id : r.decision.moe.expert_ids) hist[id] += 1.0;
        }
        if (is_hydra && r.decision.n_chunks() > 0) {
          row.mean_p_sga += e.p_sga;
          row.mean_beta_ws += e.beta_ws;
          row.mean_beta_pkm += e.beta_pkm;
          ++n_gate;
        }
      }
      adam_step(arm.params(), opt, flags.frozen);
      arm.params().zero_grads();
      ++step;
    }

    row.step = step;
    row.phase = std::string(phase_name(flags.phase));
    row.loss /= static_cast<double>(std::max<std::size_t>(n_targets, 1));
    row.accuracy = static_cast<double>(n_correct) / static_cast<double>(std::max<std::size_t>(n_targets, 1));
    if (n_aux) row.aux_loss /= static_cast<double>(n_aux);
    if (n_gate) {
      row.mean_p_sga /= static_cast<double>(n_gate);
      row.mean_beta_ws /= static_cast<double>(n_gate);
      row.mean_beta_pkm /= static_cast<double>(n_gate);
    }
    double hist_total = 0.0;
    for (double h : hist) hist_total += h;
    if (hist_total > 0.0) {
      for (double& h : hist) h /= hist_total;
      row.expert_hist = hist;
    }
    const bool last = epoch + 1 == epochs;
    if (!data.eval.empty() && !last && p.eval_every > 0 && (epoch + 1) % p.eval_every == 0) {
      const EvalResult ev = evaluate(arm, data.eval, flags.paths, flags.tau);
      row.eval_accuracy = ev.accuracy();
      row.eval_loss = ev.loss();
    }
    rep.rows.push_back(std::move(row));
  }

  // Final evaluation with every scheduled path on.
  const PathSchedule eval_paths = o.curriculum ? curriculum_step(schedule, step).paths : steady.paths;
  const double eval_tau = o.curriculum ? curriculum_step(schedule, step).tau : steady.tau;
  if (!data.eval.empty()) {
    const EvalResult ev = evaluate(arm, data.eval, eval_paths, eval_tau);
    rep.rows.back().eval_accuracy = ev.accuracy();
    rep.rows.back().eval_loss = ev.loss();
    rep.metrics["eval_accuracy"] = ev.accuracy();
    rep.metrics["eval_loss"] = ev.loss();
    rep.metrics["eval_perplexity"] = perplexity(ev.loss());
    rep.metrics["chance"] = data.chance;
    rep.metrics["eval_ms_per_token"] = 1000.0 * ev.seconds / static_cast<double>(ev.tokens);

    if (o.name == "pkm_recall") add_mode_metrics(data.eval, ev, is_hydra && cfg.use_pkm, rep.metrics);
    if (o.name == "moe_dense" && is_hydra && cfg.use_moe) {
      std::vector<std::vector<double>> joint(p.n_domains, std::vector<double>(cfg.n_experts, 0.0));
      for (std::size_t i = 0; i < data.eval.size(); ++i) {
        const std::size_t dom = std::stoul(data.eval[i].meta.at("domain_id"));
        for (std::size_t e : ev.samples[i].top_experts) joint[dom][e] += 1.0;
      }
      rep.metrics["expert_domain_mi_bits"] = mutual_information_bits(joint);
    }
  }
  if (o.name == "wikitext" && p.seq_len > 0) {
    ModelConfig bc = cfg;
    bc.max_len = std::max(bc.max_len, p.seq_len);
    // Throughput at the long length uses a model of the same shape; the
    // trained weights do not change the cost of a forward pass.
    const Arm timing = make_arm(o.arm, bc);
    rep.metrics["tokens_per_sec_long"] =
        timing.hydra ? measure_throughput(*timing.hydra, p.seq_len, kMinRepeats).tokens_per_sec
                     : measure_throughput(*timing.transformer, p.seq_len, kMinRepeats).tokens_per_sec;
  }
  rep.metrics["params"] = static_cast<double>(arm.params().numel());
  rep.metrics["epochs"] = static_cast<double>(epochs);
  rep.metrics["steps"] = static_cast<double>(step);

  if (!o.out_dir.empty()) {
    std::filesystem::create_directories(o.out_dir);
    const std::string stem = o.out_dir + "/" + run_stem(o);
    rep.checkpoint_path = stem + ".ckpt";
    save_checkpoint(rep.checkpoint_path, is_hydra ? "hydra" : "transformer", cfg, arm.params());
    std::ofstream csv(stem + "_report.csv", std::ios::binary);
    if (!csv) throw IoError("cannot write " + stem + "_report.csv");
    csv << rep.to_csv();
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return rep;
}

std::map<std::string, double> evaluate_checkpoint(const std::string& path,
                                                  const std::vector<TaskSample>& samples) {
  const CheckpointHeader head = read_checkpoint_header(path);
  const ModelConfig& cfg = head.config;
  if (samples.empty()) throw InputError("eval: no samples");
  for (const TaskSample& s : samples) {
    if (s.tokens.size() > cfg.max_len) {
      throw InputError("eval: sample of " + std::to_string(s.tokens.size()) +
                       " tokens exceeds the checkpoint's max_len " + std::to_string(cfg.max_len));
    }
    if (s.targets.empty()) throw InputError("eval: sample without a target");
    for (const auto* seq : {&s.tokens, &s.targets}) {
      for (std::int64_t t : *seq) {
        if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab) {
          throw InputError("eval: token id " + std::to_string(t) + " outside the checkpoint vocab of " +
                           std::to_string(cfg.vocab));
        }
      }
    }
  }
  if (head.kind != "hydra" && head.kind != "transformer") {
    throw InputError("eval: unknown model kind '" + head.kind + "'");
  }
  Arm arm = make_arm(head.kind, cfg);
  load_checkpoint(path, arm.params());
  const bool hydra = arm.hydra.has_value();

  const EvalResult ev = evaluate(arm, samples, PathSchedule{}, cfg.sga_threshold);
  std::map<std::string, double> m;
  m["n_samples"] = static_cast<double>(samples.size());
  m["accuracy"] = ev.accuracy();
  m["loss"] = ev.loss();
  m["perplexity"] = perplexity(ev.loss());
  m["ms_per_token"] = 1000.0 * ev.seconds / static_cast<double>(ev.tokens);
  if (hydra) {
    double ws = 0.0, pkm = 0.0, sga = 0.0;
    for (const SampleEval& e : ev.samples) {
      ws += e.beta_ws;
      pkm += e.beta_pkm;
      sga += e.p_sga;
    }
    const double n = static_cast<double>(ev.samples.size());
    if (cfg.use_workspace) m["mean_beta_ws"] = ws / n;
    if (cfg.use_pkm) m["mean_beta_pkm"] = pkm / n;
    if (cfg.use_sga) m["mean_p_sga"] = sga / n;
  }
  add_mode_metrics(samples, ev, hydra && cfg.use_pkm, m);
  return m;
}

}  // namespace hydra
