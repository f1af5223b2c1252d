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

#pragma once

// Optimizers, losses, the staged curriculum and the per-experiment
// training and evaluation loops.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hydra/config.hpp"
#include "hydra/model.hpp"
#include "hydra/params.hpp"
#include "hydra/taskgen.hpp"

namespace hydra {

// ---- optimizer ----

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when > 0

  static AdamOptions adam(double lr = 1e-3) { return {lr, 0.9, 0.999, 1e-8, 0.0}; }
  static AdamOptions adamw(double lr = 1e-3) { return {lr, 0.9, 0.999, 1e-8, 0.01}; }
};

// Moments are per parameter and so is the step count: a parameter that is
// frozen or receives no gradient keeps t, m and v untouched.
struct OptimState {
  AdamOptions options;
  std::vector<Buffer> m, v;
  std::vector<std::size_t> t;

  static OptimState create(const ParamList& params, const AdamOptions& options);
};

// Bias-corrected Adam over every parameter that holds a gradient and whose
// component is not frozen. Throws NumericError naming the first parameter
// with a non-finite gradient (before anything is modified).
void adam_step(ParamList& params, OptimState& state, const std::set<Component>& frozen = {});

// ---- losses ----

// Mean cross-entropy over rows with mask[i] set; logits [n x V].
Tensor lm_loss(const Tensor& logits, std::span<const std::int64_t> targets,
               const std::vector<bool>& mask);
double perplexity(double mean_loss);

// ---- curriculum ----

enum class Phase { kA, kB, kC, kD };
std::string_view phase_name(Phase p);

struct CurriculumSchedule {
  // First step of phases B, C and D; phases are half-open [start, next).
  std::size_t b_start = 0, c_start = 0, d_start = 0;
  double tau_start = 0.9;  // SGA threshold at the start of B, annealed to tau_end
  double tau_end = 0.5;
  double balance_weight = 0.01;

  // Quarters of total_steps.
  static CurriculumSchedule even(std::size_t total_steps);
  void validate() const;
};

struct PhaseFlags {
  Phase phase = Phase::kA;
  PathSchedule paths;
  double tau = 0.5;
  double balance_weight = 0.0;
  std::set<Component> frozen;
};

// A: SSM and embeddings only. B: + SGA and router, tau annealed.
// C: + MoE and balance loss. D: + workspace and PKM.
PhaseFlags curriculum_step(const CurriculumSchedule& schedule, std::size_t step);

// ---- experiments ----

inline constexpr const char* kExperimentNames[] = {"logic",      "efficiency", "wikitext",
                                                   "pkm_recall", "distant_premise", "moe_dense"};

struct ExperimentOptions {
  std::string name;
  // "hydra" or "transformer"; moe_dense also accepts "dense" (one expert
  // of n_experts x expert_hidden width).
  std::string arm = "hydra";
  ModelConfig model;          // vocab and max_len are set from the task
  std::uint64_t seed = 0;
  double scale = 1.0;         // multiplies the protocol's epoch count
  std::vector<std::string> ablate;  // sga | moe | workspace | pkm
  bool curriculum = false;
  std::map<std::string, std::string> overrides;  // protocol knobs, see ExperimentProtocol
  std::string corpus_path;    // wikitext
  std::string out_dir;        // report CSV and checkpoint; empty = none
};

// Task sizes and optimization settings for one experiment. Every field
// can be overridden by name through ExperimentOptions::overrides.
struct ExperimentProtocol {
  std::size_t epochs = 1;
  std::size_t n_train = 1000;
  std::size_t n_eval = 100;
  std::size_t batch = 1;
  double lr = 1e-3;
  bool adamw = false;
  double balance_weight = 0.01;
  double beta_l1 = 0.0;        // penalty on the PKM gate
  std::size_t eval_every = 0;  // epochs between eval passes; 0 = final only
  // task knobs
  std::size_t chain_len = 2;
  std::size_t n_vars = 26;
  std::size_t n_distractors = 0;
  std::size_t n_facts = 64;
  std::size_t seq_len = 4096;
  std::size_t premise_pos = 2000;
  std::size_t premise_jitter = 0;
  std::size_t n_domains = 4;
  std::size_t context_len = 128;
  std::size_t max_vocab = 2048;
  std::size_t repeats = 5;  // efficiency timing repeats

  static ExperimentProtocol defaults(const std::string& name);
  void apply(const std::map<std::string, std::string>& overrides);
  std::map<std::string, std::string> to_map() const;
};

struct EpochRow {
  std::size_t epoch = 0;
  std::size_t step = 0;  // optimizer steps completed
  std::string phase;
  double loss = 0.0;       // mean task loss over the epoch
  double accuracy = 0.0;   // training answer accuracy over the epoch
  double aux_loss = 0.0;   // mean balance loss
  double mean_p_sga = 0.0;
  double mean_beta_ws = 0.0;
  double mean_beta_pkm = 0.0;
  std::vector<double> expert_hist;  // dispatch fractions
  double eval_accuracy = -1.0;      // -1 when not evaluated this epoch
  double eval_loss = -1.0;
};

struct TrainReport {
  std::string experiment;
  std::string arm;
  std::uint64_t seed = 0;
  std::vector<EpochRow> rows;
  std::map<std::string, double> metrics;  // final evaluation
  double wall_seconds = 0.0;
  std::string checkpoint_path;

  // Header then one row per epoch. wall time is not included so that
  // identical runs produce identical files.
  std::string to_csv() const;
};

// Model size the experiment is tuned for; callers may override any field.
ModelConfig experiment_model(const std::string& name);

// Throws UsageError for an unknown name, arm or ablation.
TrainReport run_experiment(const ExperimentOptions& options);

// The samples a run with this protocol and run seed trains on (kTrain) or
// evaluates on (kEval). Generated tasks only: not efficiency or wikitext.
std::vector<TaskSample> experiment_samples(const std::string& name, const ExperimentProtocol& p,
                                           std::uint64_t seed, Split split);

// Scores samples with a saved model: accuracy, loss, perplexity, gate
// means, and per-mode accuracy and PKM gate for open/closed-book samples.
// InputError when a sample does not fit the checkpoint's vocab or max_len.
std::map<std::string, double> evaluate_checkpoint(const std::string& path,
                                                  const std::vector<TaskSample>& samples);

// Mutual information in bits of a joint count table.
double mutual_information_bits(const std::vector<std::vector<double>>& joint);

}  // namespace hydra
