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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "hydra/errors.hpp"
#include "hydra/train.hpp"
#include "test_util.hpp"

namespace hydra {
namespace {

ParamList one_param(double value, Component c = Component::kBackbone) {
  ParamList ps;
  ps.add("w", Tensor::from({1}, {value}), c);
  return ps;
}

void set_grad(ParamList& ps, double g) {
  ps.items()[0].value.ensure_grad()[0] = g;
}

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  ParamList ps = one_param(1.5);
  OptimState st = OptimState::create(ps, AdamOptions::adam());
  set_grad(ps, 0.0);
  adam_step(ps, st);
  EXPECT_EQ(ps.items()[0].value.at(0), 1.5);
}

// High-precision values of the bias-corrected updates.
TEST(Adam, FirstTwoStepsMatchClosedForm) {
  ParamList ps = one_param(1.0);
  OptimState st = OptimState::create(ps, AdamOptions::adam(1e-3));
  set_grad(ps, 0.5);
  adam_step(ps, st);
  EXPECT_NEAR(ps.items()[0].value.at(0), 0.999000000019999999600000008, 1e-15);
  set_grad(ps, -0.25);
  adam_step(ps, st);
  EXPECT_NEAR(ps.items()[0].value.at(0), 0.998733662987078461625593764029, 1e-15);
  EXPECT_EQ(st.t[0], 2u);
}

TEST(Adam, DecoupledWeightDecay) {
  ParamList ps = one_param(2.0);
  OptimState st = OptimState::create(ps, AdamOptions::adamw(1e-3));
  set_grad(ps, 0.5);
  adam_step(ps, st);
  EXPECT_NEAR(ps.items()[0].value.at(0), 1.998980000019999999600000008, 1e-15);

  ParamList still = one_param(2.0);
  OptimState st0 = OptimState::create(still, AdamOptions::adamw(0.0));
  set_grad(still, 0.5);
  adam_step(still, st0);
  EXPECT_EQ(still.items()[0].value.at(0), 2.0);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamList ps;
  ps.add("block0.ssm.w_in", Tensor::from({2}, {1.0, 1.0}), Component::kBackbone);
  OptimState st = OptimState::create(ps, AdamOptions::adam());
  ps.items()[0].value.ensure_grad()[1] = std::nan("");
  try {
    adam_step(ps, st);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("block0.ssm.w_in"), std::string::npos);
  }
  EXPECT_EQ(ps.items()[0].value.at(0), 1.0);
}

TEST(Adam, FrozenAndGradlessParametersKeepState) {
  ParamList ps;
  ps.add("a", Tensor::from({1}, {1.0}), Component::kSga);
  ps.add("b", Tensor::from({1}, {1.0}), Component::kBackbone);
  ps.add("c", Tensor::from({1}, {1.0}), Component::kBackbone);
  OptimState st = OptimState::create(ps, AdamOptions::adam());
  ps.items()[0].value.ensure_grad()[0] = 1.0;
  ps.items()[1].value.ensure_grad()[0] = 1.0;
  adam_step(ps, st, {Component::kSga});
  EXPECT_EQ(ps.items()[0].value.at(0), 1.0);
  EXPECT_LT(ps.items()[1].value.at(0), 1.0);
  EXPECT_EQ(ps.items()[2].value.at(0), 1.0);
  EXPECT_EQ(st.t, (std::vector<std::size_t>{0, 1, 0}));
}

TEST(LmLoss, UniformLogitsGiveLogVocab) {
  const Tensor logits = Tensor::zeros({5, 37});
  const std::vector<std::int64_t> targets = {3, 0, 36, 5, 9};
  const Tensor l = lm_loss(logits, targets, std::vector<bool>(5, true));
  EXPECT_NEAR(l.item(), std::log(37.0), 1e-14);
  EXPECT_NEAR(perplexity(l.item()), 37.0, 1e-11);
}

TEST(LmLoss, ConfidentCorrectLogitsApproachZero) {
  Tensor logits = Tensor::zeros({2, 4});
  logits.ptr()[1] = 50.0;
  logits.ptr()[4 + 3] = 50.0;
  const std::vector<std::int64_t> targets = {1, 3};
  EXPECT_LT(lm_loss(logits, targets, {true, true}).item(), 1e-20);
}

TEST(LmLoss, MatchesHighPrecisionCrossEntropy) {
  const Tensor logits = Tensor::from({4, 4}, {0.3, -1.2, 2.5, 0.7, 1.1, 0.4, -0.6, -2.0, -0.5,
                                              0.9, 0.2, 1.3, 9.0, 9.0, 9.0, 9.0});
  const std::vector<std::int64_t> targets = {2, 0, 3, 1};
  const Tensor l = lm_loss(logits, targets, {true, true, true, false});
  EXPECT_NEAR(l.item(), 0.527287275901535599250421572736, 1e-15);
}

TEST(LmLoss, EmptyMaskIsUsageError) {
  const std::vector<std::int64_t> targets = {0, 1};
  EXPECT_THROW(lm_loss(Tensor::zeros({2, 3}), targets, {false, false}), UsageError);
}

TEST(Curriculum, PhasesAndBoundaries) {
  CurriculumSchedule s;
  s.b_start = 10;
  s.c_start = 20;
  s.d_start = 30;
  const PhaseFlags a = curriculum_step(s, 0);
  EXPECT_EQ(a.phase, Phase::kA);
  EXPECT_FALSE(a.paths.sga || a.paths.moe || a.paths.memory);
  EXPECT_TRUE(a.frozen.count(Component::kSga) && a.frozen.count(Component::kMoe) &&
              a.frozen.count(Component::kWorkspace) && a.frozen.count(Component::kPkm));
  EXPECT_EQ(curriculum_step(s, 9).phase, Phase::kA);
  EXPECT_EQ(curriculum_step(s, 10).phase, Phase::kB);
  EXPECT_EQ(curriculum_step(s, 20).phase, Phase::kC);
  EXPECT_EQ(curriculum_step(s, 30).phase, Phase::kD);
  const PhaseFlags d = curriculum_step(s, 1000);
  EXPECT_EQ(d.phase, Phase::kD);
  EXPECT_TRUE(d.paths.sga && d.paths.moe && d.paths.memory);
  EXPECT_TRUE(d.frozen.empty());
  EXPECT_GT(d.balance_weight, 0.0);
  EXPECT_EQ(curriculum_step(s, 15).balance_weight, 0.0);
}

TEST(Curriculum, ThresholdAnnealsAcrossPhaseB) {
  CurriculumSchedule s;
  s.b_start = 10;
  s.c_start = 20;
  s.d_start = 30;
  EXPECT_DOUBLE_EQ(curriculum_step(s, 10).tau, 0.9);
  EXPECT_DOUBLE_EQ(curriculum_step(s, 15).tau, 0.7);
  EXPECT_DOUBLE_EQ(curriculum_step(s, 20).tau, 0.5);
  s.c_start = 5;
  EXPECT_THROW(curriculum_step(s, 0), UsageError);
}

TEST(MutualInformation, IndependentAndDeterministicTables) {
  EXPECT_NEAR(mutual_information_bits({{1, 1}, {1, 1}}), 0.0, 1e-15);
  EXPECT_NEAR(mutual_information_bits({{5, 0}, {0, 5}}), 1.0, 1e-15);
  EXPECT_NEAR(mutual_information_bits({{3, 0, 0, 0}, {0, 3, 0, 0}, {0, 0, 3, 0}, {0, 0, 0, 3}}),
              2.0, 1e-15);
  EXPECT_EQ(mutual_information_bits({{0, 0}}), 0.0);
}

TEST(Protocol, OverridesAndUnknownKeys) {
  ExperimentProtocol p = ExperimentProtocol::defaults("logic");
  EXPECT_EQ(p.epochs, 1000u);
  EXPECT_EQ(p.batch, 32u);
  p.apply({{"epochs", "3"}, {"lr", "0.01"}, {"adamw", "true"}});
  EXPECT_EQ(p.epochs, 3u);
  EXPECT_DOUBLE_EQ(p.lr, 0.01);
  EXPECT_TRUE(p.adamw);
  EXPECT_EQ(p.to_map().at("epochs"), "3");
  EXPECT_THROW(p.apply({{"bogus", "1"}}), UsageError);
  EXPECT_THROW(p.apply({{"epochs", "-1"}}), UsageError);
  EXPECT_THROW(p.apply({{"epochs", "2x"}}), UsageError);
  EXPECT_THROW(ExperimentProtocol::defaults("nope"), UsageError);
}

ExperimentOptions tiny_logic(std::uint64_t seed) {
  ExperimentOptions o;
  o.name = "logic";
  o.model = experiment_model("logic");
  o.model.d = 16;
  o.model.router_dim = 8;
  o.model.expert_hidden = 16;
  o.model.ws_rank = 8;
  o.model.pkm_dk = 8;
  o.seed = seed;
  o.overrides = {{"epochs", "2"}, {"n_train", "24"}, {"n_eval", "8"}, {"batch", "8"}};
  return o;
}

TEST(RunExperiment, SameSeedGivesIdenticalReport) {
  const TrainReport a = run_experiment(tiny_logic(3));
  const TrainReport b = run_experiment(tiny_logic(3));
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.metrics.at("eval_accuracy"), b.metrics.at("eval_accuracy"));
  EXPECT_NE(a.to_csv(), run_experiment(tiny_logic(4)).to_csv());
  EXPECT_EQ(a.rows.back().step, 6u);
}

TEST(RunExperiment, CurriculumPhaseAFreezesConditionalComponents) {
  ExperimentOptions o = tiny_logic(5);
  o.curriculum = true;
  o.overrides["epochs"] = "1";
  o.overrides["n_train"] = "8";
  o.overrides["batch"] = "1";  // 8 steps: 2 per phase
  ModelConfig cfg = o.model;
  const TrainReport rep = run_experiment(o);
  EXPECT_EQ(rep.rows.back().phase, "D");

  // Phase-A steps by hand, comparing per-component checksums.
  cfg.vocab = logic_vocab(26).size();
  HydraModel m = HydraModel::init(cfg);
  auto checksum = [&](Component c) {
    double s = 0.0;
    for (const Param& p : m.params().items()) {
      if (p.component != c) continue;
      for (double v : p.value.data()) s += v * 1.000001 + std::abs(v);
    }
    return s;
  };
  const Component frozen[] = {Component::kSga, Component::kMoe, Component::kWorkspace,
                              Component::kPkm, Component::kRouter};
  std::vector<double> before;
  for (Component c : frozen) before.push_back(checksum(c));
  const double backbone_before = checksum(Component::kBackbone);
  CurriculumSchedule sched;
  sched.b_start = sched.c_start = sched.d_start = 100;
  OptimState st = OptimState::create(m.params(), AdamOptions::adam(1e-2));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const PhaseFlags f = curriculum_step(sched, s);
    ASSERT_EQ(f.phase, Phase::kA);
    const TaskSample sample = gen_logic_chain(26, 2, s);
    Tape tape;
    TapeScope scope(tape);
    ForwardOptions fo;
    fo.training = true;
    fo.paths = f.paths;
    fo.logit_rows = sample.target_positions;
    Tensor loss = ops::cross_entropy(m.forward(sample.tokens, fo).logits, sample.targets);
    tape.backward(loss);
    adam_step(m.params(), st, f.frozen);
    m.params().zero_grads();
  }
  for (std::size_t i = 0; i < std::size(frozen); ++i) {
    EXPECT_EQ(checksum(frozen[i]), before[i]) << component_name(frozen[i]);
  }
  EXPECT_NE(checksum(Component::kBackbone), backbone_before);
}

TEST(RunExperiment, ArgumentErrors) {
  ExperimentOptions o = tiny_logic(1);
  o.name = "unknown";
  EXPECT_THROW(run_experiment(o), UsageError);
  o = tiny_logic(1);
  o.ablate = {"nothing"};
  EXPECT_THROW(run_experiment(o), UsageError);
  o = tiny_logic(1);
  o.arm = "transformer";
  o.ablate = {"workspace"};
  EXPECT_THROW(run_experiment(o), UsageError);
  o = tiny_logic(1);
  o.arm = "dense";
  EXPECT_THROW(run_experiment(o), UsageError);
}

TEST(RunExperiment, SingleExpertMoeArmIsTheDenseArm) {
  ExperimentOptions o;
  o.name = "moe_dense";
  o.model = experiment_model("moe_dense");
  o.model.d = 16;
  o.model.router_dim = 8;
  o.model.n_experts = 1;
  o.model.expert_hidden = 32;
  o.model.ws_rank = 8;
  o.model.pkm_dk = 8;
  o.overrides = {{"epochs", "1"}, {"n_train", "10"}, {"n_eval", "5"}};
  o.arm = "hydra";
  const TrainReport moe = run_experiment(o);
  o.arm = "dense";
  const TrainReport dense = run_experiment(o);
  EXPECT_EQ(moe.to_csv(), dense.to_csv());
  EXPECT_EQ(moe.metrics.at("params"), dense.metrics.at("params"));
}

TEST(ExperimentSamples, SplitsAreDisjointAndDeterministic) {
  ExperimentProtocol p = ExperimentProtocol::defaults("logic");
  p.n_train = 20;
  p.n_eval = 20;
  const auto train = experiment_samples("logic", p, 9, Split::kTrain);
  const auto eval = experiment_samples("logic", p, 9, Split::kEval);
  ASSERT_EQ(train.size(), 20u);
  EXPECT_EQ(format_sample(train[3]), format_sample(experiment_samples("logic", p, 9, Split::kTrain)[3]));
  std::size_t same = 0;
  for (std::size_t i = 0; i < train.size(); ++i) same += train[i].tokens == eval[i].tokens;
  EXPECT_LT(same, 3u);
  const auto qa = experiment_samples("pkm_recall", ExperimentProtocol::defaults("pkm_recall"), 1, Split::kEval);
  EXPECT_EQ(qa[0].meta.at("is_open_book"), "1");
  EXPECT_EQ(qa[1].meta.at("is_open_book"), "0");
  EXPECT_THROW(experiment_samples("wikitext", p, 1, Split::kTrain), UsageError);
  EXPECT_THROW(experiment_samples("nope", p, 1, Split::kTrain), UsageError);
}

class CheckpointEval : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = (std::filesystem::temp_directory_path() / "hydra_ckpt_eval_test").string();
    std::filesystem::remove_all(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string dir_;
};

TEST_F(CheckpointEval, ReproducesFinalEvaluation) {
  ExperimentOptions o = tiny_logic(3);
  o.out_dir = dir_;
  const TrainReport rep = run_experiment(o);
  ASSERT_TRUE(std::filesystem::exists(rep.checkpoint_path));
  ExperimentProtocol p = ExperimentProtocol::defaults("logic");
  p.apply(o.overrides);
  const auto m = evaluate_checkpoint(rep.checkpoint_path, experiment_samples("logic", p, 3, Split::kEval));
  EXPECT_DOUBLE_EQ(m.at("accuracy"), rep.metrics.at("eval_accuracy"));
  EXPECT_NEAR(m.at("loss"), rep.metrics.at("eval_loss"), 1e-12);
  EXPECT_TRUE(m.count("mean_beta_ws"));
  EXPECT_FALSE(m.count("beta_pkm_open"));

  TaskSample wide = experiment_samples("logic", p, 3, Split::kEval)[0];
  wide.tokens[0] = 29;  // logic vocab has 29 symbols
  EXPECT_THROW(evaluate_checkpoint(rep.checkpoint_path, {wide}), InputError);
  EXPECT_THROW(evaluate_checkpoint(rep.checkpoint_path, {}), InputError);
  EXPECT_THROW(evaluate_checkpoint(dir_ + "/missing.ckpt", {wide}), IoError);
}

TEST_F(CheckpointEval, MemorizesASingleSample) {
  ExperimentOptions o = tiny_logic(1);
  o.out_dir = dir_;
  o.overrides = {{"epochs", "60"}, {"n_train", "1"}, {"n_eval", "1"}, {"batch", "1"}, {"lr", "0.01"}};
  const TrainReport rep = run_experiment(o);
  ExperimentProtocol p = ExperimentProtocol::defaults("logic");
  p.apply(o.overrides);
  const auto m = evaluate_checkpoint(rep.checkpoint_path, experiment_samples("logic", p, 1, Split::kTrain));
  EXPECT_EQ(m.at("accuracy"), 1.0);
}

TEST_F(CheckpointEval, ReportsPerModeGateForQa) {
  ExperimentOptions o;
  o.name = "pkm_recall";
  o.model = experiment_model("pkm_recall");
  o.model.d = 16;
  o.model.router_dim = 8;
  o.model.expert_hidden = 16;
  o.model.ws_rank = 8;
  o.model.pkm_dk = 8;
  o.out_dir = dir_;
  o.overrides = {{"epochs", "1"}, {"n_train", "8"}, {"n_eval", "4"}, {"batch", "4"}};
  const TrainReport rep = run_experiment(o);
  ExperimentProtocol p = ExperimentProtocol::defaults("pkm_recall");
  p.apply(o.overrides);
  const auto m = evaluate_checkpoint(rep.checkpoint_path, experiment_samples("pkm_recall", p, 0, Split::kEval));
  for (const char* k : {"beta_pkm_open", "beta_pkm_closed", "accuracy_open", "accuracy_closed"}) {
    EXPECT_TRUE(m.count(k)) << k;
  }
  EXPECT_DOUBLE_EQ(m.at("beta_pkm_open"), rep.metrics.at("beta_pkm_open"));
}

// Full-size logic data at the CI scale (100 epochs). Training has no
// schedule, so the first 10 epochs are exactly the first 10% of that run.
TEST(RunExperiment, LogicLossHalvesEarly) {
  ExperimentOptions o;
  o.name = "logic";
  o.model = experiment_model("logic");
  o.seed = 7;
  o.overrides = {{"epochs", "10"}, {"n_eval", "8"}};
  const TrainReport rep = run_experiment(o);
  ASSERT_EQ(rep.rows.size(), 10u);
  EXPECT_LT(rep.rows.back().loss, 0.5 * rep.rows.front().loss);
}

}  // namespace
}  // namespace hydra
