#include <gtest/gtest.h>

#include <cmath>

#include "acmix/bench.hpp"
#include "acmix/train_toy.hpp"
#include "acmix/verify.hpp"

using namespace acmix;

TEST(Verify, DefaultMatrixPasses) {
  const CheckReport r = run_verify({});
  EXPECT_TRUE(r.all_passed()) << r.to_text();
  std::size_t conv = 0;
  for (const CheckResult& c : r.checks) conv += c.group == "conv-decomposition";
  EXPECT_EQ(conv, 54u);
}

TEST(Verify, InjectedFaultIsReported) {
  VerifyOptions o;
  o.sizes = {8};
  o.inject_fault = true;
  const CheckReport r = run_verify(o);
  EXPECT_FALSE(r.all_passed());
  for (const CheckResult& c : r.checks)
    if (c.group == "conv-decomposition") {
      EXPECT_FALSE(c.passed) << c.instance;
      EXPECT_GT(c.deviation, 0.1);
    }
}

TEST(Verify, IsDeterministic) {
  VerifyOptions o;
  o.sizes = {8};
  EXPECT_EQ(run_verify(o).to_json().dump(), run_verify(o).to_json().dump());
}

TEST(Verify, EmptyReportDoesNotPass) { EXPECT_FALSE(CheckReport{}.all_passed()); }

TEST(Bench, GateRunsBeforeTiming) {
  BenchOptions o;
  o.size = 12;
  o.channels = 4;
  o.warmup = 0;
  o.iterations = 2;
  const BenchResult ok = run_bench(o);
  EXPECT_TRUE(ok.equivalent);
  EXPECT_LE(ok.max_deviation, 1e-10);
  ASSERT_EQ(ok.timings.size(), 3u);
  EXPECT_EQ(ok.timings[1].parameter_touches, ok.timings[2].parameter_touches);
  EXPECT_DOUBLE_EQ(ok.timings[0].speedup_vs_naive, 1.0);

  o.inject_fault = true;
  const BenchResult bad = run_bench(o);
  EXPECT_FALSE(bad.equivalent);
  EXPECT_EQ(bad.failing_variant, "group-conv-learnable");
  EXPECT_TRUE(bad.timings.empty());
}

TEST(Bench, NaiveShiftSumMatchesGroupConv) {
  std::mt19937_64 rng(81);
  std::vector<Tensor> maps;
  for (int g = 0; g < 25; ++g) maps.push_back(random_tensor({1, 3, 7, 6}, rng));
  EXPECT_LE(max_abs_diff(shift_sum_naive(maps, 5), shift_sum_group_conv(maps, ShiftKernelBank::one_hot(5, 3))), 1e-12);
}

TEST(SmoothedLoss, TrailingWindow) {
  const std::vector<double> l{10, 8, 6, 4, 2};
  EXPECT_DOUBLE_EQ(smoothed_loss(l, 0, 3), 10.0);
  EXPECT_DOUBLE_EQ(smoothed_loss(l, 1, 3), 9.0);
  EXPECT_DOUBLE_EQ(smoothed_loss(l, 4, 3), 4.0);
}

TEST(TrainToy, ShortRunRecordsEveryStep) {
  TrainOptions o;
  o.steps = 20;
  o.size = 8;
  const TrainResult r = train_toy(o);
  const TrajectoryRecord& rec = r.record;
  EXPECT_TRUE(rec.complete());
  EXPECT_EQ(rec.loss.size(), 21u);
  EXPECT_EQ(rec.points.size(), 42u);
  EXPECT_EQ(rec.points.front().alpha, 1.0);
  EXPECT_LT(r.final_smoothed, r.initial_smoothed);
}

TEST(TrainToy, TrajectoryRoundTripsThroughJsonAndCsv) {
  TrainOptions o;
  o.steps = 15;
  o.size = 8;
  const TrajectoryRecord rec = train_toy(o).record;
  EXPECT_EQ(trajectory_from_json(nlohmann::json::parse(trajectory_to_json(rec).dump())), rec);
  EXPECT_EQ(trajectory_from_csv(trajectory_to_csv(rec), rec.mix), rec);
  EXPECT_THROW(trajectory_from_csv("a,b\n", rec.mix), std::invalid_argument);
  EXPECT_THROW(trajectory_from_json(nlohmann::json::object()), std::invalid_argument);
}

TEST(TrainToy, AlphaOneKeepsBetaAtOne) {
  TrainOptions o;
  o.steps = 10;
  o.size = 8;
  o.mix = MixMode::alpha_one;
  const TrajectoryRecord rec = train_toy(o).record;
  for (const TrajectoryPoint& p : rec.points) EXPECT_EQ(p.beta, 1.0);
  EXPECT_NE(rec.points.back().alpha, 1.0);
}

TEST(TrainToy, IsDeterministic) {
  TrainOptions o;
  o.steps = 5;
  o.size = 8;
  EXPECT_EQ(train_toy(o).record, train_toy(o).record);
}

TEST(TrainToy, DivergenceNamesSeedAndStep) {
  TrainOptions o;
  o.steps = 50;
  o.size = 8;
  o.lr = 1e6;
  o.seed = 99;
  try {
    train_toy(o);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.seed(), 99u);
    EXPECT_GT(e.step(), 0u);
  }
}

TEST(TrainToy, RejectsBadOptions) {
  TrainOptions o;
  o.lr = 0.0;
  EXPECT_THROW(train_toy(o), std::invalid_argument);
  o.lr = 0.05;
  o.steps = 0;
  EXPECT_THROW(train_toy(o), std::invalid_argument);
}

TEST(TrajectoryPoint, LogRatioUndefinedAtZero) {
  EXPECT_FALSE((TrajectoryPoint{0, 0, 1.0, 0.0}.log_ratio()));
  const TrajectoryPoint p{0, 0, -2.0, 1.0};
  EXPECT_NEAR(*p.log_ratio(), std::log(2.0), 1e-15);
}
