#include <gtest/gtest.h>

#include <cmath>

#include "synoptic/adam.hpp"
#include "synoptic/rng.hpp"

using namespace synoptic;

TEST(Adam, ZeroGradientLeavesParametersUntouched) {
  std::vector<Tensor> params = {Tensor::full({3}, 0.5f)};
  std::vector<Tensor> grads = {Tensor({3})};
  adam_state st(adam_config{}, params);
  adam_step(params, grads, st);
  for (float v : params[0].data) EXPECT_FLOAT_EQ(v, 0.5f);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, SingleStepMovesByLearningRate) {
  std::vector<Tensor> params = {Tensor::full({1}, 1.0f)};
  std::vector<Tensor> grads = {Tensor::full({1}, 1.0f)};
  adam_config cfg;
  cfg.lr = 1e-3;
  adam_state st(cfg, params);
  adam_step(params, grads, st);
  // m_hat = v_hat = 1 at step 1, so the step is lr/(1+eps)
  EXPECT_NEAR(params[0][0], 1.0f - 1e-3f, 1e-9);
}

TEST(Adam, IdenticalTensorsGetIdenticalUpdates) {
  std::vector<Tensor> params = {Tensor::full({4}, 0.3f), Tensor::full({4}, 0.3f)};
  std::vector<Tensor> grads = {Tensor::full({4}, 0.2f), Tensor::full({4}, 0.2f)};
  adam_state st(adam_config{}, params);
  for (int i = 0; i < 10; ++i) adam_step(params, grads, st);
  EXPECT_EQ(params[0].data, params[1].data);
}

TEST(Adam, StepCounterIncreases) {
  std::vector<Tensor> params = {Tensor({2})};
  std::vector<Tensor> grads = {Tensor({2})};
  adam_state st(adam_config{}, params);
  for (int i = 1; i <= 5; ++i) {
    adam_step(params, grads, st);
    EXPECT_EQ(st.step, i);
  }
}

TEST(Adam, CountMismatchThrows) {
  std::vector<Tensor> params = {Tensor({2})};
  std::vector<Tensor> grads = {Tensor({2}), Tensor({2})};
  adam_state st(adam_config{}, params);
  EXPECT_THROW(adam_step(params, grads, st), shape_error);
}

TEST(Adam, DecoupledDecayShrinksWithoutGradient) {
  std::vector<Tensor> params = {Tensor::full({1}, 1.0f)};
  std::vector<Tensor> grads = {Tensor({1})};
  adam_config cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  cfg.decoupled_decay = true;
  adam_state st(cfg, params);
  adam_step(params, grads, st);
  EXPECT_NEAR(params[0][0], 1.0f * (1.0f - 0.1f * 0.5f), 1e-7);
}

// With coupled L2 decay, a deep learning-rate ladder and beta2 = 0.99, a
// weight whose only remaining gradient is the decay term walks down to zero:
// sign-descent at large |w|, then multiplicative contraction once lambda*|w|
// falls under Adam's epsilon. This is the mechanism behind the null-weight
// growth in the SynOp sweeps, so pin it down here.
TEST(Adam, CoupledDecayFlushesDeadWeightsToZero) {
  std::vector<Tensor> params = {Tensor({2}, {0.2f, -0.35f})};
  adam_config cfg;
  cfg.weight_decay = 1e-2;
  cfg.beta2 = 0.99;
  adam_state st(cfg, params);

  const std::vector<std::pair<double, int>> ladder = {
      {1e-3, 2400}, {1e-4, 400}, {1e-5, 400}, {1e-6, 400}, {3e-7, 800}};
  for (const auto& [lr, steps] : ladder) {
    st.cfg.lr = lr;
    for (int i = 0; i < steps; ++i) {
      std::vector<Tensor> grads = {Tensor({2})};  // dead: only decay acts
      adam_step(params, grads, st);
    }
  }
  EXPECT_LT(std::fabs(params[0][0]), 1e-12f);
  EXPECT_LT(std::fabs(params[0][1]), 1e-12f);
}

// The same ladder with beta2 = 0.999 and a gradient history leaves the weight
// parked well above the null threshold; lowering beta2 is what makes the
// second-moment memory fade fast enough for the flush to engage.
TEST(Adam, SecondMomentMemoryBlocksFlushAtHighBeta2) {
  std::vector<Tensor> params = {Tensor({1}, {0.2f})};
  adam_config cfg;
  cfg.weight_decay = 1e-2;
  cfg.beta2 = 0.999;
  adam_state st(cfg, params);
  rng_stream rng(4);

  const std::vector<std::pair<double, int>> ladder = {
      {1e-3, 2400}, {1e-4, 400}, {1e-5, 400}, {1e-6, 400}, {3e-7, 800}};
  int64_t t = 0;
  for (const auto& [lr, steps] : ladder) {
    st.cfg.lr = lr;
    for (int i = 0; i < steps; ++i, ++t) {
      std::vector<Tensor> grads = {Tensor({1})};
      if (t < 1000) grads[0][0] = static_cast<float>(0.05 * rng.normal());
      adam_step(params, grads, st);
    }
  }
  EXPECT_GT(std::fabs(params[0][0]), 1e-9f);
}
