#include <gtest/gtest.h>

#include "synoptic/selftest.hpp"
#include "synoptic/synop.hpp"

using namespace synoptic;

namespace {

layer_spec conv_layer(int64_t out, int64_t k, int64_t pad = 0, int64_t stride = 1) {
  layer_spec l{layer_kind::conv2d};
  l.out_channels = out;
  l.kernel = {k, k};
  l.stride = {stride, stride};
  l.padding = {pad, pad};
  return l;
}

layer_spec pool_layer(int64_t k) {
  layer_spec l{layer_kind::avgpool2d};
  l.kernel = {k, k};
  l.stride = {k, k};
  return l;
}

layer_spec linear_layer(int64_t out) {
  layer_spec l{layer_kind::linear};
  l.out_features = out;
  return l;
}

layer_spec relu_layer() { return layer_spec{layer_kind::relu}; }

}  // namespace

TEST(Fanout, ActivationIntoLinear) {
  network_spec s;
  s.input_shape = {1, 4, 4};
  s.layers = {conv_layer(2, 1), relu_layer(), linear_layer(10)};
  fanout_table t = compute_fanout(s);
  EXPECT_DOUBLE_EQ(t.layers[0].scalar, 10.0);
  for (int64_t v : t.layers[0].map) EXPECT_EQ(v, 10);
}

TEST(Fanout, PoolThenConvComposes) {
  // 2x2 avgpool contributes factor 1, then 3x3 conv with K=4: 1*(3*3*4) = 36
  network_spec s;
  s.input_shape = {1, 12, 12};
  s.layers = {conv_layer(3, 1), relu_layer(), pool_layer(2), conv_layer(4, 3),
              relu_layer(), linear_layer(2)};
  fanout_table t = compute_fanout(s);
  EXPECT_DOUBLE_EQ(t.layers[0].scalar, 36.0);
}

TEST(Fanout, FinalOutputLayerIsZero) {
  network_spec s;
  s.input_shape = {1, 4, 4};
  s.layers = {conv_layer(2, 1), relu_layer(), linear_layer(3), relu_layer()};
  fanout_table t = compute_fanout(s);
  EXPECT_DOUBLE_EQ(t.layers.back().scalar, 0.0);
  EXPECT_DOUBLE_EQ(t.output.scalar, 0.0);
}

TEST(Fanout, InputEntryCoversFirstWeightedLayer) {
  network_spec s;
  s.input_shape = {1, 16, 16};
  s.layers = {conv_layer(8, 3, 1), pool_layer(2), relu_layer(), linear_layer(4)};
  fanout_table t = compute_fanout(s);
  EXPECT_DOUBLE_EQ(t.input.scalar, 72.0);  // 3*3*8 for interior pixels
  // corner pixel reaches only 2x2 conv positions under padding 1
  EXPECT_EQ(t.input.map[0], 4 * 8);
}

TEST(Fanout, MatchesBruteForceEnumeration) {
  for (uint64_t seed = 10; seed < 20; ++seed) {
    network_spec spec = random_chain_spec(seed);
    fanout_table table = compute_fanout(spec);
    EXPECT_EQ(table.input.map, brute_force_fanout_map(spec, -1)) << "seed " << seed;
    const std::vector<size_t> acts = spec.activation_indices();
    for (size_t a = 0; a < acts.size(); ++a)
      EXPECT_EQ(table.layers[a].map,
                brute_force_fanout_map(spec, static_cast<int64_t>(acts[a])))
          << "seed " << seed << " layer " << a;
  }
}

TEST(Estimate, SingleLayerDirect) {
  network_spec s;
  s.input_shape = {1, 12, 12};
  s.layers = {conv_layer(3, 1), relu_layer(), pool_layer(2), conv_layer(4, 3),
              relu_layer(), linear_layer(2)};
  fanout_table t = compute_fanout(s);
  ASSERT_DOUBLE_EQ(t.layers[0].scalar, 36.0);

  // activations summing to 100 in the first spiking layer, zero in the second
  Tensor a0({1, 3, 12, 12});
  a0[0] = 60.0f;
  a0[5] = 40.0f;
  Tensor a1({1, 4, 4, 4});
  synop_estimate est = estimate_synops({a0, a1}, t, s);
  EXPECT_DOUBLE_EQ(est.per_layer[0], 3600.0);
  EXPECT_DOUBLE_EQ(est.per_layer[1], 0.0);
  EXPECT_DOUBLE_EQ(est.network_total(), 3600.0);
}

TEST(Estimate, TwoLayerHandSum) {
  network_spec s;
  s.input_shape = {1, 4, 4};
  s.layers = {conv_layer(2, 1), relu_layer(), linear_layer(10),
              relu_layer(), linear_layer(4)};
  fanout_table t = compute_fanout(s);
  ASSERT_DOUBLE_EQ(t.layers[0].scalar, 10.0);
  ASSERT_DOUBLE_EQ(t.layers[1].scalar, 4.0);
  Tensor a0({1, 2, 4, 4});
  a0[0] = 5.0f;
  Tensor a1({1, 10});
  a1[3] = 7.0f;
  synop_estimate est = estimate_synops({a0, a1}, t, s);
  EXPECT_DOUBLE_EQ(est.per_layer[0], 50.0);
  EXPECT_DOUBLE_EQ(est.per_layer[1], 28.0);
  EXPECT_DOUBLE_EQ(est.network_total(), 78.0);
}

TEST(Estimate, AllZeroActivations) {
  network_spec s;
  s.input_shape = {1, 4, 4};
  s.layers = {conv_layer(2, 1), relu_layer(), linear_layer(10)};
  fanout_table t = compute_fanout(s);
  synop_estimate est = estimate_synops({Tensor({2, 2, 4, 4})}, t, s);
  EXPECT_DOUBLE_EQ(est.network_total(), 0.0);
}

TEST(Estimate, LinearInActivations) {
  network_spec s;
  s.input_shape = {1, 4, 4};
  s.layers = {conv_layer(2, 1), relu_layer(), linear_layer(10)};
  fanout_table t = compute_fanout(s);
  rng_stream rng(3);
  Tensor a({2, 2, 4, 4}), b({2, 2, 4, 4}), ab({2, 2, 4, 4});
  for (int64_t i = 0; i < a.numel(); ++i) {
    a[i] = static_cast<float>(rng.uniform(0, 2));
    b[i] = static_cast<float>(rng.uniform(0, 2));
    ab[i] = a[i] + b[i];
  }
  const double sum = estimate_synops({a}, t, s).network_total() +
                     estimate_synops({b}, t, s).network_total();
  EXPECT_NEAR(estimate_synops({ab}, t, s).network_total(), sum, 1e-6 * sum);
}

TEST(Estimate, MismatchedLayerCount) {
  network_spec s;
  s.input_shape = {1, 4, 4};
  s.layers = {conv_layer(2, 1), relu_layer(), linear_layer(10)};
  fanout_table t = compute_fanout(s);
  EXPECT_THROW(estimate_synops({}, t, s), config_error);
}

TEST(SynopLoss, PenaltyVanishesAtTarget) {
  loss_config cfg;
  cfg.mode = penalty_mode::synop_weighted;
  cfg.s0 = 1234.5;
  synop_estimate est;
  est.per_layer = {1000.0, 234.5};
  EXPECT_DOUBLE_EQ(synop_loss_value(0.7, est, cfg), 0.7);
}

TEST(SynopLoss, NormalizedQuadraticPenalty) {
  loss_config cfg;
  cfg.mode = penalty_mode::synop_weighted;
  cfg.s0 = 1e6;
  synop_estimate est;
  est.per_layer = {2e6};
  EXPECT_DOUBLE_EQ(synop_loss_value(0.0, est, cfg), 1.0);  // (1e6)^2 / 1e12
}

TEST(SynopLoss, ModeNonePassesThrough) {
  loss_config cfg;
  synop_estimate est;
  est.per_layer = {9e9};
  EXPECT_DOUBLE_EQ(synop_loss_value(2.5, est, cfg), 2.5);
}

TEST(SynopLoss, AlphaDefaultsToInverseSquaredTarget) {
  loss_config cfg;
  cfg.mode = penalty_mode::synop_weighted;
  cfg.s0 = 250.0;
  EXPECT_DOUBLE_EQ(cfg.resolved_alpha(), 1.0 / (250.0 * 250.0));
}

TEST(SynopLoss, ZeroTargetWithoutAlphaIsError) {
  loss_config cfg;
  cfg.mode = penalty_mode::synop_weighted;
  cfg.s0 = 0.0;
  EXPECT_THROW(cfg.resolved_alpha(), config_error);
  cfg.alpha = 0.5;
  EXPECT_DOUBLE_EQ(cfg.resolved_alpha(), 0.5);
}

TEST(SynopLoss, PenaltyIsDimensionless) {
  loss_config a, b;
  a.mode = b.mode = penalty_mode::synop_weighted;
  a.s0 = 1000.0;
  b.s0 = 2000.0;
  synop_estimate ea, eb;
  ea.per_layer = {1700.0};
  eb.per_layer = {3400.0};  // both 1.7x the target
  EXPECT_DOUBLE_EQ(synop_loss_value(0.0, ea, a), synop_loss_value(0.0, eb, b));
}

TEST(SynopPenaltyNode, GradientReachesActivations) {
  // relu -> penalty; finite differences on the non-quantized relaxation
  Tensor x({1, 6}, {0.5f, 1.5f, -0.2f, 2.0f, 0.1f, -1.0f});
  const std::vector<double> fanouts = {10.0};
  const double s0 = 20.0, alpha = 1.0 / (s0 * s0);

  tape t;
  node* xn = make_input(t, x);
  node* a = op_relu(t, xn);
  node* pen = op_synop_penalty(t, {a}, fanouts, penalty_mode::synop_weighted, s0, alpha);
  t.backward(pen);

  bool any_nonzero = false;
  for (int64_t i = 0; i < x.numel(); ++i)
    if (x[i] > 0 && xn->grad[i] != 0.0f) any_nonzero = true;
  EXPECT_TRUE(any_nonzero);

  const double err = max_fd_error({&x}, {xn->grad}, [&] {
    double total = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i)
      if (x[i] > 0) total += 10.0 * x[i];
    const double gap = s0 - total;
    return alpha * gap * gap;
  });
  EXPECT_LT(err, 1e-3);
}

TEST(SynopPenaltyNode, SpikeCountL1Mode) {
  Tensor a0v({2, 3}, {1.0f, 2.0f, 0.0f, 3.0f, 0.0f, 4.0f});
  tape t;
  node* a0 = make_input(t, a0v);
  node* pen =
      op_synop_penalty(t, {a0}, {36.0}, penalty_mode::spike_count_l1, 0.0, 0.25);
  // unweighted activation total per sample: (1+2+3+4)/2 = 5, times alpha
  EXPECT_FLOAT_EQ(pen->value[0], 1.25f);
}
