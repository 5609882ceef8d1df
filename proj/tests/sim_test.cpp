#include <gtest/gtest.h>

#include <cmath>

#include "synoptic/sim.hpp"

using namespace synoptic;

namespace {

trained_model identity_linear_model(int64_t units = 1) {
  network_spec s;
  s.input_shape = {1, 1, units};
  layer_spec fc{layer_kind::linear};
  fc.out_features = units;
  s.layers = {fc};
  trained_model m;
  m.spec = s;
  Tensor w({units, units});
  for (int64_t i = 0; i < units; ++i) w[i * units + i] = 1.0f;
  m.weights = {w};
  return m;
}

trained_model small_conv_model(uint64_t seed, bool quantized) {
  network_spec s;
  s.input_shape = {1, 8, 8};
  layer_spec conv{layer_kind::conv2d};
  conv.out_channels = 4;
  conv.kernel = {3, 3};
  conv.padding = {1, 1};
  layer_spec pool{layer_kind::avgpool2d};
  pool.kernel = {2, 2};
  pool.stride = {2, 2};
  layer_spec relu{layer_kind::relu};
  layer_spec fc{layer_kind::linear};
  fc.out_features = 3;
  s.layers = {conv, pool, relu, fc};
  if (quantized) s = s.quantized();
  trained_model m;
  m.spec = s;
  m.weights = init_weights(s, seed);
  return m;
}

std::vector<event> burst(std::initializer_list<std::tuple<uint64_t, uint16_t, uint16_t>> evs) {
  std::vector<event> out;
  for (const auto& [t, x, y] : evs) out.push_back({t, x, y, 0});
  return out;
}

}  // namespace

TEST(IafStep, ExactMultipleEmitsAllSpikes) {
  iaf_state st(1);
  std::vector<int64_t> n = iaf_step(st, Tensor({1}, {5.0f}));
  EXPECT_EQ(n[0], 5);
  EXPECT_DOUBLE_EQ(st.v[0], 0.0);
}

TEST(IafStep, SubtractResetKeepsResidual) {
  iaf_state st(1);
  for (int step = 0; step < 2; ++step) {
    std::vector<int64_t> n = iaf_step(st, Tensor({1}, {0.35f}));
    EXPECT_EQ(n[0], 0);
  }
  std::vector<int64_t> n = iaf_step(st, Tensor({1}, {0.35f}));
  EXPECT_EQ(n[0], 1);
  EXPECT_NEAR(st.v[0], 0.05, 1e-6);
}

TEST(IafStep, NoInputNoSpikes) {
  iaf_state st(4);
  for (int step = 0; step < 10; ++step) {
    std::vector<int64_t> n = iaf_step(st, Tensor({4}));
    for (int64_t v : n) EXPECT_EQ(v, 0);
  }
}

TEST(IafStep, NegativeCurrentDrivesMembraneDown) {
  iaf_state st(1);
  iaf_step(st, Tensor({1}, {-2.5f}));
  EXPECT_DOUBLE_EQ(st.v[0], -2.5);
  iaf_state floored(1, 1.0, true);
  iaf_step(floored, Tensor({1}, {-2.5f}));
  EXPECT_DOUBLE_EQ(floored.v[0], 0.0);
}

TEST(IafStep, ShapeMismatchRejected) {
  iaf_state st(3);
  EXPECT_THROW(iaf_step(st, Tensor({2})), shape_error);
}

TEST(ConstantCurrent, SpikeCountEqualsFloorExactly) {
  trained_model m = identity_linear_model();
  rng_stream rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const float drive = trial < 50 ? static_cast<float>(trial)  // exact integers
                                   : static_cast<float>(rng.uniform(0.0, 200.0));
    const int64_t n_dt = 1 + static_cast<int64_t>(rng.uniform_index(10));
    snn_network net(m);
    sim_config cfg;
    cfg.mode = sim_config::input_mode::constant_current;
    cfg.n_dt = n_dt;
    sample_result r = run_sample(net, cfg, Tensor({1, 1, 1}, {drive}));
    EXPECT_EQ(r.ledger.layer_spikes[0],
              static_cast<int64_t>(std::floor(static_cast<double>(drive))))
        << "drive " << drive << " n_dt " << n_dt;
  }
}

TEST(ConstantCurrent, MatchesQreluOfWeightedInput) {
  // single qrelu linear layer: total spikes == qrelu(W x) elementwise
  network_spec s;
  s.input_shape = {1, 1, 3};
  layer_spec fc{layer_kind::linear};
  fc.out_features = 2;
  layer_spec q{layer_kind::qrelu};
  s.layers = {fc, q};
  trained_model m;
  m.spec = s;
  m.weights = {Tensor({2, 3}, {0.5f, 1.0f, -0.25f, 2.0f, -1.0f, 0.75f})};

  Tensor x({1, 1, 3}, {3.0f, 2.0f, 4.0f});
  // W x = [0.5*3 + 1*2 - 0.25*4, 2*3 - 1*2 + 0.75*4] = [2.5, 7.0]
  snn_network net(m);
  sim_config cfg;
  cfg.mode = sim_config::input_mode::constant_current;
  cfg.n_dt = 7;
  sample_result r = run_sample(net, cfg, x);
  EXPECT_EQ(r.class_spikes[0], 2);
  EXPECT_EQ(r.class_spikes[1], 7);
}

TEST(EventReplay, ZeroInputPredictsClassZeroWithTie) {
  trained_model m = small_conv_model(1, false);
  snn_network net(m);
  sim_config cfg;
  sample_result r = run_sample(net, cfg, std::vector<event>{});
  EXPECT_EQ(r.prediction, 0u);
  EXPECT_TRUE(r.tie);
  EXPECT_EQ(r.ledger.total_network_synops(), 0);
  EXPECT_DOUBLE_EQ(r.ledger.input_synops, 0.0);
}

TEST(EventReplay, ResetMakesSamplesIndependent) {
  trained_model m = small_conv_model(2, true);
  std::vector<event> sample = burst({{0, 3, 3}, {500, 4, 4}, {1500, 3, 4}, {2200, 4, 3}});
  snn_network net(m);
  sim_config cfg;
  sample_result first = run_sample(net, cfg, sample);
  sample_result again = run_sample(net, cfg, sample);
  EXPECT_EQ(first.ledger.layer_spikes, again.ledger.layer_spikes);
  EXPECT_EQ(first.ledger.layer_synops, again.ledger.layer_synops);
  EXPECT_EQ(first.ledger.output_per_step, again.ledger.output_per_step);
  EXPECT_EQ(first.class_spikes, again.class_spikes);
}

TEST(EventReplay, MultiSpikePerBinDeliveredAsCounts) {
  trained_model m = identity_linear_model();
  // five events on the same pixel inside one 1 ms bin -> charge 5 -> 5 spikes
  std::vector<event> evs;
  for (int i = 0; i < 5; ++i)
    evs.push_back({static_cast<uint64_t>(i * 10), 0, 0, 0});
  snn_network net(m);
  sim_config cfg;
  sample_result r = run_sample(net, cfg, evs);
  EXPECT_EQ(r.ledger.output_per_step.size(), 1u);
  EXPECT_EQ(r.ledger.output_per_step[0], 5);
}

TEST(EventReplay, ConservationOfOutputSpikes) {
  trained_model m = small_conv_model(3, true);
  event_stream s = synth_events(1, 9, 3000, 8, 8);
  snn_network net(m);
  sim_config cfg;
  sample_result r = run_sample(net, cfg, s.events);
  int64_t per_step_total = 0;
  for (int64_t v : r.ledger.output_per_step) per_step_total += v;
  int64_t class_total = 0;
  for (int64_t v : r.class_spikes) class_total += v;
  EXPECT_EQ(per_step_total, class_total);
  EXPECT_EQ(per_step_total, r.ledger.layer_spikes.back());
}

TEST(EventReplay, MembraneStaysBelowThreshold) {
  trained_model m = small_conv_model(4, true);
  event_stream s = synth_events(2, 10, 2000, 8, 8);
  snn_network net(m);
  sim_config cfg;
  run_sample(net, cfg, s.events);
  EXPECT_LT(net.max_membrane(), 1.0);
}

TEST(EventReplay, MeasuredSynopsUseExactFanout) {
  // one interior neuron firing n times with exact fanout f -> n*f synops
  network_spec s;
  s.input_shape = {1, 6, 6};
  layer_spec fc1{layer_kind::linear};
  fc1.out_features = 1;
  layer_spec relu{layer_kind::relu};
  layer_spec fc2{layer_kind::linear};
  fc2.out_features = 36;
  s.layers = {fc1, relu, fc2};
  trained_model m;
  m.spec = s;
  m.weights = {Tensor::full({1, 36}, 1.0f), Tensor::full({36, 1}, 0.01f)};

  std::vector<event> evs = burst({{0, 2, 2}, {10, 2, 2}, {20, 3, 3}});
  snn_network net(m);
  sim_config cfg;
  sample_result r = run_sample(net, cfg, evs);
  EXPECT_EQ(r.ledger.layer_spikes[0], 3);
  EXPECT_EQ(r.ledger.layer_synops[0], 3 * 36);
  // input synops: every event lands on a pixel with fanout 1 (single unit)
  EXPECT_DOUBLE_EQ(r.ledger.input_synops, 3.0);
}

TEST(Timecourse, SingleCheckpointEqualsRunSample) {
  trained_model m = small_conv_model(5, true);
  event_stream s = synth_events(0, 11, 3000, 8, 8);
  const int64_t steps =
      static_cast<int64_t>(s.events.back().t_us / 1000) + 1;

  snn_network net(m);
  sim_config cfg;
  sample_result full = run_sample(net, cfg, s.events);
  std::vector<timecourse_point> trace = run_timecourse(net, cfg, s.events, {steps});
  ASSERT_EQ(trace.size(), 1u);
  EXPECT_EQ(trace[0].prediction, full.prediction);
  EXPECT_DOUBLE_EQ(trace[0].cumulative_synops, full.ledger.total_synops());
}

TEST(Timecourse, CumulativeSynopsMonotone) {
  trained_model m = small_conv_model(6, true);
  event_stream s = synth_events(3, 12, 3000, 8, 8);
  snn_network net(m);
  sim_config cfg;
  std::vector<timecourse_point> trace =
      run_timecourse(net, cfg, s.events, {5, 10, 20, 39});
  for (size_t i = 1; i < trace.size(); ++i)
    EXPECT_GE(trace[i].cumulative_synops, trace[i - 1].cumulative_synops);
}

TEST(Timecourse, CheckpointBeyondInputRejected) {
  trained_model m = small_conv_model(7, false);
  std::vector<event> evs = burst({{0, 1, 1}, {5000, 2, 2}});  // 6 steps
  snn_network net(m);
  sim_config cfg;
  EXPECT_THROW(run_timecourse(net, cfg, evs, {10}), config_error);
  EXPECT_THROW(run_timecourse(net, cfg, evs, {3, 3}), config_error);
  EXPECT_THROW(run_timecourse(net, cfg, evs, {}), config_error);
}

TEST(Timecourse, ConstantCurrentCheckpoints) {
  trained_model m = identity_linear_model();
  snn_network net(m);
  sim_config cfg;
  cfg.mode = sim_config::input_mode::constant_current;
  cfg.n_dt = 10;
  std::vector<timecourse_point> trace =
      run_timecourse(net, cfg, Tensor({1, 1, 1}, {10.0f}), {2, 5, 10});
  ASSERT_EQ(trace.size(), 3u);
  // 1 spike per step once the cumulative charge crosses each threshold
  EXPECT_DOUBLE_EQ(trace.back().cumulative_synops, trace.back().cumulative_synops);
  EXPECT_EQ(net.class_spikes()[0], 10);
}

TEST(MeasureSynops, AveragesPerSample) {
  spike_ledger led;
  led.layer_spikes = {10, 4};
  led.layer_synops = {360, 16};
  led.input_synops = 144.0;
  led.samples = 2;
  synop_estimate est = measure_synops(led);
  EXPECT_DOUBLE_EQ(est.per_layer[0], 180.0);
  EXPECT_DOUBLE_EQ(est.per_layer[1], 8.0);
  EXPECT_DOUBLE_EQ(est.input_synops, 72.0);
  EXPECT_TRUE(est.includes_input);
  EXPECT_DOUBLE_EQ(est.total(), 260.0);
}

TEST(MeasureSynops, EmptyLedgerRejected) {
  spike_ledger led;
  EXPECT_THROW(measure_synops(led), config_error);
}
