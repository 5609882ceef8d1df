#include <gtest/gtest.h>

#include "synoptic/kernels.hpp"
#include "synoptic/rng.hpp"

using namespace synoptic;

namespace {

Tensor iota(std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i);
  return t;
}

// plain quadruple-loop reference convolution, independent of the production
// kernel's loop structure
Tensor conv_reference(const Tensor& in, const Tensor& w, pair2 stride, pair2 pad) {
  const int64_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int64_t K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t OH = (H + 2 * pad.h - kh) / stride.h + 1;
  const int64_t OW = (W + 2 * pad.w - kw) / stride.w + 1;
  Tensor out({N, K, OH, OW});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t k = 0; k < K; ++k)
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          double acc = 0;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t ki = 0; ki < kh; ++ki)
              for (int64_t kj = 0; kj < kw; ++kj) {
                const int64_t ih = oh * stride.h - pad.h + ki;
                const int64_t iw = ow * stride.w - pad.w + kj;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += static_cast<double>(in.at(n, c, ih, iw)) * w.at(k, c, ki, kj);
              }
          out.at(n, k, oh, ow) = static_cast<float>(acc);
        }
  return out;
}

}  // namespace

TEST(Conv2d, NineOnes) {
  Tensor in = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor out = conv2d_forward(in, w, {1, 1}, {0, 0});
  ASSERT_EQ(out.shape, (std::vector<int64_t>{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(out[0], 9.0f);
}

TEST(Conv2d, ZeroWeightGivesZeroOutput) {
  Tensor in = iota({2, 3, 5, 5});
  Tensor w({4, 3, 3, 3});
  Tensor out = conv2d_forward(in, w, {1, 1}, {1, 1});
  for (float v : out.data) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2d, StridedDiagonalTaps) {
  // 4x4 input 0..15, 2x2 weight [[1,0],[0,1]], stride 2: hand-computed output
  Tensor in = iota({1, 1, 4, 4});
  Tensor w({1, 1, 2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor out = conv2d_forward(in, w, {2, 2}, {0, 0});
  ASSERT_EQ(out.shape, (std::vector<int64_t>{1, 1, 2, 2}));
  EXPECT_FLOAT_EQ(out[0], 5.0f);
  EXPECT_FLOAT_EQ(out[1], 9.0f);
  EXPECT_FLOAT_EQ(out[2], 21.0f);
  EXPECT_FLOAT_EQ(out[3], 25.0f);
}

TEST(Conv2d, MatchesReferenceOnRandomShapes) {
  rng_stream rng(42);
  for (int trial = 0; trial < 6; ++trial) {
    const int64_t C = 1 + static_cast<int64_t>(rng.uniform_index(3));
    const int64_t K = 1 + static_cast<int64_t>(rng.uniform_index(4));
    const int64_t H = 5 + static_cast<int64_t>(rng.uniform_index(4));
    const int64_t k = 1 + static_cast<int64_t>(rng.uniform_index(3));
    const pair2 stride{1 + static_cast<int64_t>(rng.uniform_index(2)), 1};
    const pair2 pad{static_cast<int64_t>(rng.uniform_index(2)),
                    static_cast<int64_t>(rng.uniform_index(2))};
    Tensor in({2, C, H, H});
    Tensor w({K, C, k, k});
    for (float& v : in.data) v = static_cast<float>(rng.uniform(-1, 1));
    for (float& v : w.data) v = static_cast<float>(rng.uniform(-1, 1));
    Tensor got = conv2d_forward(in, w, stride, pad);
    Tensor want = conv_reference(in, w, stride, pad);
    ASSERT_EQ(got.shape, want.shape);
    for (int64_t i = 0; i < got.numel(); ++i)
      EXPECT_NEAR(got[i], want[i], 1e-5f) << "trial " << trial << " element " << i;
  }
}

TEST(Conv2d, ChannelMismatchIsStructuredError) {
  Tensor in({1, 2, 4, 4});
  Tensor w({1, 3, 3, 3});
  EXPECT_THROW(conv2d_forward(in, w, {1, 1}, {0, 0}), shape_error);
}

TEST(Conv2d, KernelLargerThanPaddedInput) {
  Tensor in({1, 1, 2, 2});
  Tensor w({1, 1, 5, 5});
  EXPECT_THROW(conv2d_forward(in, w, {1, 1}, {0, 0}), shape_error);
}

TEST(AvgPool, WindowMean) {
  Tensor in({1, 1, 2, 2}, {1.0f, 3.0f, 5.0f, 7.0f});
  Tensor out = avgpool2d_forward(in, {2, 2}, {2, 2});
  ASSERT_EQ(out.numel(), 1);
  EXPECT_FLOAT_EQ(out[0], 4.0f);
}

TEST(AvgPool, ConstantInputIsFixedPoint) {
  Tensor in = Tensor::full({2, 3, 6, 6}, 2.5f);
  Tensor out = avgpool2d_forward(in, {2, 2}, {2, 2});
  for (float v : out.data) EXPECT_FLOAT_EQ(v, 2.5f);
}

TEST(AvgPool, IotaMeans) {
  Tensor in = iota({1, 1, 4, 4});
  Tensor out = avgpool2d_forward(in, {2, 2}, {2, 2});
  EXPECT_FLOAT_EQ(out[0], 2.5f);
  EXPECT_FLOAT_EQ(out[1], 4.5f);
  EXPECT_FLOAT_EQ(out[2], 10.5f);
  EXPECT_FLOAT_EQ(out[3], 12.5f);
}

TEST(AvgPool, WindowExceedsInput) {
  Tensor in({1, 1, 2, 2});
  EXPECT_THROW(avgpool2d_forward(in, {3, 3}, {1, 1}), shape_error);
}

TEST(Linear, IdentityWeight) {
  Tensor in({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor w({3, 3});
  for (int64_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0f;
  Tensor out = linear_forward(in, w);
  EXPECT_EQ(out.data, in.data);
}

TEST(Linear, DotProducts) {
  Tensor in({1, 2}, {1.0f, 2.0f});
  Tensor w({2, 2}, {3.0f, 4.0f, 5.0f, 6.0f});
  Tensor out = linear_forward(in, w);
  EXPECT_FLOAT_EQ(out[0], 11.0f);
  EXPECT_FLOAT_EQ(out[1], 17.0f);
}

TEST(Linear, ZeroInput) {
  Tensor in({3, 4});
  Tensor w = Tensor::full({2, 4}, 0.7f);
  Tensor out = linear_forward(in, w);
  for (float v : out.data) EXPECT_EQ(v, 0.0f);
}

TEST(Linear, DimensionMismatch) {
  Tensor in({1, 3});
  Tensor w({2, 4});
  EXPECT_THROW(linear_forward(in, w), shape_error);
}
