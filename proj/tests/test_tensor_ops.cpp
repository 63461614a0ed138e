#include <doctest.h>

#include <cmath>
#include <functional>

#include "sei/graph.hpp"

using namespace sei;

namespace {

Tensor run_forward(const std::function<Graph::ValueId(Graph&)>& build) {
  Graph g;
  return g.value(build(g));
}

}  // namespace

TEST_CASE("conv1d identity and box-sum kernels") {
  Graph g;
  auto x = g.leaf(Tensor::from({1, 1, 3}, {1, 2, 3}));
  auto k = g.leaf(Tensor::from({1, 1, 1}, {1}));
  auto b = g.leaf(Tensor({1}));
  auto y = ops::conv1d(g, x, k, b);
  CHECK(g.value(y).shape == std::vector<int>{1, 1, 3});
  CHECK(g.value(y).data == std::vector<double>{1, 2, 3});

  auto x2 = g.leaf(Tensor::from({1, 1, 4}, {1, 1, 1, 1}));
  auto k2 = g.leaf(Tensor::from({1, 1, 2}, {1, 1}));
  auto y2 = ops::conv1d(g, x2, k2, b, 1);
  CHECK(g.value(y2).data == std::vector<double>{2, 2, 2});
}

TEST_CASE("conv1d output length and stride") {
  Graph g;
  auto x = g.leaf(Tensor({2, 3, 16}, 1.0));
  auto k = g.leaf(Tensor({4, 3, 5}, 0.5));
  auto b = g.leaf(Tensor({4}));
  CHECK(g.value(ops::conv1d(g, x, k, b, 1)).shape == std::vector<int>{2, 4, 12});
  CHECK(g.value(ops::conv1d(g, x, k, b, 2)).shape == std::vector<int>{2, 4, 6});
}

TEST_CASE("conv1d shape mismatch names both shapes") {
  Graph g;
  auto x = g.leaf(Tensor({1, 2, 8}));
  auto k = g.leaf(Tensor({4, 3, 5}));
  auto b = g.leaf(Tensor({4}));
  try {
    ops::conv1d(g, x, k, b);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("{1,2,8}") != std::string::npos);
    CHECK(msg.find("{4,3,5}") != std::string::npos);
  }
}

TEST_CASE("dense identity weights and zero weights") {
  Graph g;
  auto x = g.leaf(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto eye = g.leaf(Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  auto zero_b = g.leaf(Tensor({3}));
  CHECK(g.value(ops::dense(g, x, eye, zero_b)).data == std::vector<double>{1, 2, 3, 4, 5, 6});

  auto zeros = g.leaf(Tensor({2, 3}));
  auto bias = g.leaf(Tensor::from({2}, {7, -3}));
  CHECK(g.value(ops::dense(g, x, zeros, bias)).data == std::vector<double>{7, -3, 7, -3});
}

TEST_CASE("dense dimension mismatch") {
  Graph g;
  auto x = g.leaf(Tensor({2, 3}));
  auto w = g.leaf(Tensor({4, 5}));
  auto b = g.leaf(Tensor({4}));
  CHECK_THROWS_AS(ops::dense(g, x, w, b), config_error);
}

TEST_CASE("relu clamps negatives") {
  Graph g;
  auto y = ops::relu(g, g.leaf(Tensor::from({1, 3}, {-1, 0, 2})));
  CHECK(g.value(y).data == std::vector<double>{0, 0, 2});
}

TEST_CASE("softmax symmetry, normalization and range") {
  Graph g;
  auto y = ops::softmax_rows(g, g.leaf(Tensor::from({1, 2}, {0, 0})));
  CHECK(g.value(y).data[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.value(y).data[1] == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x({3, 5});
    for (double& v : x.data) v = rng.uniform(-30, 30);
    Graph gg;
    const Tensor& p = gg.value(ops::softmax_rows(gg, gg.leaf(x)));
    for (int r = 0; r < 3; ++r) {
      double sum = 0;
      for (int c = 0; c < 5; ++c) {
        double v = p.data[static_cast<std::size_t>(r) * 5 + c];
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("maxpool1d picks window maxima") {
  Graph g;
  auto y = ops::maxpool1d(g, g.leaf(Tensor::from({1, 1, 6}, {1, 3, 2, 2, 5, 4})), 2, 2);
  CHECK(g.value(y).data == std::vector<double>{3, 2, 5});
}

TEST_CASE("dropout keep=1 and eval mode are the identity") {
  Rng rng(3);
  Graph g;
  auto x = g.leaf(Tensor::from({1, 4}, {1, -2, 3, -4}));
  CHECK(ops::dropout(g, x, 1.0, rng, true) == x);
  CHECK(ops::dropout(g, x, 0.5, rng, false) == x);
  CHECK_THROWS_AS(ops::dropout(g, x, 0.0, rng, true), config_error);
  CHECK_THROWS_AS(ops::dropout(g, x, 1.5, rng, true), config_error);
}

TEST_CASE("dropout train mode zeroes at rate 1-keep and rescales survivors") {
  Rng rng(11);
  const double keep = 0.7;
  int zeros = 0, total = 0;
  Graph g;
  auto x = g.leaf(Tensor({50, 40}, 1.0));
  const Tensor& y = g.value(ops::dropout(g, x, keep, rng, true));
  for (double v : y.data) {
    ++total;
    if (v == 0.0)
      ++zeros;
    else
      CHECK(v == doctest::Approx(1.0 / keep).epsilon(1e-12));
  }
  double drop_rate = static_cast<double>(zeros) / total;
  CHECK(drop_rate == doctest::Approx(1.0 - keep).epsilon(0.15));
}

TEST_CASE("batchnorm train-mode statistics") {
  Rng rng(5);
  Tensor x({4, 3, 10});
  for (double& v : x.data) v = rng.uniform(-2, 5);
  Tensor mean({3}), var({3}, 1.0);
  Graph g;
  ops::BatchNormContext ctx;
  ctx.running_mean = &mean;
  ctx.running_var = &var;
  auto gamma = g.leaf(Tensor({3}, 1.0));
  auto beta = g.leaf(Tensor({3}));
  const Tensor& y = g.value(ops::batchnorm1d(g, g.leaf(x), gamma, beta, ctx));
  for (int c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (int n = 0; n < 4; ++n)
      for (int t = 0; t < 10; ++t) {
        double v = y.data[(static_cast<std::size_t>(n) * 3 + c) * 10 + t];
        sum += v;
        sq += v * v;
      }
    double mu = sum / 40;
    double variance = sq / 40 - mu * mu;
    CHECK(std::abs(mu) < 1e-6);
    CHECK(std::abs(variance - 1.0) < 1e-4);
  }
  // running stats moved toward the batch stats
  CHECK(mean.data[0] != 0.0);
  CHECK(var.data[0] != 1.0);
}

TEST_CASE("batchnorm eval mode uses running stats and is deterministic") {
  Tensor x = Tensor::from({1, 1, 4}, {1, 2, 3, 4});
  Tensor mean = Tensor::from({1}, {2.0});
  Tensor var = Tensor::from({1}, {4.0});
  ops::BatchNormContext ctx;
  ctx.running_mean = &mean;
  ctx.running_var = &var;
  ctx.use_batch_stats = false;
  Graph g;
  const Tensor& y = g.value(ops::batchnorm1d(g, g.leaf(x), g.leaf(Tensor({1}, 1.0)), g.leaf(Tensor({1})), ctx));
  for (int i = 0; i < 4; ++i) CHECK(y.data[i] == doctest::Approx((x.data[i] - 2.0) / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
  CHECK(mean.data[0] == 2.0);  // eval never updates
}

TEST_CASE("forward passes are bit-deterministic") {
  auto build = [](Graph& g) {
    Rng rng(42);
    Tensor x({2, 2, 12});
    for (double& v : x.data) v = rng.gaussian();
    Tensor k({3, 2, 5});
    for (double& v : k.data) v = rng.gaussian();
    auto y = ops::conv1d(g, g.leaf(x), g.leaf(k), g.leaf(Tensor({3}, 0.1)));
    return ops::softmax_rows(g, ops::global_avg_pool(g, ops::relu(g, y)));
  };
  CHECK(run_forward(build).data == run_forward(build).data);
}

TEST_CASE("finite forward outputs on finite inputs") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g;
    Tensor x({2, 2, 16});
    for (double& v : x.data) v = rng.uniform(-50, 50);
    Tensor k({4, 2, 7});
    for (double& v : k.data) v = rng.uniform(-5, 5);
    Tensor mean({4}), var({4}, 1.0);
    ops::BatchNormContext ctx;
    ctx.running_mean = &mean;
    ctx.running_var = &var;
    auto y = ops::conv1d(g, g.leaf(x), g.leaf(k), g.leaf(Tensor({4}, 0.5)));
    y = ops::batchnorm1d(g, y, g.leaf(Tensor({4}, 1.0)), g.leaf(Tensor({4})), ctx);
    y = ops::maxpool1d(g, ops::relu(g, y));
    y = ops::softmax_rows(g, ops::global_avg_pool(g, y));
    CHECK(g.value(y).all_finite());
  }
}

TEST_CASE("global_avg_pool and rowwise helpers") {
  Graph g;
  auto x = g.leaf(Tensor::from({1, 2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK(g.value(ops::global_avg_pool(g, x)).data == std::vector<double>{2, 5});

  auto a = g.leaf(Tensor::from({2, 2}, {1, 2, 3, 4}));
  auto b = g.leaf(Tensor::from({2, 2}, {5, 6, 7, 8}));
  CHECK(g.value(ops::rowwise_dot(g, a, b)).data == std::vector<double>{17, 53});
  CHECK(g.value(ops::concat_cols(g, a, b)).data == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});

  auto n = ops::l2_normalize_rows(g, g.leaf(Tensor::from({1, 2}, {3, 4})));
  CHECK(g.value(n).data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(g.value(n).data[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(ops::l2_normalize_rows(g, g.leaf(Tensor({1, 2}))), numeric_error);
}
