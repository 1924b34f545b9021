#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wfd/gradcheck.hpp"
#include "wfd/nn.hpp"

using namespace wfd;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

// Scalar objective: sum of elementwise products with a fixed projection, so
// the output gradient equals the projection.
double project(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * r.data[i];
  return s;
}

}  // namespace

TEST_CASE("conv1d computes the plain correlation sum") {
  Conv1d conv(1, 1, 3, 1, 1, 0);
  conv.weight.value.data = {1.0, 0.0, -1.0};
  conv.bias.value.data = {0.0};
  const Tensor x = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
  const Tensor y = conv.forward(x);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 1});
  CHECK(y.data[0] == -2.0);
}

TEST_CASE("conv1d zero kernel and identity kernel") {
  Rng rng(3);
  Conv1d zero(2, 3, 3, 1, 1, 1);
  const Tensor x = random_tensor({2, 10}, rng);
  const Tensor y = zero.forward(x);
  for (double v : y.data) CHECK(v == 0.0);

  Conv1d ident(1, 1, 1, 1, 1, 0);
  ident.weight.value.data = {1.0};
  const Tensor x1 = random_tensor({1, 7}, rng);
  const Tensor y1 = ident.forward(x1);
  REQUIRE(y1.shape == x1.shape);
  for (std::size_t i = 0; i < x1.size(); ++i) CHECK(y1.data[i] == x1.data[i]);
}

TEST_CASE("conv1d output length formula") {
  Conv1d c(1, 1, 3, 2, 2, 1);
  // floor((L + 2*1 - 2*(3-1) - 1)/2) + 1
  CHECK(c.out_len(16) == (16 + 2 - 4 - 1) / 2 + 1);
  CHECK(c.out_len(5) == 2);
  Conv1d s(1, 1, 7, 2, 1, 3);
  CHECK(s.out_len(64) == 32);
  CHECK_THROWS_AS(c.forward(Tensor({1, 1})), data_error);
  CHECK_THROWS_AS(c.forward(Tensor({2, 16})), data_error);
}

TEST_CASE("conv1d gradients match finite differences across geometries") {
  struct Geometry {
    int ic, oc, k, s, d, p, L;
  };
  const Geometry geos[] = {
      {1, 1, 3, 1, 1, 1, 12}, {2, 3, 3, 1, 1, 1, 16}, {3, 2, 5, 2, 1, 2, 17},
      {2, 2, 3, 1, 4, 4, 20}, {4, 1, 7, 2, 1, 3, 16}, {2, 4, 1, 1, 1, 0, 9},
  };
  Rng rng(17);
  for (const Geometry& g : geos) {
    for (int rep = 0; rep < 20; ++rep) {
      Conv1d conv(g.ic, g.oc, g.k, g.s, g.d, g.p);
      conv.init(rng);
      for (double& b : conv.bias.value.data) b = rng.uniform(-0.5, 0.5);
      Tensor x = random_tensor(
          {static_cast<std::size_t>(g.ic), static_cast<std::size_t>(g.L)}, rng);
      const Tensor r = random_tensor(conv.forward(x).shape, rng);

      conv.weight.grad.fill(0.0);
      conv.bias.grad.fill(0.0);
      Tensor gx(x.shape);
      conv.backward(x, r, &gx);

      auto eval = [&]() { return project(conv.forward(x), r); };
      CHECK(grad_check(eval, conv.weight.value, conv.weight.grad) <= 1e-4);
      CHECK(grad_check(eval, conv.bias.value, conv.bias.grad) <= 1e-4);
      CHECK(grad_check(eval, x, gx) <= 1e-4);
    }
  }
}

TEST_CASE("conv1d batched input matches per-sample runs and gradients") {
  Rng rng(23);
  Conv1d conv(4, 3, 3, 1, 1, 1);
  conv.init(rng);
  Tensor x = random_tensor({3, 4, 16}, rng);
  const Tensor y = conv.forward(x);
  REQUIRE(y.shape == std::vector<std::size_t>{3, 3, 16});
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor xb({4, 16});
    for (std::size_t i = 0; i < xb.size(); ++i) xb.data[i] = x.data[b * xb.size() + i];
    const Tensor yb = conv.forward(xb);
    for (std::size_t i = 0; i < yb.size(); ++i)
      CHECK(y.data[b * yb.size() + i] == yb.data[i]);
  }

  const Tensor r = random_tensor(y.shape, rng);
  conv.weight.grad.fill(0.0);
  conv.bias.grad.fill(0.0);
  Tensor gx(x.shape);
  conv.backward(x, r, &gx);
  auto eval = [&]() { return project(conv.forward(x), r); };
  CHECK(grad_check(eval, conv.weight.value, conv.weight.grad) <= 1e-4);
  CHECK(grad_check(eval, x, gx) <= 1e-4);
}

TEST_CASE("sigmoid derivative at zero") {
  CHECK(sigmoid(0.0) == 0.5);
  const double eps = 1e-6;
  const double numeric = (sigmoid(eps) - sigmoid(-eps)) / (2.0 * eps);
  CHECK(std::abs(numeric - 0.25) <= 1e-8);
}

TEST_CASE("linear layer gradients are exact up to rounding") {
  Rng rng(29);
  for (int rep = 0; rep < 20; ++rep) {
    Linear lin(6, 4);
    lin.init(rng);
    Tensor x = random_tensor({6}, rng);
    const Tensor r = random_tensor({4}, rng);
    lin.weight.grad.fill(0.0);
    lin.bias.grad.fill(0.0);
    Tensor gx({6});
    lin.backward(x, r, &gx);
    auto eval = [&]() { return project(lin.forward(x), r); };
    CHECK(grad_check(eval, lin.weight.value, lin.weight.grad) <= 1e-6);
    CHECK(grad_check(eval, lin.bias.value, lin.bias.grad) <= 1e-6);
    CHECK(grad_check(eval, x, gx) <= 1e-6);
  }
}

TEST_CASE("channel scale gradients") {
  Rng rng(31);
  ChannelScale cs(3);
  for (double& g : cs.gamma.value.data) g = rng.uniform(0.5, 1.5);
  Tensor x = random_tensor({3, 8}, rng);
  const Tensor r = random_tensor({3, 8}, rng);
  cs.gamma.grad.fill(0.0);
  Tensor gx(x.shape);
  cs.backward(x, r, gx);
  auto eval = [&]() { return project(cs.forward(x), r); };
  CHECK(grad_check(eval, cs.gamma.value, cs.gamma.grad) <= 1e-6);
  CHECK(grad_check(eval, x, gx) <= 1e-6);
}

TEST_CASE("dilated block with zeroed weights is the identity") {
  DilatedBlock block(8, 4);
  Rng rng(37);
  const Tensor x = random_tensor({8, 20}, rng);
  const Tensor y = block.forward(x, nullptr);
  REQUIRE(y.shape == x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("dilated block preserves shape for any rate") {
  Rng rng(41);
  for (int rate : {1, 2, 4, 6, 8}) {
    DilatedBlock block(8, rate);
    block.init(rng);
    const Tensor x = random_tensor({8, 30}, rng);
    CHECK(block.forward(x, nullptr).shape == x.shape);
  }
}

TEST_CASE("dilated stack receptive length telescopes to 41") {
  // Rates [2,4,6,8] with kernel 3: 1 + 2*(2+4+6+8) = 41 input positions.
  const int L = 101;
  const int center = 50;
  std::vector<DilatedBlock> blocks;
  Rng rng(43);
  for (int rate : {2, 4, 6, 8}) {
    blocks.emplace_back(4, rate);
    blocks.back().init(rng);
    // Positive weights and biases keep every relu active, so the influence
    // region is exactly the geometric receptive field.
    for (Conv1d* c : {&blocks.back().reduce, &blocks.back().dilated, &blocks.back().recover}) {
      for (double& w : c->weight.value.data) w = 0.05 + std::abs(w);
      c->bias.value.fill(0.1);
    }
  }
  Tensor x({4, static_cast<std::size_t>(L)});
  x.fill(0.2);

  std::vector<DilatedBlock::Cache> caches(blocks.size());
  Tensor h = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) h = blocks[i].forward(h, &caches[i]);

  Tensor gy(h.shape);
  gy.at(0, center) = 1.0;
  Tensor g = gy;
  for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(caches[i], g);

  int lo = L, hi = -1;
  for (int i = 0; i < L; ++i) {
    bool nonzero = false;
    for (int c = 0; c < 4; ++c)
      if (g.at(c, i) != 0.0) nonzero = true;
    if (nonzero) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
    }
  }
  CHECK(hi - lo + 1 == 41);
  CHECK(lo == center - 20);
  CHECK(hi == center + 20);
}

TEST_CASE("dilated block gradients match finite differences") {
  Rng rng(47);
  for (int rep = 0; rep < 10; ++rep) {
    DilatedBlock block(6, 3);
    block.init(rng);
    // Nonzero biases keep relu kinks away from the evaluation point.
    for (Conv1d* c : {&block.reduce, &block.dilated, &block.recover})
      for (double& b : c->bias.value.data) b = rng.uniform(-0.5, 0.5);
    Tensor x = random_tensor({6, 14}, rng);
    const Tensor r = random_tensor({6, 14}, rng);
    ParamRefs ps = block.params("d");
    zero_grads(ps);
    DilatedBlock::Cache cache;
    block.forward(x, &cache);
    const Tensor gx = block.backward(cache, r);
    auto eval = [&]() { return project(block.forward(x, nullptr), r); };
    for (auto& [name, p] : ps) CHECK(grad_check(eval, p->value, p->grad) <= 1e-4);
    CHECK(grad_check(eval, x, gx) <= 1e-4);
  }
}

TEST_CASE("basic block gradients match finite differences") {
  Rng rng(53);
  const std::tuple<int, int, int> shapes[] = {{4, 4, 1}, {4, 6, 2}, {3, 5, 1}};
  for (const auto& [in_ch, out_ch, stride] : shapes) {
    BasicBlock block(in_ch, out_ch, stride);
    block.init(rng);
    for (Conv1d* c : {&block.conv1, &block.conv2})
      for (double& b : c->bias.value.data) b = rng.uniform(-0.5, 0.5);
    if (block.projected)
      for (double& b : block.proj.bias.value.data) b = rng.uniform(-0.5, 0.5);
    Tensor x = random_tensor({static_cast<std::size_t>(in_ch), 12}, rng);
    BasicBlock::Cache cache;
    const Tensor y = block.forward(x, &cache);
    const Tensor r = random_tensor(y.shape, rng);
    ParamRefs ps = block.params("b");
    zero_grads(ps);
    const Tensor gx = block.backward(cache, r);
    auto eval = [&]() { return project(block.forward(x, nullptr), r); };
    for (auto& [name, p] : ps) CHECK(grad_check(eval, p->value, p->grad) <= 1e-4);
    CHECK(grad_check(eval, x, gx) <= 1e-4);
  }
}

TEST_CASE("sgd_step applies the plain update") {
  Param p({2});
  p.value.data = {1.0, 2.0};
  p.grad.data = {0.5, 0.0};
  sgd_step({{"p", &p}}, 0.12);
  CHECK(p.value.data[0] == Catch::Approx(0.94).margin(1e-15));
  CHECK(p.value.data[1] == 2.0);

  sgd_step({{"p", &p}}, 0.0);
  CHECK(p.value.data[0] == Catch::Approx(0.94).margin(1e-15));

  Param bad({2});
  bad.grad = Tensor({3});
  CHECK_THROWS_AS(sgd_step({{"bad", &bad}}, 0.1), config_error);
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(59);
  BasicBlock block(4, 4, 1);
  block.init(rng);
  const Tensor x = random_tensor({4, 33}, rng);
  const Tensor y1 = block.forward(x, nullptr);
  const Tensor y2 = block.forward(x, nullptr);
  REQUIRE(y1.size() == y2.size());
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y1.data[i] == y2.data[i]);
  CHECK(y1.all_finite());
}
