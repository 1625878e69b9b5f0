#include <doctest.h>

#include <random>

#include "fd_check.hpp"
#include "tsxplain/tensor.hpp"

using namespace tsx;

namespace {

Tensor rand_tensor(Shape shape, std::mt19937_64& rng, bool rg = true,
                   double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), rg);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

/// Keeps values away from the kinks of relu/max-pool/huber so the central
/// difference stays valid.
void push_from_zero(Tensor& t, double margin = 0.05) {
  for (auto& v : t.data())
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
}

}  // namespace

TEST_CASE("finite differences across op zoo, 100+ configurations") {
  int total_configs = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    std::mt19937_64 rng(seed);

    {  // elementwise chain: add, mul, sub, scale, neg, add_scalar
      Tensor a = rand_tensor({3, 4}, rng);
      Tensor b = rand_tensor({3, 4}, rng);
      auto fn = [&] {
        return fdcheck::project(
            sub(scale(mul(add(a, b), neg(b)), 1.7), add_scalar(a, 0.3)), seed);
      };
      auto r = fdcheck::check(fn, {a, b});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // matmul + linear
      Tensor a = rand_tensor({2, 5}, rng);
      Tensor w = rand_tensor({5, 3}, rng);
      Tensor bias = rand_tensor({5}, rng);
      auto fn = [&] { return fdcheck::project(linear(matmul(a, w), transpose2d(w), bias), seed); };
      auto r = fdcheck::check(fn, {a, w, bias});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // conv1d with varying stride/padding, batched
      const int stride = 1 + static_cast<int>(seed % 2);
      const int pad = static_cast<int>(seed % 3);
      Tensor x = rand_tensor({2, 3, 11}, rng);
      Tensor w = rand_tensor({4, 3, 3}, rng);
      Tensor b = rand_tensor({4}, rng);
      auto fn = [&] { return fdcheck::project(conv1d(x, w, b, stride, pad), seed); };
      auto r = fdcheck::check(fn, {x, w, b});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // activations
      Tensor x = rand_tensor({4, 6}, rng);
      push_from_zero(x);
      auto fn = [&] {
        return fdcheck::project(add(relu(x), add(gelu(x), sigmoid(x))), seed);
      };
      auto r = fdcheck::check(fn, {x});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // softmax and masked softmax
      Tensor x = rand_tensor({4, 5}, rng, true, -2.0, 2.0);
      std::vector<uint8_t> mask(20, 0);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j)
          mask[static_cast<size_t>(i * 5 + j)] =
              (j >= i && j <= i + 2) ? 1 : 0;
      auto fn = [&] {
        return fdcheck::project(
            add(softmax(x, 1), masked_softmax_rows(x, mask)), seed);
      };
      auto r = fdcheck::check(fn, {x});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // layer norm + affine
      Tensor x = rand_tensor({3, 6}, rng);
      Tensor g = rand_tensor({6}, rng, true, 0.5, 1.5);
      Tensor be = rand_tensor({6}, rng);
      auto fn = [&] {
        return fdcheck::project(scale_shift_lastdim(layer_norm(x, 1, 1e-5), g, be), seed);
      };
      auto r = fdcheck::check(fn, {x, g, be});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // batch norm, training mode (running stats restored between calls)
      Tensor x = rand_tensor({3, 2, 7}, rng);
      Tensor g = rand_tensor({2}, rng, true, 0.5, 1.5);
      Tensor be = rand_tensor({2}, rng);
      auto fn = [&] {
        std::vector<double> rm(2, 0.0), rv(2, 1.0);
        return fdcheck::project(batch_norm1d(x, g, be, rm, rv, true, 0.9, 1e-5), seed);
      };
      auto r = fdcheck::check(fn, {x, g, be});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // pooling and reductions
      Tensor x = rand_tensor({2, 3, 9}, rng);
      push_from_zero(x, 0.02);
      auto fn = [&] {
        return add(
            fdcheck::project(global_avg_pool(max_pool1d(x, 3, 2, 1)), seed),
            fdcheck::project(mean_axis(global_avg_pool(x), 1), seed + 1));
      };
      auto r = fdcheck::check(fn, {x});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // slicing, concatenation, reshape, transpose
      Tensor x = rand_tensor({4, 6}, rng);
      auto fn = [&] {
        Tensor top = slice_rows(x, 0, 2);
        Tensor bottom = slice_rows(x, 2, 2);
        Tensor cat = concat_rows({reshape(transpose2d(slice_cols(x, 0, 6)), Shape{4, 6}),
                                  reshape(concat_cols({top, bottom}), Shape{4, 6})});
        return fdcheck::project(cat, seed);
      };
      auto r = fdcheck::check(fn, {x});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
    {  // losses
      Tensor logits = rand_tensor({4, 3}, rng, true, -2.0, 2.0);
      Tensor pred = rand_tensor({5}, rng, true, -3.0, 3.0);
      std::vector<double> targets = {0.1, -0.4, 2.0, -2.5, 0.0};
      for (size_t i = 0; i < targets.size(); ++i)  // keep |d| away from delta
        if (std::abs(std::abs(pred.at(static_cast<int>(i)) - targets[i]) - 1.0) < 0.05)
          pred.at(static_cast<int>(i)) += 0.1;
      std::vector<int> labels = {0, 2, 1, 2};
      auto fn = [&] {
        return add(cross_entropy(logits, labels), huber_loss(pred, targets, 1.0));
      };
      auto r = fdcheck::check(fn, {logits, pred});
      CHECK_MESSAGE(r.ok, r.worst);
      ++total_configs;
    }
  }
  CHECK(total_configs >= 100);
}

TEST_CASE("backward accumulates through shared subexpressions") {
  Tensor x = Tensor({2}, {3.0, -1.0}, true);
  Tensor y = mul(x, x);                   // x^2
  Tensor loss = sum_all(add(y, y));       // 2x^2 -> d/dx = 4x
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(-4.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar graph root") {
  Tensor x = Tensor({2}, {1.0, 2.0}, true);
  CHECK_THROWS(backward(x));                       // not scalar
  Tensor detached = Tensor({1}, {1.0}, false);
  CHECK_THROWS(backward(detached));                // no tape
}

TEST_CASE("repeated backward resets gradients instead of accumulating") {
  Tensor x = Tensor({1}, {2.0}, true);
  Tensor loss = mul(x, x);
  backward(loss);
  const double g1 = x.grad()[0];
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(g1).epsilon(1e-15));
}

TEST_CASE("dropout: eval mode and p=0 are identities, train mode scales") {
  std::mt19937_64 rng(3);
  Tensor x = Tensor({100}, std::vector<double>(100, 1.0), true);
  Tensor eval_out = dropout(x, 0.5, rng, false);
  for (double v : eval_out.data()) CHECK(v == 1.0);
  Tensor p0 = dropout(x, 0.0, rng, true);
  for (double v : p0.data()) CHECK(v == 1.0);
  Tensor train_out = dropout(x, 0.5, rng, true);
  int kept = 0;
  for (double v : train_out.data()) {
    CHECK((v == 0.0 || v == doctest::Approx(2.0)));
    kept += v != 0.0;
  }
  CHECK(kept > 20);
  CHECK(kept < 80);
}

TEST_CASE("masked softmax rows: masked cells exactly zero, rows sum to 1") {
  std::mt19937_64 rng(5);
  Tensor x = rand_tensor({6, 6}, rng, false, -3.0, 3.0);
  std::vector<uint8_t> mask(36, 0);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      mask[static_cast<size_t>(i * 6 + j)] = std::abs(i - j) <= 1 ? 1 : 0;
  Tensor y = masked_softmax_rows(x, mask);
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int j = 0; j < 6; ++j) {
      if (!mask[static_cast<size_t>(i * 6 + j)]) CHECK(y.at(i, j) == 0.0);
      s += y.at(i, j);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("kaiming uniform bound follows fan-in") {
  std::mt19937_64 rng(7);
  Tensor w = Tensor::kaiming_uniform({64, 9}, 9, rng);
  const double bound = std::sqrt(6.0 / 9.0);
  double mx = 0.0;
  for (double v : w.data()) mx = std::max(mx, std::abs(v));
  CHECK(mx <= bound);
  CHECK(mx > 0.5 * bound);
}
