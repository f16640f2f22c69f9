#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lifegen/adam.hpp"
#include "lifegen/ops.hpp"
#include "lifegen/rng.hpp"
#include "lifegen/tensor.hpp"

using namespace lifegen;

namespace {

// Central finite-difference gradient check for an op `f` mapping inputs to an
// output tensor of any shape. The probe scalar is a fixed random weighted sum
// of the output, accumulated in double outside the graph so the oracle is not
// limited by a float32 final rounding; the actual representable step sizes are
// measured in double as well.
void check_gradients(const char* opname, std::vector<Tensor> inputs,
                     const std::function<Tensor(const std::vector<Tensor>&)>& f,
                     double h = 1e-2, double tol = 1e-4,
                     bool richardson = false) {
  for (auto& in : inputs) in.set_requires_grad(true);
  std::vector<float> w;
  {
    std::mt19937 wg(99);
    std::uniform_real_distribution<float> d(0.5f, 1.5f);
    Tape tape;
    Tensor out = f(inputs);
    Tensor wt = Tensor::zeros(out.shape());
    for (auto& v : wt.data()) v = d(wg);
    w = wt.data();
    tape.backward(reduce_sum(mul(out, wt)));
  }
  auto probe = [&]() {
    NoGradGuard ng;
    Tensor out = f(inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
      acc += static_cast<double>(w[i]) * static_cast<double>(out.data()[i]);
    return acc;
  };
  for (auto& in : inputs) {
    REQUIRE(in.has_grad());
    for (std::size_t i = 0; i < in.data().size(); ++i) {
      const float keep = in.data()[i];
      auto central = [&](double hh) {
        const float xp = keep + static_cast<float>(hh);
        const float xm = keep - static_cast<float>(hh);
        in.data()[i] = xp;
        const double up = probe();
        in.data()[i] = xm;
        const double dn = probe();
        in.data()[i] = keep;
        return (up - dn) /
               (static_cast<double>(xp) - static_cast<double>(xm));
      };
      double fd = central(h);
      if (richardson) fd = (4.0 * central(h / 2) - fd) / 3.0;
      const double an = in.grad()[i];
      const double denom = std::max({1.0, std::fabs(fd), std::fabs(an)});
      INFO(opname);
      CHECK(std::fabs(an - fd) / denom < tol);
    }
    in.zero_grad();
  }
}

Tensor random_tensor(Shape s, std::mt19937& g, float lo = -2.0f,
                     float hi = 2.0f, float avoid_zero_band = 0.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor t = Tensor::zeros(std::move(s));
  for (auto& v : t.data()) {
    do {
      v = d(g);
    } while (std::fabs(v) < avoid_zero_band);
  }
  return t;
}

}  // namespace

TEST_CASE("matmul identity") {
  Tensor i2 = Tensor::of({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::of({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(i2, m);
  CHECK(r.data() == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("matmul against naive triple-loop oracle") {
  Tensor a = Tensor::of({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::of({2, 1}, {5, 6});
  Tensor r = matmul(a, b);
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r.data()[0] == doctest::Approx(17));
  CHECK(r.data()[1] == doctest::Approx(39));

  std::mt19937 g(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + g() % 5, k = 1 + g() % 5, n = 1 + g() % 5;
    Tensor x = random_tensor({m, k}, g);
    Tensor y = random_tensor({k, n}, g);
    Tensor z = matmul(x, y);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int kk = 0; kk < k; ++kk)
          acc += static_cast<double>(x.data()[i * k + kk]) *
                 static_cast<double>(y.data()[kk * n + j]);
        CHECK(z.data()[i * n + j] == doctest::Approx(acc).epsilon(1e-4));
      }
  }
}

TEST_CASE("matmul shape mismatch") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), ShapeMismatch);
}

TEST_CASE("elementwise analytic values") {
  CHECK(sigmoid(Tensor::scalar(0)).item() == doctest::Approx(0.5));
  CHECK(relu(Tensor::scalar(-3)).item() == 0.0f);
  CHECK(relu(Tensor::scalar(3)).item() == 3.0f);
  CHECK(leaky_relu(Tensor::scalar(-1)).item() == doctest::Approx(-0.2));
  CHECK(tanh_op(Tensor::scalar(0)).item() == 0.0f);
  CHECK(exp_op(Tensor::scalar(0)).item() == 1.0f);
  CHECK(log_op(Tensor::scalar(1)).item() == 0.0f);
  CHECK(scale(Tensor::scalar(3), -2).item() == -6.0f);
  CHECK(clamp(Tensor::scalar(12), -10, 10).item() == 10.0f);
}

TEST_CASE("elementwise shape mismatch and log domain") {
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})),
                  ShapeMismatch);
  CHECK_THROWS_AS(log_op(Tensor::scalar(-1)), DomainError);
  CHECK_THROWS_AS(log_op(Tensor::scalar(0)), DomainError);
}

TEST_CASE("scalar and row broadcast") {
  Tensor m = Tensor::of({2, 2}, {1, 2, 3, 4});
  CHECK(add(m, Tensor::scalar(1)).data() == std::vector<float>{2, 3, 4, 5});
  Tensor bias = Tensor::of({2}, {10, 20});
  CHECK(add(m, bias).data() == std::vector<float>{11, 22, 13, 24});
}

TEST_CASE("d/dx sigmoid at 0.7 matches central finite difference") {
  Tensor x = Tensor::scalar(0.7f).set_requires_grad(true);
  Tape tape;
  Tensor y = sigmoid(x);
  tape.backward(y);
  const double h = 1e-3;
  const double fd =
      (1.0 / (1.0 + std::exp(-(0.7 + h))) - 1.0 / (1.0 + std::exp(-(0.7 - h)))) /
      (2.0 * h);
  CHECK(std::fabs(x.grad()[0] - fd) / std::fabs(fd) < 1e-4);
}

TEST_CASE("reduce values") {
  CHECK(reduce_mean(Tensor::of({3}, {1, 2, 3})).item() == doctest::Approx(2));
  Tensor m = Tensor::of({2, 2}, {1, 2, 3, 4});
  CHECK(reduce_sum(m, 0).data() == std::vector<float>{4, 6});
  CHECK(reduce_sum(m, 1).data() == std::vector<float>{3, 7});
  CHECK_THROWS_AS(reduce_sum(m, 2), AxisOutOfRange);
}

TEST_CASE("gradient of mean is 1/n") {
  Tensor x = Tensor::of({4}, {1, 2, 3, 4}).set_requires_grad(true);
  Tape tape;
  tape.backward(reduce_mean(x));
  for (float g : x.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("concat values, shapes and backward routing") {
  Tensor r = concat(Tensor::of({2}, {1, 2}), Tensor::of({1}, {3}), 0);
  CHECK(r.data() == std::vector<float>{1, 2, 3});

  Tensor a = Tensor::zeros({4, 8});
  Tensor b = Tensor::zeros({4, 2});
  CHECK(concat(a, b, 1).shape() == Shape{4, 10});
  CHECK_THROWS_AS(concat(Tensor::zeros({4, 8}), Tensor::zeros({3, 2}), 1),
                  ShapeMismatch);

  std::mt19937 g(3);
  Tensor x = random_tensor({2, 3}, g).set_requires_grad(true);
  Tensor y = random_tensor({2, 2}, g).set_requires_grad(true);
  Tensor w = random_tensor({2, 5}, g, 0.5f, 1.5f);
  Tape tape;
  tape.backward(reduce_sum(mul(concat(x, y, 1), w)));
  // gradient of each input slice is exactly the matching weight slice
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j)
      CHECK(x.grad()[i * 3 + j] == w.data()[i * 5 + j]);
    for (int j = 0; j < 2; ++j)
      CHECK(y.grad()[i * 2 + j] == w.data()[i * 5 + 3 + j]);
  }
}

TEST_CASE("bce analytic values") {
  Tensor half = Tensor::of({1, 1}, {0.5f});
  CHECK(bce(half, half).item() == doctest::Approx(std::log(2.0)));

  Tensor p = Tensor::of({1, 2}, {0.0f, 1.0f});
  Tensor t = Tensor::of({1, 2}, {0.0f, 1.0f});
  CHECK(bce(p, t).item() < 1e-5);  // up to the 1e-7 clamp

  CHECK_THROWS_AS(bce(Tensor::zeros({1, 2}), Tensor::zeros({2, 1})),
                  ShapeMismatch);
}

TEST_CASE("bce gradient is zero at prediction == target") {
  Tensor p = Tensor::of({1, 3}, {0.2f, 0.5f, 0.9f}).set_requires_grad(true);
  Tensor t = Tensor::of({1, 3}, {0.2f, 0.5f, 0.9f});
  Tape tape;
  tape.backward(bce(p, t));
  for (float g : p.grad()) CHECK(std::fabs(g) < 1e-6);
}

TEST_CASE("backward of sum of squares") {
  Tensor x = Tensor::of({2}, {1, 2}).set_requires_grad(true);
  Tape tape;
  tape.backward(reduce_sum(mul(x, x)));
  CHECK(x.grad() == std::vector<float>{2, 4});
}

TEST_CASE("backward contract errors") {
  Tensor x = Tensor::of({2}, {1, 2}).set_requires_grad(true);
  Tape tape;
  Tensor v = mul(x, x);
  CHECK_THROWS_AS(tape.backward(v), NotScalar);
  Tensor loss = reduce_sum(v);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), StaleTape);
  CHECK_THROWS_AS(backward(Tensor::scalar(1)), StaleTape);
}

TEST_CASE("gradient accumulation across losses") {
  std::mt19937 g(11);
  Tensor a = random_tensor({3, 3}, g);
  Tensor x1 = Tensor::of({3, 3}, a.data()).set_requires_grad(true);
  Tensor x2 = Tensor::of({3, 3}, a.data()).set_requires_grad(true);

  auto l1 = [](const Tensor& t) { return reduce_sum(mul(t, t)); };
  auto l2 = [](const Tensor& t) { return reduce_mean(sigmoid(t)); };

  {  // combined loss, one backward
    Tape tape;
    tape.backward(add(l1(x1), l2(x1)));
  }
  {  // two separate passes, grads accumulate
    Tape tape;
    tape.backward(l1(x2));
  }
  {
    Tape tape;
    tape.backward(l2(x2));
  }
  for (std::size_t i = 0; i < x1.grad().size(); ++i)
    CHECK(x1.grad()[i] == x2.grad()[i]);
}

TEST_CASE("non-finite guard") {
  Tensor big = Tensor::scalar(200.0f);
  CHECK_THROWS_AS(exp_op(big), NonFinite);
}

TEST_CASE("finite-difference property suite over all ops") {
  std::mt19937 g(42);
  const int trials = 100;

  for (int i = 0; i < trials; ++i) {
    Tensor a = random_tensor({2, 3}, g);
    Tensor b = random_tensor({2, 3}, g);
    check_gradients("add", {a, b}, [](const std::vector<Tensor>& in) {
      return add(in[0], in[1]);
    });
    check_gradients("mul", {a, b}, [](const std::vector<Tensor>& in) {
      return mul(sub(in[0], in[1]), in[1]);
    });
  }
  for (int i = 0; i < trials; ++i) {
    // keep inputs away from the relu/leaky kink at 0
    Tensor a = random_tensor({2, 4}, g, -2.0f, 2.0f, 0.05f);
    check_gradients("relu", {a}, [](const std::vector<Tensor>& in) {
      return relu(in[0]);
    });
    check_gradients("leaky_relu", {a}, [](const std::vector<Tensor>& in) {
      return leaky_relu(in[0]);
    });
  }
  for (int i = 0; i < trials; ++i) {
    Tensor a = random_tensor({2, 4}, g);
    check_gradients("sigmoid", {a}, [](const std::vector<Tensor>& in) {
      return sigmoid(in[0]);
    });
    check_gradients("tanh_op", {a}, [](const std::vector<Tensor>& in) {
      return tanh_op(in[0]);
    });
    check_gradients("exp_op", {a}, [](const std::vector<Tensor>& in) {
      return exp_op(in[0]);
    });
    check_gradients("scale", {a}, [](const std::vector<Tensor>& in) {
      return scale(in[0], -1.7f);
    });
  }
  for (int i = 0; i < trials; ++i) {
    Tensor a = random_tensor({2, 4}, g, 0.3f, 2.0f);
    check_gradients("log_op", {a}, [](const std::vector<Tensor>& in) {
      return log_op(in[0]);
    }, 3e-3);
  }
  for (int i = 0; i < trials; ++i) {
    // clamp: probe strictly inside the pass-through band
    Tensor a = random_tensor({2, 4}, g, -1.3f, 1.3f);
    check_gradients("clamp", {a}, [](const std::vector<Tensor>& in) {
      return clamp(in[0], -1.5f, 1.5f);
    });
  }
  for (int i = 0; i < trials; ++i) {
    Tensor a = random_tensor({3, 2}, g);
    Tensor b = random_tensor({2, 3}, g);
    check_gradients("matmul", {a, b}, [](const std::vector<Tensor>& in) {
      return matmul(in[0], in[1]);
    });
  }
  for (int i = 0; i < trials; ++i) {
    Tensor a = random_tensor({2, 3}, g);
    check_gradients("reduce_sum", {a}, [](const std::vector<Tensor>& in) {
      return reduce_sum(in[0], 0);
    });
    check_gradients("reduce_mean", {a}, [](const std::vector<Tensor>& in) {
      return reduce_mean(in[0], 1);
    });
  }
  for (int i = 0; i < trials; ++i) {
    Tensor a = random_tensor({2, 2}, g);
    Tensor b = random_tensor({2, 3}, g);
    check_gradients("concat", {a, b}, [](const std::vector<Tensor>& in) {
      return concat(in[0], in[1], 1);
    });
  }
  for (int i = 0; i < trials; ++i) {
    Tensor p = random_tensor({2, 4}, g, 0.2f, 0.8f);
    Tensor t = random_tensor({2, 4}, g, 0.0f, 1.0f);
    check_gradients("bce", {p}, [&t](const std::vector<Tensor>& in) {
      return bce(in[0], t);
    }, 1e-2, 1e-4, true);
  }
  for (int i = 0; i < trials; ++i) {
    Tensor l = random_tensor({3, 4}, g);
    std::vector<int> y = {static_cast<int>(g() % 4), static_cast<int>(g() % 4),
                          static_cast<int>(g() % 4)};
    check_gradients("softmax_cross_entropy", {l}, [&y](const std::vector<Tensor>& in) {
      return softmax_cross_entropy(in[0], y);
    }, 1e-2, 1e-4, true);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::of({3}, {1, 2, 3}).set_requires_grad(true);
  p.ensure_grad();
  Adam opt({p});
  opt.step();
  CHECK(p.data() == std::vector<float>{1, 2, 3});
}

TEST_CASE("adam: missing gradient") {
  Tensor p = Tensor::of({3}, {1, 2, 3}).set_requires_grad(true);
  Adam opt({p});
  CHECK_THROWS_AS(opt.step(), MissingGradient);
}

TEST_CASE("adam: first-step magnitude is about the learning rate") {
  // scalar oracle: m_hat = g, v_hat = g^2 -> update = lr*sign(g)
  Tensor p = Tensor::of({2}, {1.0f, -1.0f}).set_requires_grad(true);
  p.grad() = {0.5f, -2.0f};
  AdamConfig cfg;
  Adam opt({p}, cfg);
  opt.step();
  CHECK(p.data()[0] == doctest::Approx(1.0f - cfg.lr).epsilon(1e-4));
  CHECK(p.data()[1] == doctest::Approx(-1.0f + cfg.lr).epsilon(1e-4));
  CHECK(p.grad() == std::vector<float>{0, 0});  // grads zeroed by the step
}

TEST_CASE("adam: minimizes x^2 below 1e-3 within 500 steps at lr 0.01") {
  Tensor x = Tensor::scalar(1.5f).set_requires_grad(true);
  AdamConfig cfg;
  cfg.lr = 0.01f;
  Adam opt({x}, cfg);
  for (int i = 0; i < 500; ++i) {
    Tape tape;
    tape.backward(mul(x, x));
    opt.step();
  }
  CHECK(std::fabs(x.data()[0]) < 1e-3f);
}

TEST_CASE("gaussian: determinism and moments") {
  Rng r1(123), r2(123);
  Tensor a = gaussian({100}, r1);
  Tensor b = gaussian({100}, r2);
  CHECK(a.data() == b.data());

  Rng r(0);
  Tensor big = gaussian({1000000}, r);
  double sum = 0, sq = 0;
  for (float v : big.data()) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double mean = sum / big.numel();
  const double var = sq / big.numel() - mean * mean;
  CHECK(std::fabs(mean) < 0.01);
  CHECK(std::fabs(var - 1.0) < 0.01);
}

TEST_CASE("gaussian: Box-Muller oracle for first 10 values at seed 0") {
  // independent reimplementation of the generator's normal stream
  std::mt19937 raw(0);
  auto uni = [&raw]() {
    return (static_cast<double>(raw()) + 0.5) / 4294967296.0;
  };
  std::vector<double> expect;
  while (expect.size() < 10) {
    const double u1 = uni(), u2 = uni();
    const double r = std::sqrt(-2.0 * std::log(u1));
    expect.push_back(r * std::cos(2.0 * M_PI * u2));
    expect.push_back(r * std::sin(2.0 * M_PI * u2));
  }
  Rng rng(0);
  Tensor out = gaussian({10}, rng);
  for (int i = 0; i < 10; ++i)
    CHECK(out.data()[i] == doctest::Approx(expect[i]).epsilon(1e-6));
}
