#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "lifegen/rng.hpp"
#include "lifegen/tensor.hpp"

namespace lifegen {

namespace detail {

inline void record_op(Tensor& out, std::initializer_list<Tensor> inputs,
                      std::function<void()> backward_fn) {
  Tape* tape = Tape::active();
  if (!tape) return;
  bool needs = false;
  for (const Tensor& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return;
  out.set_requires_grad(true);
  out.set_tape(tape);
  tape->record(std::move(backward_fn));
}

// Broadcast patterns supported by binary elementwise ops:
//   same shape; scalar vs any; [n] vs [B,n] (row-wise, e.g. bias add).
struct Broadcast {
  Shape out_shape;
  bool a_scalar = false, b_scalar = false;
  bool a_row = false, b_row = false;  // operand is [n] against [B,n]
  std::int64_t rows = 1, cols = 1;
};

inline Broadcast binary_broadcast(const Tensor& a, const Tensor& b,
                                  const char* op) {
  Broadcast br;
  if (a.shape() == b.shape()) {
    br.out_shape = a.shape();
    br.cols = a.numel();
    return br;
  }
  if (a.numel() == 1) {
    br.a_scalar = true;
    br.out_shape = b.shape();
    br.cols = b.numel();
    return br;
  }
  if (b.numel() == 1) {
    br.b_scalar = true;
    br.out_shape = a.shape();
    br.cols = a.numel();
    return br;
  }
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
    br.b_row = true;
    br.out_shape = a.shape();
    br.rows = a.dim(0);
    br.cols = a.dim(1);
    return br;
  }
  if (b.rank() == 2 && a.rank() == 1 && b.dim(1) == a.dim(0)) {
    br.a_row = true;
    br.out_shape = b.shape();
    br.rows = b.dim(0);
    br.cols = b.dim(1);
    return br;
  }
  throw ShapeMismatch(std::string(op) + ": incompatible shapes " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                 BwdA da, BwdB db) {
  const Broadcast br = binary_broadcast(a, b, name);
  Tensor out = Tensor::zeros(br.out_shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  const std::int64_t total = br.rows * br.cols;
  for (std::int64_t i = 0; i < total; ++i) {
    const float x = br.a_scalar ? av[0] : (br.a_row ? av[i % br.cols] : av[i]);
    const float y = br.b_scalar ? bv[0] : (br.b_row ? bv[i % br.cols] : bv[i]);
    ov[i] = fwd(x, y);
  }
  check_finite(out, name);
  record_op(out, {a, b}, [a = Tensor(a), b = Tensor(b), out, br, da, db]() mutable {
    const auto& g = out.grad();
    const auto& av2 = a.data();
    const auto& bv2 = b.data();
    const std::int64_t total2 = br.rows * br.cols;
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::int64_t i = 0; i < total2; ++i) {
        const float x =
            br.a_scalar ? av2[0] : (br.a_row ? av2[i % br.cols] : av2[i]);
        const float y =
            br.b_scalar ? bv2[0] : (br.b_row ? bv2[i % br.cols] : bv2[i]);
        const float gi = g[i] * da(x, y);
        if (br.a_scalar)
          ga[0] += gi;
        else if (br.a_row)
          ga[i % br.cols] += gi;
        else
          ga[i] += gi;
      }
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::int64_t i = 0; i < total2; ++i) {
        const float x =
            br.a_scalar ? av2[0] : (br.a_row ? av2[i % br.cols] : av2[i]);
        const float y =
            br.b_scalar ? bv2[0] : (br.b_row ? bv2[i % br.cols] : bv2[i]);
        const float gi = g[i] * db(x, y);
        if (br.b_scalar)
          gb[0] += gi;
        else if (br.b_row)
          gb[i % br.cols] += gi;
        else
          gb[i] += gi;
      }
    }
  });
  return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& x, Fwd fwd, Bwd dfdx) {
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  check_finite(out, name);
  record_op(out, {x}, [x = Tensor(x), out, dfdx]() mutable {
    const auto& g = out.grad();
    const auto& xv2 = x.data();
    const auto& ov2 = out.data();
    auto& gx = x.grad();
    for (std::size_t i = 0; i < xv2.size(); ++i)
      gx[i] += g[i] * dfdx(xv2[i], ov2[i]);
  });
  return out;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "add", a, b, [](float x, float y) { return x + y; },
      [](float, float) { return 1.0f; }, [](float, float) { return 1.0f; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "sub", a, b, [](float x, float y) { return x - y; },
      [](float, float) { return 1.0f; }, [](float, float) { return -1.0f; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      "mul", a, b, [](float x, float y) { return x * y; },
      [](float, float y) { return y; }, [](float x, float) { return x; });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_op(
      "relu", x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

inline Tensor leaky_relu(const Tensor& x, float slope = 0.2f) {
  return detail::unary_op(
      "leaky_relu", x,
      [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      "sigmoid", x,
      [](float v) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

inline Tensor tanh_op(const Tensor& x) {
  return detail::unary_op(
      "tanh", x, [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

inline Tensor exp_op(const Tensor& x) {
  return detail::unary_op(
      "exp", x, [](float v) { return std::exp(v); },
      [](float, float y) { return y; });
}

inline Tensor log_op(const Tensor& x) {
  for (float v : x.data())
    if (v <= 0.0f) throw DomainError("log of non-positive value");
  return detail::unary_op(
      "log", x, [](float v) { return std::log(v); },
      [](float v, float) { return 1.0f / v; });
}

inline Tensor scale(const Tensor& x, float c) {
  return detail::unary_op(
      "scale", x, [c](float v) { return c * v; },
      [c](float, float) { return c; });
}

// Hard clamp; gradient passes through inside [lo, hi], zero outside.
inline Tensor clamp(const Tensor& x, float lo, float hi) {
  return detail::unary_op(
      "clamp", x,
      [lo, hi](float v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](float v, float) { return (v >= lo && v <= hi) ? 1.0f : 0.0f; });
}

// ---- matmul ----------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeMismatch("matmul expects rank-2 tensors, got " +
                        shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeMismatch("matmul inner dimensions disagree: " +
                        shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  {
    const float* A = a.data().data();
    const float* B = b.data().data();
    float* O = out.data().data();
    for (int i = 0; i < m; ++i) {
      const float* arow = A + static_cast<std::size_t>(i) * k;
      float* orow = O + static_cast<std::size_t>(i) * n;
      for (int kk = 0; kk < k; ++kk) {
        const float aik = arow[kk];
        if (aik == 0.0f) continue;
        const float* brow = B + static_cast<std::size_t>(kk) * n;
        for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
  }
  check_finite(out, "matmul");
  detail::record_op(out, {a, b}, [a = Tensor(a), b = Tensor(b), out, m, k, n]() mutable {
    const float* G = out.grad().data();
    if (a.requires_grad()) {
      float* GA = a.grad().data();
      const float* B = b.data().data();
      // dA[i,k] += sum_j G[i,j] * B[k,j]
      for (int i = 0; i < m; ++i) {
        const float* grow = G + static_cast<std::size_t>(i) * n;
        float* garow = GA + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
          const float* brow = B + static_cast<std::size_t>(kk) * n;
          float acc = 0.0f;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          garow[kk] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      float* GB = b.grad().data();
      const float* A = a.data().data();
      // dB[k,j] += sum_i A[i,k] * G[i,j]
      for (int i = 0; i < m; ++i) {
        const float* arow = A + static_cast<std::size_t>(i) * k;
        const float* grow = G + static_cast<std::size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
          const float aik = arow[kk];
          if (aik == 0.0f) continue;
          float* gbrow = GB + static_cast<std::size_t>(kk) * n;
          for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  });
  return out;
}

// ---- reductions ------------------------------------------------------------

namespace detail {
inline Tensor reduce_impl(const char* name, const Tensor& x, int axis,
                          bool mean) {
  // axis == -1: full reduction. Accumulation in double.
  std::int64_t outer = 1, red = 1, inner = 1;
  Shape out_shape;
  if (axis == -1) {
    red = x.numel();
    out_shape = {1};
  } else {
    if (axis < 0 || axis >= x.rank())
      throw AxisOutOfRange(std::string(name) + ": axis " +
                           std::to_string(axis) + " for shape " +
                           shape_str(x.shape()));
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    red = x.dim(axis);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    for (int i = 0; i < x.rank(); ++i)
      if (i != axis) out_shape.push_back(x.dim(i));
    if (out_shape.empty()) out_shape = {1};
  }
  Tensor out = Tensor::zeros(out_shape);
  const float inv = mean ? 1.0f / static_cast<float>(red) : 1.0f;
  {
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < inner; ++i) {
        double acc = 0.0;
        for (std::int64_t r = 0; r < red; ++r)
          acc += xv[static_cast<std::size_t>((o * red + r) * inner + i)];
        ov[static_cast<std::size_t>(o * inner + i)] =
            static_cast<float>(acc) * inv;
      }
  }
  check_finite(out, name);
  record_op(out, {x}, [x = Tensor(x), out, outer, red, inner, inv]() mutable {
    const auto& g = out.grad();
    auto& gx = x.grad();
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < inner; ++i) {
        const float gi = g[static_cast<std::size_t>(o * inner + i)] * inv;
        for (std::int64_t r = 0; r < red; ++r)
          gx[static_cast<std::size_t>((o * red + r) * inner + i)] += gi;
      }
  });
  return out;
}
}  // namespace detail

inline Tensor reduce_sum(const Tensor& x, int axis = -1) {
  return detail::reduce_impl("sum", x, axis, false);
}

inline Tensor reduce_mean(const Tensor& x, int axis = -1) {
  return detail::reduce_impl("mean", x, axis, true);
}

// ---- concat ----------------------------------------------------------------

inline Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  if (a.rank() != b.rank())
    throw ShapeMismatch("concat: rank mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  if (axis < 0 || axis >= a.rank())
    throw AxisOutOfRange("concat: axis " + std::to_string(axis));
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis && a.dim(i) != b.dim(i))
      throw ShapeMismatch("concat: shapes " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()) + " differ off axis " +
                          std::to_string(axis));
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] += b.dim(axis);
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const std::int64_t ab = a.dim(axis) * inner;  // per-outer block sizes
  const std::int64_t bb = b.dim(axis) * inner;
  Tensor out = Tensor::zeros(out_shape);
  {
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(av.begin() + o * ab, ab, ov.begin() + o * (ab + bb));
      std::copy_n(bv.begin() + o * bb, bb, ov.begin() + o * (ab + bb) + ab);
    }
  }
  detail::record_op(out, {a, b}, [a = Tensor(a), b = Tensor(b), out, outer, ab, bb]() mutable {
    const auto& g = out.grad();
    if (a.requires_grad()) {
      auto& ga = a.grad();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < ab; ++i)
          ga[static_cast<std::size_t>(o * ab + i)] +=
              g[static_cast<std::size_t>(o * (ab + bb) + i)];
    }
    if (b.requires_grad()) {
      auto& gb = b.grad();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < bb; ++i)
          gb[static_cast<std::size_t>(o * bb + i)] +=
              g[static_cast<std::size_t>(o * (ab + bb) + ab + i)];
    }
  });
  return out;
}

// ---- losses ----------------------------------------------------------------

// Bernoulli negative log-likelihood: per-sample sum over pixels, mean over
// the batch (rows of a rank-2 tensor; a rank-1 tensor counts as one sample).
// Predictions are clamped to [eps, 1-eps]; clamped positions get zero grad.
inline Tensor bce(const Tensor& prediction, const Tensor& target) {
  static constexpr float kEps = 1e-7f;
  if (prediction.shape() != target.shape())
    throw ShapeMismatch("bce: " + shape_str(prediction.shape()) + " vs " +
                        shape_str(target.shape()));
  const std::int64_t batch =
      prediction.rank() >= 2 ? prediction.dim(0) : 1;
  const float inv_b = 1.0f / static_cast<float>(batch);
  Tensor out = Tensor::zeros({1});
  {
    const auto& pv = prediction.data();
    const auto& tv = target.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double p =
          std::min(std::max(static_cast<double>(pv[i]), (double)kEps),
                   1.0 - (double)kEps);
      const double t = tv[i];
      acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    out.data()[0] = static_cast<float>(acc) * inv_b;
  }
  check_finite(out, "bce");
  detail::record_op(out, {prediction, target},
                    [prediction = Tensor(prediction), target = Tensor(target),
                     out, inv_b]() mutable {
    const float g = out.grad()[0];
    const auto& pv = prediction.data();
    const auto& tv = target.data();
    if (prediction.requires_grad()) {
      auto& gp = prediction.grad();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const float p = pv[i];
        if (p <= kEps || p >= 1.0f - kEps) continue;
        gp[i] += g * inv_b * (-tv[i] / p + (1.0f - tv[i]) / (1.0f - p));
      }
    }
    if (target.requires_grad()) {
      auto& gt = target.grad();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const float p = std::min(std::max(pv[i], kEps), 1.0f - kEps);
        gt[i] += g * inv_b * (std::log(1.0f - p) - std::log(p)) * -1.0f;
      }
    }
  });
  return out;
}

// Mean over the batch of -log softmax(logits)[label]. Fused forward/backward.
inline Tensor softmax_cross_entropy(const Tensor& logits,
                                    const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw ShapeMismatch("softmax_cross_entropy expects [batch, classes]");
  const int batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int>(labels.size()) != batch)
    throw ShapeMismatch("softmax_cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw DomainError("softmax_cross_entropy: label out of range");
  Tensor out = Tensor::zeros({1});
  {
    const auto& lv = logits.data();
    double acc = 0.0;
    for (int i = 0; i < batch; ++i) {
      const float* row = lv.data() + static_cast<std::size_t>(i) * classes;
      float mx = row[0];
      for (int j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
      double se = 0.0;
      for (int j = 0; j < classes; ++j) se += std::exp((double)(row[j] - mx));
      acc += mx + std::log(se) - row[labels[static_cast<std::size_t>(i)]];
    }
    out.data()[0] = static_cast<float>(acc / batch);
  }
  check_finite(out, "softmax_cross_entropy");
  detail::record_op(out, {logits}, [logits = Tensor(logits), out, labels,
                                    batch, classes]() mutable {
    const float g = out.grad()[0] / static_cast<float>(batch);
    const auto& lv = logits.data();
    auto& gl = logits.grad();
    for (int i = 0; i < batch; ++i) {
      const float* row = lv.data() + static_cast<std::size_t>(i) * classes;
      float* grow = gl.data() + static_cast<std::size_t>(i) * classes;
      float mx = row[0];
      for (int j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
      double se = 0.0;
      for (int j = 0; j < classes; ++j) se += std::exp((double)(row[j] - mx));
      for (int j = 0; j < classes; ++j) {
        float sm = static_cast<float>(std::exp((double)(row[j] - mx)) / se);
        if (j == labels[static_cast<std::size_t>(i)]) sm -= 1.0f;
        grow[j] += g * sm;
      }
    }
  });
  return out;
}

// ---- sampling --------------------------------------------------------------

// i.i.d. standard normal samples; never recorded on a tape.
inline Tensor gaussian(Shape shape, Rng& rng) {
  Tensor out = Tensor::zeros(std::move(shape));
  for (auto& v : out.data()) v = static_cast<float>(rng.normal());
  return out;
}

}  // namespace lifegen
