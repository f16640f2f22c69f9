#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lifegen/adam.hpp"
#include "lifegen/cvae.hpp"
#include "lifegen/data.hpp"
#include "lifegen/lifelong.hpp"
#include "lifegen/linalg.hpp"
#include "lifegen/ops.hpp"

namespace lifegen {

// Small MLP used both as the ACC evaluation classifier (retrained on each
// generated set) and as the frozen feature extractor for the Fréchet metric
// (trained once on real data; penultimate 128-d activations).
class Classifier {
 public:
  static constexpr int kFeatureDim = 128;

  Classifier(int input_dim, int num_classes, Rng& rng)
      : input_dim_(input_dim),
        num_classes_(num_classes),
        fc1_(input_dim, kFeatureDim, rng),
        fc2_(kFeatureDim, num_classes, rng) {}

  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }

  Tensor features(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != input_dim_)
      throw ShapeMismatch("classifier expects [B," +
                          std::to_string(input_dim_) + "], got " +
                          shape_str(x.shape()));
    return relu(fc1_.forward(x));
  }

  Tensor logits(const Tensor& x) const { return fc2_.forward(features(x)); }

  std::vector<int> predict(const Tensor& x) const {
    NoGradGuard ng;
    Tensor lg = logits(x);
    std::vector<int> out(static_cast<std::size_t>(lg.dim(0)));
    for (int i = 0; i < lg.dim(0); ++i) {
      int best = 0;
      for (int c = 1; c < num_classes_; ++c)
        if (lg.data()[static_cast<std::size_t>(i * num_classes_ + c)] >
            lg.data()[static_cast<std::size_t>(i * num_classes_ + best)])
          best = c;
      out[static_cast<std::size_t>(i)] = best;
    }
    return out;
  }

  std::vector<Tensor> params() const {
    return {fc1_.w, fc1_.b, fc2_.w, fc2_.b};
  }

  // Trains to convergence: early stop when the loss on a 10% holdout fails
  // to improve for `patience` epochs, hard cap `max_epochs`. The best
  // holdout weights are restored at the end.
  void train(const LabeledDataset& data, Rng& rng, int max_epochs = 50,
             int patience = 3, int batch_size = 64) {
    if (data.size() < 2) throw TooFewSamples("classifier needs >= 2 samples");
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const std::size_t holdout =
        std::max<std::size_t>(1, data.size() / 10);
    const std::vector<int> val(order.begin(), order.begin() + holdout);
    std::vector<int> tr(order.begin() + holdout, order.end());

    Adam opt(params(), AdamConfig{});
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    std::vector<std::vector<float>> best_params;
    for (const Tensor& p : params()) best_params.push_back(p.data());

    for (int epoch = 0; epoch < max_epochs; ++epoch) {
      rng.shuffle(tr);
      for (std::size_t b = 0; b < tr.size();
           b += static_cast<std::size_t>(batch_size)) {
        const std::size_t e =
            std::min(tr.size(), b + static_cast<std::size_t>(batch_size));
        std::vector<int> y;
        Tensor x = detail::gather_batch(data, tr, b, e, y);
        Tape tape;
        backward(softmax_cross_entropy(logits(x), y));
        opt.step();
      }
      const double vloss = eval_loss(data, val);
      if (vloss < best - 1e-6) {
        best = vloss;
        stale = 0;
        best_params.clear();
        for (const Tensor& p : params()) best_params.push_back(p.data());
      } else if (++stale >= patience) {
        break;
      }
    }
    std::size_t k = 0;
    for (Tensor p : params()) p.data() = best_params[k++];
  }

 private:
  double eval_loss(const LabeledDataset& data,
                   const std::vector<int>& idx) const {
    NoGradGuard ng;
    double acc = 0;
    for (std::size_t b = 0; b < idx.size(); b += 256) {
      const std::size_t e = std::min(idx.size(), b + 256);
      std::vector<int> y;
      Tensor x = detail::gather_batch(data, idx, b, e, y);
      acc += softmax_cross_entropy(logits(x), y).item() * double(e - b);
    }
    return acc / double(idx.size());
  }

  int input_dim_, num_classes_;
  Linear fc1_, fc2_;
};

// Trains a fresh evaluation classifier on a generated set; throws if any of
// the classes it is supposed to cover is absent.
inline Classifier train_eval_classifier(const LabeledDataset& generated,
                                        const std::vector<int>& classes,
                                        int num_classes, Rng& rng) {
  const auto present = generated.label_set();
  for (int c : classes)
    if (!present.count(c))
      throw ClassMissing("class " + std::to_string(c) +
                         " absent from the generated set");
  Classifier clf(generated.image_dim(), num_classes, rng);
  clf.train(generated, rng);
  return clf;
}

struct AccResult {
  double percent = 0;                 // overall, 0..100
  std::map<int, double> per_class;    // class -> 0..100
  std::map<int, int> class_counts;
};

inline AccResult accuracy(const Classifier& clf,
                          const LabeledDataset& real_test) {
  AccResult r;
  if (real_test.size() == 0) return r;
  std::map<int, int> hits;
  std::vector<int> idx(real_test.size());
  std::iota(idx.begin(), idx.end(), 0);
  int total_hits = 0;
  for (std::size_t b = 0; b < idx.size(); b += 256) {
    const std::size_t e = std::min(idx.size(), b + 256);
    std::vector<int> y;
    Tensor x = detail::gather_batch(real_test, idx, b, e, y);
    const std::vector<int> pred = clf.predict(x);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      r.class_counts[y[i]]++;
      if (pred[i] == y[i]) {
        hits[y[i]]++;
        ++total_hits;
      }
    }
  }
  r.percent = 100.0 * total_hits / double(real_test.size());
  for (auto [c, n] : r.class_counts)
    r.per_class[c] = 100.0 * hits[c] / double(n);
  return r;
}

// ---- Fréchet machinery -----------------------------------------------------

struct FeatureStats {
  std::vector<double> mean;  // d_f
  Matrix cov;                // d_f x d_f, ridge included
  std::size_t n = 0;
  int dim() const { return static_cast<int>(mean.size()); }
};

// Sample mean and unbiased covariance plus a ridge of 1e-6 * trace / d.
inline FeatureStats feature_stats(const std::vector<float>& features,
                                  std::size_t n, int d) {
  if (n < 2) throw TooFewSamples("need >= 2 feature rows, got " +
                                 std::to_string(n));
  if (features.size() != n * static_cast<std::size_t>(d))
    throw DimensionMismatch("feature buffer does not match n x d");
  FeatureStats s;
  s.n = n;
  s.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      s.mean[static_cast<std::size_t>(j)] += features[i * d + j];
  for (auto& v : s.mean) v /= double(n);

  s.cov.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double cj = features[i * d + j] - s.mean[static_cast<std::size_t>(j)];
      for (int k = j; k < d; ++k)
        s.cov[j * d + k] +=
            cj * (features[i * d + k] - s.mean[static_cast<std::size_t>(k)]);
    }
  for (int j = 0; j < d; ++j)
    for (int k = j; k < d; ++k) {
      s.cov[j * d + k] /= double(n - 1);
      s.cov[k * d + j] = s.cov[j * d + k];
    }
  const double ridge = 1e-6 * trace(s.cov, d) / d;
  for (int j = 0; j < d; ++j) s.cov[j * d + j] += ridge;
  return s;
}

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), >= 0.
inline double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.dim() != b.dim())
    throw DimensionMismatch("feature stats of dimension " +
                            std::to_string(a.dim()) + " vs " +
                            std::to_string(b.dim()));
  const int d = a.dim();
  double dist = 0;
  for (int i = 0; i < d; ++i) {
    const double dm = a.mean[static_cast<std::size_t>(i)] -
                      b.mean[static_cast<std::size_t>(i)];
    dist += dm * dm;
  }
  const Matrix ra = psd_sqrt(a.cov, d);
  Matrix inner = mat_mul(mat_mul(ra, b.cov, d), ra, d);
  // symmetrize away roundoff before the second root
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double v = 0.5 * (inner[i * d + j] + inner[j * d + i]);
      inner[i * d + j] = inner[j * d + i] = v;
    }
  const Matrix cross = psd_sqrt(inner, d);
  dist += trace(a.cov, d) + trace(b.cov, d) - 2.0 * trace(cross, d);
  return std::max(0.0, dist);
}

// Extracts reference-classifier features for a whole dataset.
inline std::vector<float> extract_features(const Classifier& reference,
                                           const LabeledDataset& data) {
  NoGradGuard ng;
  std::vector<float> out;
  out.reserve(data.size() * Classifier::kFeatureDim);
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t b = 0; b < idx.size(); b += 256) {
    const std::size_t e = std::min(idx.size(), b + 256);
    std::vector<int> y;
    Tensor x = detail::gather_batch(data, idx, b, e, y);
    Tensor f = reference.features(x);
    out.insert(out.end(), f.data().begin(), f.data().end());
  }
  return out;
}

// ---- report ----------------------------------------------------------------

struct MetricsReport {
  int task_index = 0;
  double acc_percent = 0;
  double frechet = 0;
  std::vector<double> per_class_acc;  // aligned with `labels`
  std::vector<int> labels;
  double seconds = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"task", task_index},       {"acc", acc_percent},
            {"frechet", frechet},       {"per_class_acc", per_class_acc},
            {"labels", labels},         {"seconds", seconds},
            {"seed", seed}};
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.task_index = j.at("task").get<int>();
    r.acc_percent = j.at("acc").get<double>();
    r.frechet = j.at("frechet").get<double>();
    r.per_class_acc = j.at("per_class_acc").get<std::vector<double>>();
    r.labels = j.at("labels").get<std::vector<int>>();
    r.seconds = j.at("seconds").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  }
};

// Draws per-class samples from a snapshot's decoder into a dataset.
inline LabeledDataset generate_dataset(const DecoderSnapshot& snap,
                                       int per_class_samples, Rng& rng) {
  const int side =
      static_cast<int>(std::lround(std::sqrt(double(snap.config.image_dim))));
  LabeledDataset gen;
  gen.width = side;
  gen.height = side;
  gen.name = "generated_task" + std::to_string(snap.task_index);
  for (int c : snap.labels) {
    Tensor s = snap.frozen_model().sample(c, per_class_samples, rng);
    gen.pixels.insert(gen.pixels.end(), s.data().begin(), s.data().end());
    gen.labels.insert(gen.labels.end(),
                      static_cast<std::size_t>(per_class_samples), c);
  }
  return gen;
}

// The §4-style evaluation of one task checkpoint: ACC of a classifier
// trained on generated data and tested on real data, plus the Fréchet
// distance in the reference classifier's feature space.
inline MetricsReport evaluate_checkpoint(const DecoderSnapshot& snap,
                                         const Classifier& reference,
                                         const LabeledDataset& real_test,
                                         int per_class_samples, Rng& rng) {
  if (per_class_samples < 100)
    throw TooFewSamples("need >= 100 generated samples per class, got " +
                        std::to_string(per_class_samples));
  LabeledDataset gen = generate_dataset(snap, per_class_samples, rng);

  // restrict the real test set to the classes learned so far
  LabeledDataset test;
  test.width = real_test.width;
  test.height = real_test.height;
  test.name = real_test.name;
  for (std::size_t i = 0; i < real_test.size(); ++i)
    if (std::binary_search(snap.labels.begin(), snap.labels.end(),
                           real_test.labels[i])) {
      test.pixels.insert(test.pixels.end(), real_test.image(i),
                         real_test.image(i) + real_test.image_dim());
      test.labels.push_back(real_test.labels[i]);
    }

  Classifier clf = train_eval_classifier(gen, snap.labels,
                                         snap.config.num_classes, rng);
  const AccResult acc = accuracy(clf, test);

  const std::vector<float> gen_f = extract_features(reference, gen);
  const std::vector<float> real_f = extract_features(reference, test);
  const FeatureStats gs =
      feature_stats(gen_f, gen.size(), Classifier::kFeatureDim);
  const FeatureStats rs =
      feature_stats(real_f, test.size(), Classifier::kFeatureDim);

  MetricsReport r;
  r.task_index = snap.task_index;
  r.acc_percent = acc.percent;
  r.frechet = frechet_distance(gs, rs);
  r.labels = snap.labels;
  for (int c : snap.labels) {
    auto it = acc.per_class.find(c);
    r.per_class_acc.push_back(it == acc.per_class.end() ? 0.0 : it->second);
  }
  return r;
}

// ---- sample grids ----------------------------------------------------------

struct GridImage {
  int width = 0, height = 0;
  std::vector<unsigned char> pixels;
};

// Tiles images row-major with 2-pixel black separators.
inline GridImage image_grid(const std::vector<float>& images, int img_w,
                            int img_h, int rows, int cols) {
  const std::size_t per = static_cast<std::size_t>(img_w) * img_h;
  const std::size_t count = per == 0 ? 0 : images.size() / per;
  if (count < static_cast<std::size_t>(rows) * cols)
    throw TooFewImages(std::to_string(count) + " images for a " +
                       std::to_string(rows) + "x" + std::to_string(cols) +
                       " grid");
  constexpr int kSep = 2;
  GridImage g;
  g.width = cols * img_w + (cols - 1) * kSep;
  g.height = rows * img_h + (rows - 1) * kSep;
  g.pixels.assign(static_cast<std::size_t>(g.width) * g.height, 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::size_t img = static_cast<std::size_t>(r) * cols + c;
      const int y0 = r * (img_h + kSep), x0 = c * (img_w + kSep);
      for (int y = 0; y < img_h; ++y)
        for (int x = 0; x < img_w; ++x) {
          const float v = images[img * per + static_cast<std::size_t>(y) * img_w + x];
          const long u = std::lround(double(v) * 255.0);
          g.pixels[static_cast<std::size_t>(y0 + y) * g.width + (x0 + x)] =
              static_cast<unsigned char>(std::clamp(u, 0l, 255l));
        }
    }
  return g;
}

inline void write_pgm(const std::string& path, const GridImage& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "P5\n" << g.width << ' ' << g.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(g.pixels.data()),
            static_cast<std::streamsize>(g.pixels.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace lifegen
