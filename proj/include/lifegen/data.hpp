#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "lifegen/errors.hpp"
#include "lifegen/rng.hpp"

namespace lifegen {

// A set of grayscale images with class labels, pixels in [0,1] row-major.
struct LabeledDataset {
  int width = 32;
  int height = 32;
  std::vector<float> pixels;  // size() * width * height
  std::vector<int> labels;
  std::string name;

  std::size_t size() const { return labels.size(); }
  int image_dim() const { return width * height; }
  const float* image(std::size_t i) const {
    return pixels.data() + i * static_cast<std::size_t>(image_dim());
  }

  void validate(int num_classes) const {
    if (pixels.size() != labels.size() * static_cast<std::size_t>(image_dim()))
      throw CountMismatch(name + ": pixel/label count mismatch");
    for (int y : labels)
      if (y < 0 || y >= num_classes)
        throw DomainError(name + ": label " + std::to_string(y) +
                          " out of range");
    for (float v : pixels)
      if (!(v >= 0.0f && v <= 1.0f))
        throw DomainError(name + ": pixel outside [0,1]");
  }

  std::set<int> label_set() const {
    return std::set<int>(labels.begin(), labels.end());
  }

  void append(const LabeledDataset& other) {
    if (other.width != width || other.height != height)
      throw ShapeMismatch("append: image sizes differ");
    pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  }
};

// One task of a class-incremental stream: train and held-out test split.
struct Task {
  LabeledDataset train;
  LabeledDataset test;
};

struct TaskStream {
  std::vector<Task> tasks;

  std::size_t size() const { return tasks.size(); }

  void check_disjoint() const {
    std::set<int> seen;
    for (const Task& t : tasks)
      for (int y : t.train.label_set()) {
        if (seen.count(y))
          throw LabelOverlap("label " + std::to_string(y) +
                             " appears in more than one task");
        seen.insert(y);
      }
  }
};

// ---- IDX loading -----------------------------------------------------------

namespace detail {
inline std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw TruncatedFile(path + ": unexpected end of file");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}
}  // namespace detail

// Loads an IDX image/label file pair (the MNIST container format).
inline LabeledDataset load_idx(const std::string& images_path,
                               const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("cannot open " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw IoError("cannot open " + labels_path);

  if (detail::read_u32_be(imgs, images_path) != 0x00000803u)
    throw BadMagic(images_path + ": not an IDX image file");
  if (detail::read_u32_be(labs, labels_path) != 0x00000801u)
    throw BadMagic(labels_path + ": not an IDX label file");

  const std::uint32_t n_img = detail::read_u32_be(imgs, images_path);
  const std::uint32_t rows = detail::read_u32_be(imgs, images_path);
  const std::uint32_t cols = detail::read_u32_be(imgs, images_path);
  const std::uint32_t n_lab = detail::read_u32_be(labs, labels_path);
  if (n_img != n_lab)
    throw CountMismatch(images_path + ": " + std::to_string(n_img) +
                        " images vs " + std::to_string(n_lab) + " labels");

  LabeledDataset d;
  d.width = static_cast<int>(cols);
  d.height = static_cast<int>(rows);
  d.name = std::filesystem::path(images_path).filename().string();
  const std::size_t total = std::size_t(n_img) * rows * cols;
  std::vector<unsigned char> raw(total);
  if (!imgs.read(reinterpret_cast<char*>(raw.data()),
                 static_cast<std::streamsize>(total)))
    throw TruncatedFile(images_path + ": fewer pixels than header declares");
  d.pixels.resize(total);
  for (std::size_t i = 0; i < total; ++i)
    d.pixels[i] = static_cast<float>(raw[i]) / 255.0f;

  std::vector<unsigned char> lab(n_lab);
  if (!labs.read(reinterpret_cast<char*>(lab.data()), n_lab))
    throw TruncatedFile(labels_path + ": fewer labels than header declares");
  d.labels.assign(lab.begin(), lab.end());
  return d;
}

// Test-support inverse of load_idx, also handy for fixtures.
inline void write_idx(const std::string& images_path,
                      const std::string& labels_path,
                      const LabeledDataset& d) {
  auto put_u32 = [](std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  std::ofstream imgs(images_path, std::ios::binary);
  put_u32(imgs, 0x00000803u);
  put_u32(imgs, static_cast<std::uint32_t>(d.size()));
  put_u32(imgs, static_cast<std::uint32_t>(d.height));
  put_u32(imgs, static_cast<std::uint32_t>(d.width));
  for (float v : d.pixels) {
    const unsigned char b =
        static_cast<unsigned char>(std::lround(v * 255.0f));
    imgs.write(reinterpret_cast<const char*>(&b), 1);
  }
  std::ofstream labs(labels_path, std::ios::binary);
  put_u32(labs, 0x00000801u);
  put_u32(labs, static_cast<std::uint32_t>(d.size()));
  for (int y : d.labels) {
    const unsigned char b = static_cast<unsigned char>(y);
    labs.write(reinterpret_cast<const char*>(&b), 1);
  }
}

// Zero-pads 28x28 images symmetrically to 32x32.
inline LabeledDataset resize_28_to_32(const LabeledDataset& d) {
  if (d.width != 28 || d.height != 28)
    throw ShapeMismatch("resize_28_to_32 expects 28x28 input, got " +
                        std::to_string(d.width) + "x" +
                        std::to_string(d.height));
  LabeledDataset out;
  out.width = 32;
  out.height = 32;
  out.labels = d.labels;
  out.name = d.name;
  out.pixels.assign(d.size() * 32 * 32, 0.0f);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (int r = 0; r < 28; ++r)
      std::copy_n(d.pixels.begin() + (i * 28 + r) * 28, 28,
                  out.pixels.begin() + (i * 32 * 32) + (r + 2) * 32 + 2);
  return out;
}

// Splits train/test sets into one single-class task per class, ascending.
inline TaskStream split_class_incremental(const LabeledDataset& train,
                                          const LabeledDataset& test,
                                          int num_classes) {
  for (int c = 0; c < num_classes; ++c)
    if (!train.label_set().count(c))
      throw MissingClass("class " + std::to_string(c) +
                         " absent from training data");
  TaskStream s;
  s.tasks.resize(static_cast<std::size_t>(num_classes));
  auto distribute = [&](const LabeledDataset& src, bool is_train) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      const int c = src.labels[i];
      if (c >= num_classes) continue;
      LabeledDataset& dst =
          is_train ? s.tasks[static_cast<std::size_t>(c)].train
                   : s.tasks[static_cast<std::size_t>(c)].test;
      dst.width = src.width;
      dst.height = src.height;
      dst.pixels.insert(dst.pixels.end(), src.image(i),
                        src.image(i) + src.image_dim());
      dst.labels.push_back(c);
    }
  };
  distribute(train, true);
  distribute(test, false);
  for (int c = 0; c < num_classes; ++c) {
    s.tasks[static_cast<std::size_t>(c)].train.name =
        "task" + std::to_string(c + 1) + "_train";
    s.tasks[static_cast<std::size_t>(c)].test.name =
        "task" + std::to_string(c + 1) + "_test";
  }
  return s;
}

// Keeps at most `cap` training images per class (cap <= 0 keeps everything).
inline LabeledDataset per_class_cap(const LabeledDataset& d, int cap) {
  if (cap <= 0) return d;
  LabeledDataset out;
  out.width = d.width;
  out.height = d.height;
  out.name = d.name;
  std::vector<int> counts(256, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (counts[static_cast<std::size_t>(d.labels[i])]++ >= cap) continue;
    out.pixels.insert(out.pixels.end(), d.image(i),
                      d.image(i) + d.image_dim());
    out.labels.push_back(d.labels[i]);
  }
  return out;
}

// ---- synthetic toy stream --------------------------------------------------

// Fast stand-in for the image datasets: each class renders a Gaussian bump at
// a class-specific grid position with jitter and pixel noise.
inline LabeledDataset toy_class(int class_id, int n, Rng& rng) {
  constexpr int W = 32;
  LabeledDataset d;
  d.name = "toy_class_" + std::to_string(class_id);
  d.pixels.reserve(static_cast<std::size_t>(n) * W * W);
  const double cx0 = 6.0 + 6.5 * (class_id % 4);
  const double cy0 = 6.0 + 9.0 * (class_id / 4);
  for (int i = 0; i < n; ++i) {
    const double cx = cx0 + 1.5 * (rng.uniform() - 0.5);
    const double cy = cy0 + 1.5 * (rng.uniform() - 0.5);
    const double amp = 0.75 + 0.2 * rng.uniform();
    const double sigma = 2.2 + 0.4 * rng.uniform();
    for (int y = 0; y < W; ++y)
      for (int x = 0; x < W; ++x) {
        const double dx = x - cx, dy = y - cy;
        double v = amp * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
        v += 0.03 * rng.normal();
        d.pixels.push_back(
            static_cast<float>(std::min(1.0, std::max(0.0, v))));
      }
    d.labels.push_back(class_id);
  }
  return d;
}

inline TaskStream toy_stream(int num_tasks, int samples_per_task, Rng& rng) {
  TaskStream s;
  for (int c = 0; c < num_tasks; ++c) {
    Task t;
    t.train = toy_class(c, samples_per_task, rng);
    t.test = toy_class(c, std::max(1, samples_per_task / 5), rng);
    t.test.name += "_test";
    s.tasks.push_back(std::move(t));
  }
  return s;
}

// Convenience loader: <root>/{train,t10k}-{images-idx3,labels-idx1}-ubyte,
// padded to 32x32. Works for MNIST and FashionMNIST directory layouts.
inline std::pair<LabeledDataset, LabeledDataset> load_mnist_dir(
    const std::string& root) {
  auto train = load_idx(root + "/train-images-idx3-ubyte",
                        root + "/train-labels-idx1-ubyte");
  auto test = load_idx(root + "/t10k-images-idx3-ubyte",
                       root + "/t10k-labels-idx1-ubyte");
  return {resize_28_to_32(train), resize_28_to_32(test)};
}

}  // namespace lifegen
