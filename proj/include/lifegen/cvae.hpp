#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lifegen/adam.hpp"
#include "lifegen/ops.hpp"
#include "lifegen/rng.hpp"
#include "lifegen/tensor.hpp"

namespace lifegen {

struct CvaeConfig {
  int image_dim = 32 * 32;
  int latent_dim = 32;
  int num_classes = 10;
  int label_embed = 32;
  int enc_hidden = 256;
  int dec_hidden = 256;
  // true: label embedded in both encoder and decoder (the variant under
  // study). false: baseline CVAE, encoder ignores the label and the decoder
  // consumes the raw one-hot (one less layer in encoding the label).
  bool both_label_paths = true;
};

struct LatentStats {
  Tensor mu;      // [B, latent_dim]
  Tensor logvar;  // [B, latent_dim], clamped to [-10, 10]
};

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    w = Tensor::zeros({in, out});
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    for (auto& v : w.data())
      v = bound * (2.0f * static_cast<float>(rng.uniform()) - 1.0f);
    b = Tensor::zeros({out});
    w.set_requires_grad(true);
    b.set_requires_grad(true);
  }

  Tensor forward(const Tensor& x) const { return add(matmul(x, w), b); }
};

// Conditional VAE with label conditioning on the encoder and/or decoder side.
class CvaeModel {
 public:
  explicit CvaeModel(const CvaeConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int fuse_enc =
        cfg.enc_hidden + (cfg.both_label_paths ? cfg.label_embed : 0);
    const int fuse_dec =
        cfg.dec_hidden +
        (cfg.both_label_paths ? cfg.label_embed : cfg.num_classes);
    enc_img_ = Linear(cfg.image_dim, cfg.enc_hidden, rng);
    if (cfg.both_label_paths) {
      enc_lab_ = Linear(cfg.num_classes, cfg.label_embed, rng);
      dec_lab_ = Linear(cfg.num_classes, cfg.label_embed, rng);
    }
    enc_mu_ = Linear(fuse_enc, cfg.latent_dim, rng);
    enc_logvar_ = Linear(fuse_enc, cfg.latent_dim, rng);
    dec_z_ = Linear(cfg.latent_dim, cfg.dec_hidden, rng);
    dec_h_ = Linear(fuse_dec, cfg.dec_hidden, rng);
    dec_out_ = Linear(cfg.dec_hidden, cfg.image_dim, rng);
  }

  const CvaeConfig& config() const { return cfg_; }

  Tensor one_hot(const std::vector<int>& labels) const {
    Tensor t = Tensor::zeros({static_cast<int>(labels.size()),
                              cfg_.num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= cfg_.num_classes)
        throw UnknownLabel("class id " + std::to_string(labels[i]) +
                           " outside vocabulary of size " +
                           std::to_string(cfg_.num_classes));
      t.data()[i * static_cast<std::size_t>(cfg_.num_classes) +
               static_cast<std::size_t>(labels[i])] = 1.0f;
    }
    return t;
  }

  LatentStats encode(const Tensor& x, const std::vector<int>& labels) const {
    if (x.rank() != 2 || x.dim(1) != cfg_.image_dim)
      throw ShapeMismatch("encode: expected [B," +
                          std::to_string(cfg_.image_dim) + "], got " +
                          shape_str(x.shape()));
    if (x.dim(0) != static_cast<int>(labels.size()))
      throw ShapeMismatch("encode: batch size disagrees with label count");
    Tensor h = leaky_relu(enc_img_.forward(x));
    if (cfg_.both_label_paths) {
      Tensor hl = leaky_relu(enc_lab_.forward(one_hot(labels)));
      h = concat(h, hl, 1);
    }
    LatentStats s;
    s.mu = enc_mu_.forward(h);
    s.logvar = clamp(enc_logvar_.forward(h), -10.0f, 10.0f);
    return s;
  }

  Tensor decode(const Tensor& z, const std::vector<int>& labels) const {
    if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim)
      throw ShapeMismatch("decode: expected [B," +
                          std::to_string(cfg_.latent_dim) + "], got " +
                          shape_str(z.shape()));
    if (z.dim(0) != static_cast<int>(labels.size()))
      throw ShapeMismatch("decode: batch size disagrees with label count");
    Tensor h = leaky_relu(dec_z_.forward(z));
    Tensor y = cfg_.both_label_paths
                   ? leaky_relu(dec_lab_.forward(one_hot(labels)))
                   : one_hot(labels);
    h = leaky_relu(dec_h_.forward(concat(h, y, 1)));
    return sigmoid(dec_out_.forward(h));
  }

  // Conditional generation: decode n prior draws for the given label.
  Tensor sample(int label, int n, Rng& rng) const {
    NoGradGuard ng;
    Tensor z = gaussian({n, cfg_.latent_dim}, rng);
    return decode(z, std::vector<int>(static_cast<std::size_t>(n), label));
  }

  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> ps;
    auto push = [&ps](const std::string& n, const Linear& l) {
      ps.emplace_back(n + ".w", l.w);
      ps.emplace_back(n + ".b", l.b);
    };
    push("enc_img", enc_img_);
    if (cfg_.both_label_paths) push("enc_lab", enc_lab_);
    push("enc_mu", enc_mu_);
    push("enc_logvar", enc_logvar_);
    push("dec_z", dec_z_);
    if (cfg_.both_label_paths) push("dec_lab", dec_lab_);
    push("dec_h", dec_h_);
    push("dec_out", dec_out_);
    return ps;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> ps;
    for (auto& [n, t] : named_params()) ps.push_back(t);
    return ps;
  }

  std::vector<std::pair<std::string, Tensor>> named_encoder_params() const {
    std::vector<std::pair<std::string, Tensor>> ps;
    for (auto& [n, t] : named_params())
      if (n.rfind("enc_", 0) == 0) ps.emplace_back(n, t);
    return ps;
  }

  std::vector<std::pair<std::string, Tensor>> named_decoder_params() const {
    std::vector<std::pair<std::string, Tensor>> ps;
    for (auto& [n, t] : named_params())
      if (n.rfind("dec_", 0) == 0) ps.emplace_back(n, t);
    return ps;
  }

  std::int64_t param_count() const {
    std::int64_t n = 0;
    for (const Tensor& p : params()) n += p.numel();
    return n;
  }

  // Overwrites parameters by name (shape-checked).
  void load_params(
      const std::vector<std::pair<std::string, std::vector<float>>>& vals) {
    auto mine = named_params();
    for (const auto& [name, data] : vals) {
      bool found = false;
      for (auto& [n, t] : mine)
        if (n == name) {
          if (t.data().size() != data.size())
            throw ShapeMismatch("load_params: size mismatch for " + name);
          t.data() = data;
          found = true;
          break;
        }
      if (!found) throw BadValue("load_params: unknown parameter " + name);
    }
  }

 private:
  CvaeConfig cfg_;
  Linear enc_img_, enc_lab_, enc_mu_, enc_logvar_;
  Linear dec_z_, dec_lab_, dec_h_, dec_out_;
};

inline Tensor reparameterize(const LatentStats& stats, const Tensor& eps) {
  if (eps.shape() != stats.mu.shape())
    throw ShapeMismatch("reparameterize: eps shape " + shape_str(eps.shape()) +
                        " vs mu " + shape_str(stats.mu.shape()));
  return add(stats.mu, mul(exp_op(scale(stats.logvar, 0.5f)), eps));
}

// Closed-form KL[N(mu, exp(logvar)) || N(0, 1)], batch mean of the
// per-sample sum over latent dimensions.
inline Tensor kl_to_prior(const LatentStats& stats) {
  Tensor s = sub(sub(add(mul(stats.mu, stats.mu), exp_op(stats.logvar)),
                     stats.logvar),
                 Tensor::scalar(1.0f));
  Tensor per_sample = s.rank() == 2 ? reduce_sum(s, 1) : reduce_sum(s);
  return scale(reduce_mean(per_sample), 0.5f);
}

struct LossBreakdown {
  Tensor reconstruction;
  Tensor variational;
  Tensor total;
  Tensor reconstructed;  // x_hat, reusable by downstream losses
  LatentStats stats;
};

// Sum-over-pixels, mean-over-batch squared error (MSE alternative to BCE).
inline Tensor mse_recon(const Tensor& prediction, const Tensor& target) {
  Tensor d = sub(prediction, target);
  return reduce_mean(reduce_sum(mul(d, d), 1), 0);
}

inline LossBreakdown cvae_loss(const CvaeModel& model, const Tensor& x,
                               const std::vector<int>& labels, Rng& rng,
                               bool use_mse = false, int k_samples = 1) {
  LossBreakdown out;
  out.stats = model.encode(x, labels);
  Tensor recon_acc;
  for (int k = 0; k < k_samples; ++k) {
    Tensor eps = gaussian(out.stats.mu.shape(), rng);
    Tensor xhat = model.decode(reparameterize(out.stats, eps), labels);
    Tensor r = use_mse ? mse_recon(xhat, x) : bce(xhat, x);
    out.reconstructed = xhat;
    recon_acc = (k == 0) ? r : add(recon_acc, r);
  }
  out.reconstruction = k_samples == 1
                           ? recon_acc
                           : scale(recon_acc, 1.0f / static_cast<float>(k_samples));
  out.variational = kl_to_prior(out.stats);
  out.total = add(out.reconstruction, out.variational);
  return out;
}

}  // namespace lifegen
