#ifndef RSFT_MODEL_ZOO_HPP_
#define RSFT_MODEL_ZOO_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "rsft/nn/checkpoint.hpp"
#include "rsft/nn/layers.hpp"
#include "rsft/read_class.hpp"

namespace rsft {

/// Sizes shared by every architecture. Channel and kernel plans are fixed:
/// conv 5/16, conv 3/32, conv 3/64 with two 2x pools in between.
struct ModelConfig {
  int length = 500;
  int classes = kNumClasses;
  int z1_dim = 10;
  int z2_dim = 3;
  int noise_dim = 100;

  void validate() const {
    if (length < 4 || length % 4 != 0) {
      throw std::invalid_argument("[rsft::ModelConfig] error: length " + std::to_string(length) +
                                  " must be a positive multiple of 4");
    }
    if (classes < 2) throw std::invalid_argument("[rsft::ModelConfig] error: classes < 2");
    if (z1_dim < 1 || z2_dim < 1 || noise_dim < 1) {
      throw std::invalid_argument("[rsft::ModelConfig] error: latent sizes must be positive");
    }
  }

  // Positions left after the two pools, and the width of the flattened trunk.
  int pooled_length() const { return length / 4; }
  int trunk_width() const { return pooled_length() * 64; }

  void write(std::map<std::string, std::string>& header) const {
    header["length"] = std::to_string(length);
    header["classes"] = std::to_string(classes);
    header["z1_dim"] = std::to_string(z1_dim);
    header["z2_dim"] = std::to_string(z2_dim);
    header["noise_dim"] = std::to_string(noise_dim);
  }

  static ModelConfig read(const std::map<std::string, std::string>& header) {
    auto get = [&](const char* key) {
      auto it = header.find(key);
      if (it == header.end()) {
        throw DataError(std::string("[rsft::ModelConfig] error: checkpoint header lacks ") + key);
      }
      return std::stoi(it->second);
    };
    ModelConfig cfg{get("length"), get("classes"), get("z1_dim"), get("z2_dim"), get("noise_dim")};
    cfg.validate();
    return cfg;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Default signal lengths: 500 feeds "fc 8000" (125 x 64) in the
// classifier/VAE family, 100 feeds "fc 1600" (25 x 64) in the GAN.
inline constexpr int kDefaultLength = 500;
inline constexpr int kDefaultGanLength = 100;

namespace detail {

inline void export_params(const nn::ParameterSet& ps, const std::string& prefix,
                          std::map<std::string, nn::Tensor>& out) {
  for (const auto& [name, p] : ps) out[prefix + name] = p.value;
}

inline nn::Sequential conv_trunk(nn::ParameterSet& ps, const std::string& prefix,
                                 const ModelConfig& cfg, std::mt19937_64& rng) {
  return nn::NetBuilder(ps, prefix, {1, cfg.length}, rng)
      .conv(16, 5).relu().max_pool()
      .conv(32, 3).relu().max_pool()
      .conv(64, 3).relu()
      .flatten()
      .dense(256).relu()
      .build();
}

}  // namespace detail

/// Supervised baseline: conv trunk, fc 256, fc K logits.
class FeedForwardNet {
 public:
  explicit FeedForwardNet(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    trunk_ = detail::conv_trunk(params_, "trunk", cfg, rng);
    head_ = nn::NetBuilder(params_, "head", trunk_.output_shape(), rng).dense(cfg.classes).build();
  }

  nn::Var logits(nn::ForwardContext& ctx, nn::Var x) const {
    return head_.forward(ctx, trunk_.forward(ctx, x));
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  ModelConfig cfg_;
  nn::ParameterSet params_;
  nn::Sequential trunk_;
  nn::Sequential head_;
};

struct GaussianCode {
  nn::Var mu;
  nn::Var logvar;  // clamped to [-10, 10]
};

/// Convolutional VAE used as feature extractor. The encoder's single "fc 10"
/// is realized as two heads (mean and log-variance).
class M1Model {
 public:
  explicit M1Model(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    trunk_ = detail::conv_trunk(params_, "enc", cfg, rng);
    mu_ = nn::NetBuilder(params_, "enc_mu", trunk_.output_shape(), rng).dense(cfg.z1_dim).build();
    logvar_ = nn::NetBuilder(params_, "enc_logvar", trunk_.output_shape(), rng).dense(cfg.z1_dim).build();
    decoder_ = nn::NetBuilder(params_, "dec", {cfg.z1_dim}, rng)
                   .dense(cfg.trunk_width()).relu()
                   .reshape({64, cfg.pooled_length()})
                   .conv_transpose(32, 3).relu().upsample()
                   .conv_transpose(16, 3).relu().upsample()
                   .conv_transpose(1, 5)
                   .flatten()
                   .dense(cfg.length)
                   .build();
  }

  GaussianCode encode(nn::ForwardContext& ctx, nn::Var x) const {
    auto h = trunk_.forward(ctx, x);
    return {mu_.forward(ctx, h),
            nn::clamp(logvar_.forward(ctx, h), nn::kLogVarMin, nn::kLogVarMax)};
  }

  // Bernoulli logits over the L positions; sigmoid gives the reconstruction.
  nn::Var decode_logits(nn::ForwardContext& ctx, nn::Var z) const { return decoder_.forward(ctx, z); }
  nn::Var decode(nn::ForwardContext& ctx, nn::Var z) const { return nn::sigmoid(decode_logits(ctx, z)); }

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const nn::Sequential& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  nn::ParameterSet params_;
  nn::Sequential trunk_, mu_, logvar_, decoder_;
};

/// Semi-supervised generative model over M1 features z1. Encoder q(z2|z1,y)
/// and decoder p(z1|z2,y) condition on y by concatenating its one-hot code;
/// the classifier q(y|z1) sees z1 alone.
class M2Model {
 public:
  explicit M2Model(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    encoder_ = nn::NetBuilder(params_, "enc", {cfg.z1_dim + cfg.classes}, rng)
                   .dense(64).relu().dense(64).relu().build();
    mu_ = nn::NetBuilder(params_, "enc_mu", {64}, rng).dense(cfg.z2_dim).build();
    logvar_ = nn::NetBuilder(params_, "enc_logvar", {64}, rng).dense(cfg.z2_dim).build();
    decoder_ = nn::NetBuilder(params_, "dec", {cfg.z2_dim + cfg.classes}, rng)
                   .dense(64).relu().dense(64).relu().dense(cfg.z1_dim).build();
    classifier_ = nn::NetBuilder(params_, "cls", {cfg.z1_dim}, rng)
                      .dense(64).relu().dense(64).relu().dense(cfg.classes).build();
  }

  // z1 [B, z1], y one-hot [B, K]
  GaussianCode encode(nn::ForwardContext& ctx, nn::Var z1, nn::Var y) const {
    auto h = encoder_.forward(ctx, nn::concat_cols(z1, y));
    return {mu_.forward(ctx, h),
            nn::clamp(logvar_.forward(ctx, h), nn::kLogVarMin, nn::kLogVarMax)};
  }
  nn::Var decode(nn::ForwardContext& ctx, nn::Var z2, nn::Var y) const {
    return decoder_.forward(ctx, nn::concat_cols(z2, y));
  }
  nn::Var class_logits(nn::ForwardContext& ctx, nn::Var z1) const {
    return classifier_.forward(ctx, z1);
  }

  int encoder_input_width() const { return encoder_.input_shape().at(0); }
  int decoder_output_width() const { return decoder_.output_shape().at(0); }

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  ModelConfig cfg_;
  nn::ParameterSet params_;
  nn::Sequential encoder_, mu_, logvar_, decoder_, classifier_;
};

/// z [B, noise] -> sample [B, L] in (0, 1).
class Generator {
 public:
  explicit Generator(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    net_ = nn::NetBuilder(params_, "gen", {cfg.noise_dim}, rng)
               .dense(cfg.trunk_width()).batch_norm().relu()
               .reshape({64, cfg.pooled_length()})
               .conv_transpose(32, 3).batch_norm().relu()
               .upsample().batch_norm()
               .conv_transpose(16, 3).batch_norm().relu()
               .upsample().batch_norm()
               .conv_transpose(1, 5)
               .flatten()
               .dense(cfg.length)
               .sigmoid()
               .build();
  }

  nn::Var sample(nn::ForwardContext& ctx, nn::Var z) const { return net_.forward(ctx, z); }

  const ModelConfig& config() const { return cfg_; }
  const nn::Sequential& net() const { return net_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  ModelConfig cfg_;
  nn::ParameterSet params_;
  nn::Sequential net_;
};

/// K + 1 logits: one per class plus a final "fake" logit.
class Discriminator {
 public:
  struct Output {
    nn::Var logits;
    nn::Var features;  // penultimate fc 1024 activations
  };

  explicit Discriminator(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    trunk_ = nn::NetBuilder(params_, "disc", {1, cfg.length}, rng)
                 .conv(16, 5).batch_norm().leaky_relu()
                 .max_pool().batch_norm()
                 .conv(32, 3).batch_norm().leaky_relu()
                 .max_pool().batch_norm()
                 .flatten()
                 .dense(256).batch_norm().leaky_relu()
                 .dense(1024).leaky_relu()
                 .build();
    head_ = nn::NetBuilder(params_, "head", trunk_.output_shape(), rng)
                .dense(cfg.classes + 1)
                .build();
  }

  Output forward(nn::ForwardContext& ctx, nn::Var x) const {
    auto features = trunk_.forward(ctx, x);
    return {head_.forward(ctx, features), features};
  }

  int fake_index() const { return cfg_.classes; }
  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  ModelConfig cfg_;
  nn::ParameterSet params_;
  nn::Sequential trunk_, head_;
};

}  // namespace rsft

#endif  // RSFT_MODEL_ZOO_HPP_
