#ifndef RSFT_NN_LAYERS_HPP_
#define RSFT_NN_LAYERS_HPP_

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsft/nn/ops.hpp"

namespace rsft::nn {

enum class Mode { kTrain, kEval };

struct ForwardContext {
  Tape& tape;
  Mode mode = Mode::kTrain;
  // Off for passes whose batch statistics must not leak into evaluation.
  bool update_running_stats = true;

  bool training() const { return mode == Mode::kTrain; }
};

/// Shapes passed to output_shape() exclude the batch dimension.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Var forward(ForwardContext& ctx, Var x) const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual std::string describe() const = 0;
};

namespace detail {

inline void shape_error(const std::string& layer, const Shape& input, const std::string& need) {
  throw std::invalid_argument("[rsft::nn::" + layer + "] error: input " + shape_string(input) +
                              " but expected " + need);
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline void init_uniform(Tensor& t, int fan_in, std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = dist(rng);
}

}  // namespace detail

class Conv1d : public Layer {
 public:
  Conv1d(ParameterSet& ps, const std::string& name, int in_channels, int out_channels,
         int kernel, std::mt19937_64& rng)
      : in_(in_channels), out_(out_channels), kernel_(kernel),
        weight_(ps.add(name + ".weight", {out_channels, in_channels, kernel})),
        bias_(ps.add(name + ".bias", {out_channels})) {
    detail::init_uniform(weight_.value, in_channels * kernel, rng);
    detail::init_uniform(bias_.value, in_channels * kernel, rng);
  }
  Var forward(ForwardContext& ctx, Var x) const override {
    return conv1d(x, ctx.tape.parameter(weight_), ctx.tape.parameter(bias_));
  }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2 || in[0] != in_) {
      detail::shape_error("Conv1d", in, "[" + std::to_string(in_) + ", L]");
    }
    return {out_, in[1]};
  }
  std::string describe() const override {
    return "conv " + std::to_string(kernel_) + "/" + std::to_string(out_);
  }

 private:
  int in_, out_, kernel_;
  Parameter& weight_;
  Parameter& bias_;
};

class ConvTranspose1d : public Layer {
 public:
  ConvTranspose1d(ParameterSet& ps, const std::string& name, int in_channels, int out_channels,
                  int kernel, std::mt19937_64& rng)
      : in_(in_channels), out_(out_channels), kernel_(kernel),
        weight_(ps.add(name + ".weight", {in_channels, out_channels, kernel})),
        bias_(ps.add(name + ".bias", {out_channels})) {
    detail::init_uniform(weight_.value, in_channels * kernel, rng);
    detail::init_uniform(bias_.value, in_channels * kernel, rng);
  }
  Var forward(ForwardContext& ctx, Var x) const override {
    return conv1d_transpose(x, ctx.tape.parameter(weight_), ctx.tape.parameter(bias_));
  }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2 || in[0] != in_) {
      detail::shape_error("ConvTranspose1d", in, "[" + std::to_string(in_) + ", L]");
    }
    return {out_, in[1]};
  }
  std::string describe() const override {
    return "conv " + std::to_string(kernel_) + "/" + std::to_string(in_) + " transpose";
  }

 private:
  int in_, out_, kernel_;
  Parameter& weight_;
  Parameter& bias_;
};

class Dense : public Layer {
 public:
  Dense(ParameterSet& ps, const std::string& name, int in_features, int out_features,
        std::mt19937_64& rng)
      : in_(in_features), out_(out_features),
        weight_(ps.add(name + ".weight", {out_features, in_features})),
        bias_(ps.add(name + ".bias", {out_features})) {
    detail::init_uniform(weight_.value, in_features, rng);
    detail::init_uniform(bias_.value, in_features, rng);
  }
  Var forward(ForwardContext& ctx, Var x) const override {
    return dense(x, ctx.tape.parameter(weight_), ctx.tape.parameter(bias_));
  }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 1 || in[0] != in_) {
      detail::shape_error("Dense", in, "[" + std::to_string(in_) + "]");
    }
    return {out_};
  }
  std::string describe() const override { return "fc " + std::to_string(out_); }

 private:
  int in_, out_;
  Parameter& weight_;
  Parameter& bias_;
};

class BatchNorm : public Layer {
 public:
  BatchNorm(ParameterSet& ps, const std::string& name, int channels)
      : channels_(channels),
        gamma_(ps.add(name + ".gamma", {channels})),
        beta_(ps.add(name + ".beta", {channels})),
        running_mean_(ps.add(name + ".running_mean", {channels}, false)),
        running_var_(ps.add(name + ".running_var", {channels}, false)) {
    gamma_.value.fill(1.0);
    running_var_.value.fill(1.0);
  }
  Var forward(ForwardContext& ctx, Var x) const override {
    BatchNormOptions opt;
    opt.training = ctx.training();
    opt.update_running = ctx.update_running_stats;
    return batch_norm(x, ctx.tape.parameter(gamma_), ctx.tape.parameter(beta_), running_mean_,
                      running_var_, opt);
  }
  Shape output_shape(const Shape& in) const override {
    if (in.empty() || in.size() > 2 || in[0] != channels_) {
      detail::shape_error("BatchNorm", in, "[" + std::to_string(channels_) + ", ...]");
    }
    return in;
  }
  std::string describe() const override { return "bn"; }

 private:
  int channels_;
  Parameter& gamma_;
  Parameter& beta_;
  Parameter& running_mean_;
  Parameter& running_var_;
};

class MaxPool : public Layer {
 public:
  Var forward(ForwardContext&, Var x) const override { return max_pool(x).out; }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2 || in[1] < 2) detail::shape_error("MaxPool", in, "[C, L >= 2]");
    return {in[0], in[1] / 2};
  }
  std::string describe() const override { return "max-pool"; }
};

// Unpooling without paired indices: nearest-neighbour duplication.
class Upsample : public Layer {
 public:
  Var forward(ForwardContext&, Var x) const override { return upsample2(x); }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 2) detail::shape_error("Upsample", in, "[C, L]");
    return {in[0], 2 * in[1]};
  }
  std::string describe() const override { return "max-pool transpose"; }
};

enum class Activation { kRelu, kLeakyRelu, kSigmoid };

class ActivationLayer : public Layer {
 public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}
  Var forward(ForwardContext&, Var x) const override {
    switch (kind_) {
      case Activation::kRelu: return relu(x);
      case Activation::kLeakyRelu: return leaky_relu(x, 0.2);
      case Activation::kSigmoid: return sigmoid(x);
    }
    return x;
  }
  Shape output_shape(const Shape& in) const override { return in; }
  std::string describe() const override {
    switch (kind_) {
      case Activation::kRelu: return "relu";
      case Activation::kLeakyRelu: return "leaky_relu";
      case Activation::kSigmoid: return "sigmoid";
    }
    return "?";
  }

 private:
  Activation kind_;
};

class Reshape : public Layer {
 public:
  explicit Reshape(Shape target) : target_(std::move(target)) {}
  Var forward(ForwardContext&, Var x) const override {
    Shape s{x.dim(0)};
    s.insert(s.end(), target_.begin(), target_.end());
    return reshape(x, std::move(s));
  }
  Shape output_shape(const Shape& in) const override {
    if (shape_size(in) != shape_size(target_)) {
      detail::shape_error("Reshape", in, "size " + std::to_string(shape_size(target_)));
    }
    return target_;
  }
  std::string describe() const override { return "reshape " + shape_string(target_); }

 private:
  Shape target_;
};

/// Layers applied in order. Shapes are verified as layers are appended, so a
/// wiring mistake fails at construction.
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(Shape input) : input_(input), output_(std::move(input)) {}

  Sequential& append(std::unique_ptr<Layer> layer) {
    output_ = layer->output_shape(output_);
    layers_.push_back(std::move(layer));
    return *this;
  }

  Var forward(ForwardContext& ctx, Var x) const {
    Shape got(x.shape().begin() + 1, x.shape().end());
    if (got != input_) {
      throw std::invalid_argument("[rsft::nn::Sequential] error: input " + shape_string(got) +
                                  " but network expects " + shape_string(input_));
    }
    for (const auto& layer : layers_) x = layer->forward(ctx, x);
    return x;
  }

  const Shape& input_shape() const { return input_; }
  const Shape& output_shape() const { return output_; }
  std::size_t depth() const { return layers_.size(); }

  std::vector<std::string> describe() const {
    std::vector<std::string> out;
    for (const auto& layer : layers_) out.push_back(layer->describe());
    return out;
  }

 private:
  Shape input_;
  Shape output_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Fluent construction of a Sequential whose parameters live in `ps` under
/// `prefix.<layer>N`.
class NetBuilder {
 public:
  NetBuilder(ParameterSet& ps, std::string prefix, Shape input, std::mt19937_64& rng)
      : ps_(ps), prefix_(std::move(prefix)), rng_(rng), net_(std::move(input)) {}

  NetBuilder& conv(int filters, int kernel) {
    int in = channels("conv");
    return push(std::make_unique<Conv1d>(ps_, name("conv"), in, filters, kernel, rng_));
  }
  NetBuilder& conv_transpose(int out_channels, int kernel) {
    int in = channels("conv_transpose");
    return push(std::make_unique<ConvTranspose1d>(ps_, name("convt"), in, out_channels, kernel, rng_));
  }
  NetBuilder& dense(int features) {
    int in = static_cast<int>(shape_size(net_.output_shape()));
    if (net_.output_shape().size() != 1) flatten();
    return push(std::make_unique<Dense>(ps_, name("fc"), in, features, rng_));
  }
  NetBuilder& batch_norm() {
    return push(std::make_unique<BatchNorm>(ps_, name("bn"), net_.output_shape().at(0)));
  }
  NetBuilder& max_pool() { return push(std::make_unique<MaxPool>()); }
  NetBuilder& upsample() { return push(std::make_unique<Upsample>()); }
  NetBuilder& relu() { return push(std::make_unique<ActivationLayer>(Activation::kRelu)); }
  NetBuilder& leaky_relu() { return push(std::make_unique<ActivationLayer>(Activation::kLeakyRelu)); }
  NetBuilder& sigmoid() { return push(std::make_unique<ActivationLayer>(Activation::kSigmoid)); }
  NetBuilder& flatten() {
    return push(std::make_unique<Reshape>(Shape{static_cast<int>(shape_size(net_.output_shape()))}));
  }
  NetBuilder& reshape(Shape target) { return push(std::make_unique<Reshape>(std::move(target))); }

  Sequential build() { return std::move(net_); }

 private:
  NetBuilder& push(std::unique_ptr<Layer> layer) {
    net_.append(std::move(layer));
    return *this;
  }
  std::string name(const char* kind) { return prefix_ + "." + kind + std::to_string(counter_++); }
  int channels(const char* what) const {
    if (net_.output_shape().size() != 2) {
      detail::shape_error(what, net_.output_shape(), "[C, L]");
    }
    return net_.output_shape()[0];
  }

  ParameterSet& ps_;
  std::string prefix_;
  std::mt19937_64& rng_;
  Sequential net_;
  int counter_ = 0;
};

}  // namespace rsft::nn

#endif  // RSFT_NN_LAYERS_HPP_
