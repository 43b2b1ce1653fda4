#ifndef RSFT_NN_ADAM_HPP_
#define RSFT_NN_ADAM_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "rsft/nn/tape.hpp"

namespace rsft::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter name; the step
/// counter is shared by every parameter of the set it updates.
class Adam {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
  };

  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }

  void step(ParameterSet& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      if (!p.trainable) continue;
      auto it = moments_.find(name);
      if (it == moments_.end()) {
        it = moments_.emplace(name, Moments{Tensor(p.value.shape()), Tensor(p.value.shape())}).first;
      }
      auto& [m, v] = it->second;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        double g = p.grad[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = m[i] / c1;
        double vhat = v[i] / c2;
        p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  // Serializes as "<prefix><param>.adam_m", ".adam_v" plus "<prefix>adam_t".
  void export_state(std::map<std::string, Tensor>& out, const std::string& prefix) const {
    out[prefix + "adam_t"] = Tensor::scalar(static_cast<double>(t_));
    for (const auto& [name, mom] : moments_) {
      out[prefix + name + ".adam_m"] = mom.m;
      out[prefix + name + ".adam_v"] = mom.v;
    }
  }

  void import_state(const std::map<std::string, Tensor>& in, const std::string& prefix) {
    moments_.clear();
    t_ = 0;
    if (auto it = in.find(prefix + "adam_t"); it != in.end()) {
      t_ = static_cast<std::int64_t>(it->second.item());
    }
    const std::string tail_m = ".adam_m";
    for (const auto& [key, tensor] : in) {
      if (key.rfind(prefix, 0) != 0 || key.size() <= prefix.size() + tail_m.size()) continue;
      if (key.compare(key.size() - tail_m.size(), tail_m.size(), tail_m) != 0) continue;
      auto name = key.substr(prefix.size(), key.size() - prefix.size() - tail_m.size());
      auto v = in.find(prefix + name + ".adam_v");
      if (v == in.end()) continue;
      moments_[name] = Moments{tensor, v->second};
    }
  }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace rsft::nn

#endif  // RSFT_NN_ADAM_HPP_
