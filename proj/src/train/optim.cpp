#include "gnio/train/optim.hpp"

#include <cmath>
#include <numbers>

#include "gnio/error.hpp"

namespace gnio::train {

void ScheduleSpec::validate() const {
  if (!(lr_start > 0.0) || !(lr_peak > 0.0) || !(lr_min >= 0.0))
    throw ConfigError("schedule: learning rates must be positive");
  if (lr_start > lr_peak) throw ConfigError("schedule: lr_start exceeds lr_peak");
  if (!(warmup_epochs >= 0.0) || !(warmup_epochs < total_epochs))
    throw ConfigError("schedule: need 0 <= warmup_epochs < total_epochs");
}

double lr_at(double epoch, const ScheduleSpec& s) {
  if (!(epoch >= 0.0) || epoch > s.total_epochs)
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(s.total_epochs) + "]");
  if (epoch < s.warmup_epochs)
    return s.lr_start + (s.lr_peak - s.lr_start) * (epoch / s.warmup_epochs);
  const double x = (epoch - s.warmup_epochs) / (s.total_epochs - s.warmup_epochs);
  return s.lr_min + 0.5 * (s.lr_peak - s.lr_min) * (1.0 + std::cos(std::numbers::pi * x));
}

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].second;
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void Adam::save_state(ad::NamedTensors& out) const {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& [name, p] = params_[k];
    out.insert_or_assign("adam.m." + name, Tensor(p.shape(), m_[k]));
    out.insert_or_assign("adam.v." + name, Tensor(p.shape(), v_[k]));
  }
  out.insert_or_assign("adam.step", Tensor({1}, {static_cast<double>(t_)}));
}

void Adam::load_state(const ad::NamedTensors& in) {
  auto get = [&](const std::string& key, std::size_t n) -> std::span<const double> {
    const auto it = in.find(key);
    if (it == in.end()) throw ConfigError("optimizer state is missing '" + key + "'");
    if (it->second.numel() != n) throw ConfigError("optimizer state '" + key + "' has wrong size");
    return it->second.data();
  };
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& name = params_[k].first;
    const auto m = get("adam.m." + name, m_[k].size());
    const auto v = get("adam.v." + name, v_[k].size());
    m_[k].assign(m.begin(), m.end());
    v_[k].assign(v.begin(), v.end());
  }
  t_ = static_cast<std::uint64_t>(get("adam.step", 1)[0]);
}

double grad_norm(std::span<const Tensor> params) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.has_grad())
      for (double g : p.grad()) sq += g * g;
  return std::sqrt(sq);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params)
      if (p.has_grad())
        for (double& g : p.mutable_grad()) g *= f;
  }
  return norm;
}

}  // namespace gnio::train
