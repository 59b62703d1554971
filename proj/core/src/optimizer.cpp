#include "milqt/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "milqt/error.hpp"

namespace milqt {

double global_grad_norm(const std::vector<std::pair<std::string, Tensor*>>& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t->grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

Adamax::Adamax(std::vector<std::pair<std::string, Tensor*>> params, AdamaxConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (params_.empty()) throw ValidationError("optimizer has no parameters");
  if (cfg_.lr <= 0.0) throw ValidationError("learning rate must be positive");
  if (cfg_.beta1 <= 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 <= 0.0 || cfg_.beta2 >= 1.0) {
    throw ValidationError("betas must lie in (0, 1)");
  }
  m_.reserve(params_.size());
  u_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    if (!t->requires_grad()) {
      throw ContractError("parameter '" + name + "' does not track gradients");
    }
    m_.emplace_back(t->size(), 0.0);
    u_.emplace_back(t->size(), 0.0);
  }
}

double Adamax::step() {
  double norm = global_grad_norm(params_);
  if (!std::isfinite(norm)) throw DivergenceError("non-finite gradient norm");
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

  ++t_;
  double lr_t = cfg_.lr / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor* t = params_[i].second;
    const auto& grad = t->grad();
    const auto& vals = t->values();
    std::vector<double> next(vals.size());
    auto& m = m_[i];
    auto& u = u_[i];
    for (std::size_t k = 0; k < vals.size(); ++k) {
      double g = grad[k] * scale;
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      u[k] = std::max(cfg_.beta2 * u[k], std::fabs(g));
      next[k] = vals[k] - lr_t * m[k] / (u[k] + cfg_.eps);
      if (!std::isfinite(next[k])) {
        throw DivergenceError("parameter '" + params_[i].first + "' became non-finite at step " +
                              std::to_string(t_));
      }
    }
    *t = Tensor(t->shape(), std::move(next), true);
  }
  return norm;
}

std::vector<std::pair<std::string, Tensor>> Adamax::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(params_.size() * 2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Shape& shape = params_[i].second->shape();
    out.emplace_back(params_[i].first + ".m", Tensor(shape, m_[i]));
    out.emplace_back(params_[i].first + ".u", Tensor(shape, u_[i]));
  }
  return out;
}

void Adamax::restore(std::size_t step_count, const std::map<std::string, Tensor>& state) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (const char* suffix : {".m", ".u"}) {
      auto it = state.find(params_[i].first + suffix);
      if (it == state.end()) {
        throw ValidationError("optimizer state is missing '" + params_[i].first + suffix + "'");
      }
      if (it->second.size() != params_[i].second->size()) {
        throw ShapeError("optimizer state '" + it->first + "' has the wrong size");
      }
      auto& slot = suffix[1] == 'm' ? m_[i] : u_[i];
      slot = it->second.values();
    }
  }
  t_ = step_count;
}

}  // namespace milqt
