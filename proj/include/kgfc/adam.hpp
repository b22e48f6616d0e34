#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace kgfc {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam step over a flat parameter block. `step` is the
/// 1-based step count after incrementing.
template <class Real>
void adam_update(std::span<Real> params, std::span<const Real> grad, std::span<Real> m, std::span<Real> v,
                 std::uint64_t step, const AdamHyper& hp) {
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    const double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
    const double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
    m[i] = static_cast<Real>(mi);
    v[i] = static_cast<Real>(vi);
    params[i] = static_cast<Real>(params[i] - hp.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + hp.epsilon));
  }
}

}  // namespace kgfc
