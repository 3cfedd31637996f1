#pragma once

#include <cmath>
#include <limits>

namespace gpo {

/// Natural log of |Gamma(x)|; thin wrapper so every caller shares one definition.
template <typename Scalar>
Scalar log_gamma(Scalar x) {
  return std::lgamma(x);
}

/// Digamma psi(x) for x > 0: upward recurrence to x >= 6, then the asymptotic series.
template <typename Scalar>
Scalar digamma(Scalar x) {
  if (!(x > Scalar(0))) return std::numeric_limits<Scalar>::quiet_NaN();
  Scalar acc = 0;
  while (x < Scalar(6)) {
    acc -= Scalar(1) / x;
    x += Scalar(1);
  }
  const Scalar inv = Scalar(1) / x;
  const Scalar inv2 = inv * inv;
  // Bernoulli-number tail: 1/12, 1/120, 1/252, 1/240, 1/132
  const Scalar tail =
      inv2 * (Scalar(1) / 12 -
              inv2 * (Scalar(1) / 120 -
                      inv2 * (Scalar(1) / 252 - inv2 * (Scalar(1) / 240 - inv2 * (Scalar(1) / 132)))));
  return acc + std::log(x) - Scalar(0.5) * inv - tail;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= 0) {
    const Scalar z = std::exp(-x);
    return Scalar(1) / (Scalar(1) + z);
  }
  const Scalar z = std::exp(x);
  return z / (Scalar(1) + z);
}

/// log(1 + exp(x)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  if (x > Scalar(30)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p) - std::log1p(-p);
}

}  // namespace gpo
