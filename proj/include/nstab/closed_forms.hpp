#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "nstab/error.hpp"

namespace nstab {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(kTwoPi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// E[ReLU(X) ReLU(Y)] for rho-correlated standard normals:
/// (1/2pi)(sqrt(1 - rho^2) + rho (pi - arccos rho)). The endpoints return their limits.
inline double relu_stability(double rho) {
  detail::require(rho >= -1.0 && rho <= 1.0, "relu stability: rho must lie in [-1, 1]");
  if (rho == 1.0) return 0.5;
  if (rho == -1.0) return 0.0;
  return (std::sqrt(1.0 - rho * rho) + rho * (std::numbers::pi - std::acos(rho))) / kTwoPi;
}

/// Second-order expansion of relu_stability around rho = 0.
inline double relu_stability_taylor(double rho) {
  detail::require(rho >= -1.0 && rho <= 1.0, "relu taylor: rho must lie in [-1, 1]");
  return 1.0 / kTwoPi + rho / 4.0 + rho * rho / (4.0 * std::numbers::pi);
}

/// Large-d limit of an attention layer's entrywise stability with W_Q W_K^T = I.
inline double attention_identity_stability(double rho, double wv_col_norm_sq) {
  detail::require(rho >= 0.0 && rho <= 1.0, "attention identity: rho must lie in [0, 1]");
  detail::require(wv_col_norm_sq >= 0.0, "attention identity: column norm must be >= 0");
  return rho * wv_col_norm_sq;
}

namespace detail {

// Probability that X > dh and Y > dk for standard normals with correlation r (Genz, BVNU:
// Drezner-Wesolowsky with Gauss-Legendre quadrature, double precision).
inline double bvnu(double dh, double dk, double r) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (dh == inf || dk == inf) return 0.0;
  if (dh == -inf) return dk == -inf ? 1.0 : normal_cdf(-dk);
  if (dk == -inf) return normal_cdf(-dh);
  if (r == 0.0) return normal_cdf(-dh) * normal_cdf(-dk);

  static constexpr std::array<double, 3> w6{0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static constexpr std::array<double, 3> x6{0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
  static constexpr std::array<double, 6> w12{0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                             0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
  static constexpr std::array<double, 6> x12{0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                             0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
  static constexpr std::array<double, 10> w20{0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                              0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                              0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                              0.1527533871307259};
  static constexpr std::array<double, 10> x20{0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                              0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                              0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                              0.07652652113349733};
  std::vector<double> w, x;
  auto load = [&](const auto& ww, const auto& xx) {
    for (std::size_t i = 0; i < ww.size(); ++i) {
      w.push_back(ww[i]);
      x.push_back(1.0 - xx[i]);
    }
    for (std::size_t i = 0; i < ww.size(); ++i) {
      w.push_back(ww[i]);
      x.push_back(1.0 + xx[i]);
    }
  };
  const double ar = std::abs(r);
  if (ar < 0.3) {
    load(w6, x6);
  } else if (ar < 0.75) {
    load(w12, x12);
  } else {
    load(w20, x20);
  }

  double h = dh, k = dk, hk = h * k, bvn = 0.0;
  if (ar < 0.925) {
    const double hs = (h * h + k * k) / 2.0, asr = std::asin(r) / 2.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double sn = std::sin(asr * x[i]);
      bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    bvn = bvn * asr / kTwoPi + normal_cdf(-h) * normal_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (ar < 1.0) {
      const double as = 1.0 - r * r;
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      double asr = -(bs / as + hk) / 2.0;
      const double c = (4.0 - hk) / 8.0, d = (12.0 - hk) / 80.0;
      if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      if (hk > -100.0) {
        const double b = std::sqrt(bs);
        const double sp = std::sqrt(kTwoPi) * normal_cdf(-b / a);
        bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      a /= 2.0;
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double xs = (a * x[i]) * (a * x[i]);
        asr = -(bs / xs + hk) / 2.0;
        if (asr <= -100.0) continue;
        const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
        const double rs = std::sqrt(1.0 - xs);
        const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
        acc += w[i] * std::exp(asr) * (sp - ep);
      }
      bvn = (a * acc - bvn) / kTwoPi;
    }
    if (r > 0.0) {
      bvn += normal_cdf(-std::max(h, k));
    } else if (h >= k) {
      bvn = -bvn;
    } else {
      const double L = h < 0.0 ? normal_cdf(k) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-k);
      bvn = L - bvn;
    }
  }
  return std::clamp(bvn, 0.0, 1.0);
}

}  // namespace detail

/// Joint CDF P(X <= x, Y <= y) of a standard bivariate normal with correlation c, |c| < 1.
inline double bvn_cdf(double c, double x, double y) {
  detail::require(std::abs(c) < 1.0, "bvn_cdf: |c| must be < 1");
  return detail::bvnu(-x, -y, c);
}

/// Density of the standard bivariate normal with correlation c.
inline double bvn_pdf(double c, double x, double y) {
  detail::require(std::abs(c) < 1.0, "bvn_pdf: |c| must be < 1");
  const double q = (x * x - 2.0 * c * x * y + y * y) / (1.0 - c * c);
  return std::exp(-0.5 * q) / (kTwoPi * std::sqrt(1.0 - c * c));
}

struct QuadResult {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
  bool converged = true;
};

namespace detail {

// Adaptive Gauss-Kronrod (7, 15) on [a, b] with a global bisection queue.
inline QuadResult gauss_kronrod(const std::function<double(double)>& f, double a, double b, double abs_tol,
                                int max_intervals = 2000) {
  static constexpr std::array<double, 8> xk{0.991455371120812639, 0.949107912342758525, 0.864864423359769073,
                                            0.741531185599394440, 0.586087235467691130, 0.405845151377397167,
                                            0.207784955007898468, 0.000000000000000000};
  static constexpr std::array<double, 8> wk{0.022935322010529225, 0.063092092629978553, 0.104790010322250184,
                                            0.140653259715525919, 0.169004726639267903, 0.190350578064785410,
                                            0.204432940075298892, 0.209482141084727828};
  static constexpr std::array<double, 4> wg{0.129484966168869693, 0.279705391489276668, 0.381830050505118945,
                                            0.417959183673469388};
  struct Piece {
    double a, b, value, error;
  };
  auto rule = [&](double lo, double hi) {
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    const double fc = f(c);
    double kr = wk[7] * fc, ga = wg[3] * fc;
    for (int j = 0; j < 7; ++j) {
      const double f1 = f(c - h * xk[static_cast<std::size_t>(j)]);
      const double f2 = f(c + h * xk[static_cast<std::size_t>(j)]);
      kr += wk[static_cast<std::size_t>(j)] * (f1 + f2);
      if (j % 2 == 1) ga += wg[static_cast<std::size_t>(j / 2)] * (f1 + f2);
    }
    return Piece{lo, hi, kr * h, std::abs((kr - ga) * h)};
  };
  std::vector<Piece> pieces{rule(a, b)};
  auto totals = [&] {
    QuadResult r;
    for (const auto& p : pieces) {
      r.value += p.value;
      r.error += p.error;
    }
    return r;
  };
  QuadResult r = totals();
  while (r.error > abs_tol) {
    if (static_cast<int>(pieces.size()) >= max_intervals) {
      r.converged = false;
      return r;
    }
    auto worst = std::max_element(pieces.begin(), pieces.end(),
                                   [](const Piece& p, const Piece& q) { return p.error < q.error; });
    const double mid = 0.5 * (worst->a + worst->b);
    const Piece left = rule(worst->a, mid), right = rule(mid, worst->b);
    *worst = left;
    pieces.push_back(right);
    r = totals();
  }
  return r;
}

}  // namespace detail

inline constexpr double kPatternAgreementTol = 1e-5;

/// s(rho) = n * integral of Phi_c(x, y)^(n-1) f_c(x, y) over R^2 with c = rho^2: the probability
/// that the attention argmax of a row is unchanged under rho-correlated noise. The integral is
/// taken in whitened coordinates u = (x + y)/sqrt(2(1 + c)), v = (x - y)/sqrt(2(1 - c)), where
/// f_c dx dy becomes phi(u) phi(v) du dv, truncated to [-8, 8]^2.
inline QuadResult pattern_agreement_s_detailed(int n, double rho, double abs_tol = kPatternAgreementTol) {
  detail::require(n >= 2, "pattern agreement: n must be >= 2");
  detail::require(rho >= 0.0 && rho <= 1.0, "pattern agreement: rho must lie in [0, 1]");
  const double c = rho * rho;
  if (c >= 1.0) return {1.0, 0.0, true};
  const double su = std::sqrt(2.0 * (1.0 + c)) / 2.0, sv = std::sqrt(2.0 * (1.0 - c)) / 2.0;
  constexpr double lim = 8.0;
  // Tail mass outside the box, bounded by the Gaussian tails of u and v.
  const double trunc = 4.0 * normal_cdf(-lim);
  bool ok = true;
  double inner_err = 0.0;
  auto outer = [&](double u) {
    auto inner = [&](double v) {
      const double x = su * u + sv * v, y = su * u - sv * v;
      return std::pow(bvn_cdf(c, x, y), n - 1) * normal_pdf(v);
    };
    const QuadResult in = detail::gauss_kronrod(inner, -lim, lim, 0.25 * abs_tol / n);
    ok = ok && in.converged;
    inner_err = std::max(inner_err, in.error);
    return in.value * normal_pdf(u);
  };
  QuadResult out = detail::gauss_kronrod(outer, -lim, lim, 0.25 * abs_tol / n);
  out.value *= n;
  out.error = n * (out.error + inner_err) + trunc;
  out.converged = out.converged && ok && out.error <= abs_tol;
  return out;
}

inline double pattern_agreement_s(int n, double rho, double abs_tol = kPatternAgreementTol) {
  const QuadResult r = pattern_agreement_s_detailed(n, rho, abs_tol);
  if (!r.converged) {
    throw NumericalFailure("pattern agreement integral did not converge: achieved error " + std::to_string(r.error) +
                           " > target " + std::to_string(abs_tol));
  }
  return r.value;
}

/// Large-d entrywise stability of attention with unstructured Gaussian W_Q W_K^T.
inline double attention_unstructured_stability(int n, double rho, double wv_col_norm_sq) {
  detail::require(wv_col_norm_sq >= 0.0, "attention unstructured: column norm must be >= 0");
  return rho * pattern_agreement_s(n, rho) * wv_col_norm_sq;
}

struct RecurrenceTrace {
  double rho0 = 0.0;
  double gamma = 1.0;
  std::vector<double> values;  // rho_1 .. rho_L
  double fixed_point = 0.0;    // limit of the iteration, converged to 1e-12
  double proxy_fixed_point = 0.0;  // fixed point of the linearized (Taylor) map
};

namespace detail {
inline double iterate_to_fixed_point(const std::function<double(double)>& map, double start) {
  double r = start;
  for (int i = 0; i < 100000; ++i) {
    const double next = map(r);
    if (std::abs(next - r) < 1e-12) return next;
    r = next;
  }
  throw NumericalFailure("recurrence did not converge to 1e-12");
}
}  // namespace detail

/// rho_l = relu_stability(gamma^2 rho_{l-1}) for l = 1..L. With gamma = 1 this is the
/// depth recurrence of a deep ReLU network; proxy fixed point 2 / (pi (4 - gamma^2)).
inline RecurrenceTrace gamma_recurrence(double rho0, double gamma, int L) {
  detail::require(rho0 >= 0.0 && rho0 <= 1.0, "recurrence: rho0 must lie in [0, 1]");
  detail::require(gamma > 0.0 && gamma <= 1.0, "recurrence: gamma must lie in (0, 1]");
  detail::require(L >= 1, "recurrence: L must be >= 1");
  const double g2 = gamma * gamma;
  auto map = [g2](double r) { return relu_stability(g2 * r); };
  RecurrenceTrace t;
  t.rho0 = rho0;
  t.gamma = gamma;
  double r = rho0;
  for (int l = 0; l < L; ++l) t.values.push_back(r = map(r));
  t.fixed_point = detail::iterate_to_fixed_point(map, r);
  t.proxy_fixed_point = 2.0 / (std::numbers::pi * (4.0 - g2));
  return t;
}

inline RecurrenceTrace mlp_recurrence(double rho0, int L) { return gamma_recurrence(rho0, 1.0, L); }

/// Affine proxy rho_l = 1/(2pi) + rho_{l-1}/4 started at rho_1, in closed form:
/// rho_l = 2/(3pi) + (rho_1 - 2/(3pi)) 4^{-(l-1)}.
inline RecurrenceTrace linear_proxy_recurrence(double rho1, int L) {
  detail::require(L >= 1, "recurrence: L must be >= 1");
  const double fp = 2.0 / (3.0 * std::numbers::pi);
  RecurrenceTrace t;
  t.rho0 = rho1;
  for (int l = 1; l <= L; ++l) t.values.push_back(fp + (rho1 - fp) * std::pow(0.25, l - 1));
  t.fixed_point = fp;
  t.proxy_fixed_point = fp;
  return t;
}

struct TailMassBounds {
  double from_influence = 0.0;  // I[f] / (T ||f||^2)
  double from_stability = 0.0;  // delta / (1 - rho^T), delta = 1 - Stab / ||f||^2
};

/// Fraction of Fourier weight at degree >= T implied by total influence (Markov on the degree
/// distribution) and by noise stability.
inline TailMassBounds tail_mass_comparison(double total_influence, double stability, double rho, int degree_cutoff,
                                           double norm_sq = 1.0) {
  detail::require(total_influence >= 0.0 && stability >= 0.0, "tail mass: inputs must be nonnegative");
  detail::require(norm_sq > 0.0, "tail mass: norm must be positive");
  detail::require(stability <= norm_sq * (1.0 + 1e-12), "tail mass: stability exceeds the squared norm");
  detail::require(rho > 0.0 && rho < 1.0, "tail mass: rho must lie in (0, 1)");
  detail::require(degree_cutoff >= 1, "tail mass: degree cutoff must be >= 1");
  const double delta = std::max(0.0, 1.0 - stability / norm_sq);
  return {total_influence / (degree_cutoff * norm_sq), delta / (1.0 - std::pow(rho, degree_cutoff))};
}

}  // namespace nstab
