#pragma once

#include <bit>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nstab/boolean_fourier.hpp"
#include "nstab/error.hpp"
#include "nstab/hermite.hpp"

namespace nstab::catalog {

inline const std::vector<std::string>& boolean_names() {
  static const std::vector<std::string> names{"majority", "parity", "dictator", "and", "or", "tribes"};
  return names;
}

/// Named +-1 valued functions on {-1,1}^n. "and"/"or" output -1 exactly when all/any inputs
/// are -1; "tribes" splits the inputs into consecutive blocks of width w = floor(log2 n) and
/// outputs -1 when some block is all -1.
inline BooleanFunction boolean_function(const std::string& name, int n) {
  detail::require(n >= 1 && n <= kMaxBooleanArity, "boolean function: arity out of range");
  if (name == "majority") {
    detail::require(n % 2 == 1, "majority needs odd n");
    return BooleanFunction::from(n, [n](std::uint32_t x) { return 2 * std::popcount(x) > n ? -1.0 : 1.0; });
  }
  if (name == "parity") return BooleanFunction::from(n, [](std::uint32_t x) { return std::popcount(x) & 1 ? -1.0 : 1.0; });
  if (name == "dictator") return BooleanFunction::from(n, [](std::uint32_t x) { return static_cast<double>(coord(x, 1)); });
  const std::uint32_t full = (1u << n) - 1u;
  if (name == "and") return BooleanFunction::from(n, [full](std::uint32_t x) { return x == full ? -1.0 : 1.0; });
  if (name == "or") return BooleanFunction::from(n, [](std::uint32_t x) { return x != 0 ? -1.0 : 1.0; });
  if (name == "tribes") {
    const int w = std::max(1, static_cast<int>(std::floor(std::log2(static_cast<double>(n)))));
    return BooleanFunction::from(n, [n, w](std::uint32_t x) {
      for (int start = 0; start + w <= n; start += w) {
        const std::uint32_t block = ((1u << w) - 1u) << start;
        if ((x & block) == block) return -1.0;
      }
      return 1.0;
    });
  }
  throw InvalidArgument("unknown boolean function '" + name + "'");
}

inline const std::vector<std::string>& gaussian_names() {
  static const std::vector<std::string> names{"relu", "abs", "square", "cube", "tanh", "product", "max"};
  return names;
}

inline int gaussian_arity(const std::string& name) { return name == "product" || name == "max" ? 2 : 1; }

/// Named functions of standard Gaussian inputs; "product" and "max" act on R^2.
inline std::function<double(const Eigen::VectorXd&)> gaussian_function(const std::string& name) {
  if (name == "relu") return [](const Eigen::VectorXd& x) { return std::max(0.0, x(0)); };
  if (name == "abs") return [](const Eigen::VectorXd& x) { return std::abs(x(0)); };
  if (name == "square") return [](const Eigen::VectorXd& x) { return x(0) * x(0); };
  if (name == "cube") return [](const Eigen::VectorXd& x) { return x(0) * x(0) * x(0); };
  if (name == "tanh") return [](const Eigen::VectorXd& x) { return std::tanh(x(0)); };
  if (name == "product") return [](const Eigen::VectorXd& x) { return x(0) * x(1); };
  if (name == "max") return [](const Eigen::VectorXd& x) { return std::max(x(0), x(1)); };
  throw InvalidArgument("unknown gaussian function '" + name + "'");
}

}  // namespace nstab::catalog
