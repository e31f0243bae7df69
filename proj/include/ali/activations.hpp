#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace ali {

enum class Activation { Identity, ReLU, ELU, SELU, Tanh, Sigmoid, Softplus };

// Fixed published SELU constants; the pair makes the fixed point of the
// self-normalising map land at zero mean / unit variance.
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

inline double act_apply(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::ELU: return x > 0.0 ? x : std::expm1(x);
    case Activation::SELU:
      return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    // log(1+e^x) without overflow on large x or cancellation on large -x
    case Activation::Softplus: return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return x;
}

// Derivative given input x and output y = act_apply(a, x).
inline double act_deriv(Activation a, double x, double y) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case Activation::ELU: return x > 0.0 ? 1.0 : y + 1.0;
    case Activation::SELU:
      return x > 0.0 ? kSeluLambda : y + kSeluLambda * kSeluAlpha;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Sigmoid: return y * (1.0 - y);
    case Activation::Softplus: return 1.0 / (1.0 + std::exp(-x));
  }
  return 1.0;
}

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::ELU: return "elu";
    case Activation::SELU: return "selu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softplus: return "softplus";
  }
  return "identity";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::ReLU;
  if (s == "elu") return Activation::ELU;
  if (s == "selu") return Activation::SELU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "softplus") return Activation::Softplus;
  throw std::invalid_argument("unknown activation: " + s);
}

}  // namespace ali
