#pragma once

#include <string>

#include "qbsnn/tensor.hpp"

namespace qbsnn {

enum class SurrogateKind : int {
  kRelsgEt = 0,  // unit plateau over the burst range, exponential tails
  kBoxEt = 1,    // unit plateau over the burst range, hard zero outside
  kArctan = 2,   // bell curve centered at the binary threshold
  kExactReference = 3,  // true derivative of the floor quantizer (doc only)
};

const char* surrogate_kind_name(SurrogateKind kind);
SurrogateKind surrogate_kind_from_name(const std::string& name);

struct SurrogateConfig {
  SurrogateKind kind = SurrogateKind::kRelsgEt;
  double arctan_sharpness = 2.0;  // > 0, arctan only
};

/// Rectified-linear surrogate with exponential tails. Pseudo-derivative of
/// the integer burst level with respect to the membrane potential:
///   exp(u - gamma)               u < gamma
///   1                            gamma <= u <= n_max * gamma
///   exp(-u + n_max * gamma)      u > n_max * gamma
/// The chain through the scaled training output multiplies this by gamma;
/// that factor is applied by the caller, not here.
double relsg_et_scalar(double u, double gamma, int n_max);
Tensor relsg_et(const Tensor& u, double gamma, int n_max);

/// Boxcar variant of the above: 1 on [gamma, n_max * gamma], 0 outside.
double box_et_scalar(double u, double gamma, int n_max);
Tensor box_et(const Tensor& u, double gamma, int n_max);

/// Bell-shaped pseudo-derivative for the binary spike, peak s/2 at the
/// threshold:  g(u) = s / (2 * (1 + (pi * s * (u - v_theta) / 2)^2)).
double arctan_surrogate_scalar(double u, double v_theta, double sharpness);
Tensor arctan_surrogate(const Tensor& u, double v_theta, double sharpness);

/// True derivative of the floor quantizer: zero almost everywhere, infinite
/// on the boundary set (u / gamma integral within a few ulp). Returned
/// infinity is a sentinel; this exists to document why training needs a
/// surrogate and is never used in the backward pass.
double exact_grad_reference_scalar(double u, double gamma);
Tensor exact_grad_reference(const Tensor& u, double gamma);

/// Surrogate window for binary LIF layers, where the burst plateau
/// [gamma, n_max * gamma] has no analog. We use a box of width v_theta
/// centered at the threshold: Box-ET is 1 on [v_theta/2, 3*v_theta/2] and 0
/// outside; ReLSG-ET keeps the box and adds the exponential tails.
double binary_box_et_scalar(double u, double v_theta);
double binary_relsg_et_scalar(double u, double v_theta);

}  // namespace qbsnn
