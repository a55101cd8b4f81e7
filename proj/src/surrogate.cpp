#include "qbsnn/surrogate.hpp"

#include <cmath>
#include <limits>

#include "qbsnn/errors.hpp"

namespace qbsnn {

const char* surrogate_kind_name(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::kRelsgEt: return "relsg-et";
    case SurrogateKind::kBoxEt: return "box-et";
    case SurrogateKind::kArctan: return "arctan";
    case SurrogateKind::kExactReference: return "exact";
  }
  return "?";
}

SurrogateKind surrogate_kind_from_name(const std::string& name) {
  if (name == "relsg-et") return SurrogateKind::kRelsgEt;
  if (name == "box-et") return SurrogateKind::kBoxEt;
  if (name == "arctan") return SurrogateKind::kArctan;
  if (name == "exact") return SurrogateKind::kExactReference;
  throw ConfigError("unknown surrogate '" + name +
                    "' (expected relsg-et, box-et, arctan or exact)");
}

namespace {
void check_scale(double gamma, int n_max) {
  if (!(gamma > 0.0)) throw InvalidScaleError("surrogate: gamma <= 0");
  if (n_max < 1) throw ConfigError("surrogate: n_max must be >= 1");
}

template <typename F>
Tensor map(const Tensor& u, F f) {
  Tensor out(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = f(u[i]);
  return out;
}
}  // namespace

double relsg_et_scalar(double u, double gamma, int n_max) {
  const double hi = static_cast<double>(n_max) * gamma;
  if (u < gamma) return std::exp(u - gamma);
  if (u > hi) return std::exp(-u + hi);
  return 1.0;
}

Tensor relsg_et(const Tensor& u, double gamma, int n_max) {
  check_scale(gamma, n_max);
  return map(u, [&](double x) { return relsg_et_scalar(x, gamma, n_max); });
}

double box_et_scalar(double u, double gamma, int n_max) {
  const double hi = static_cast<double>(n_max) * gamma;
  return (u >= gamma && u <= hi) ? 1.0 : 0.0;
}

Tensor box_et(const Tensor& u, double gamma, int n_max) {
  check_scale(gamma, n_max);
  return map(u, [&](double x) { return box_et_scalar(x, gamma, n_max); });
}

double arctan_surrogate_scalar(double u, double v_theta, double sharpness) {
  const double x = 1.5707963267948966 * sharpness * (u - v_theta);
  return sharpness / (2.0 * (1.0 + x * x));
}

Tensor arctan_surrogate(const Tensor& u, double v_theta, double sharpness) {
  if (!(sharpness > 0.0))
    throw ConfigError("arctan surrogate: sharpness must be > 0");
  return map(u, [&](double x) {
    return arctan_surrogate_scalar(x, v_theta, sharpness);
  });
}

double exact_grad_reference_scalar(double u, double gamma) {
  if (!(gamma > 0.0)) throw InvalidScaleError("exact_grad: gamma <= 0");
  const double q = u / gamma;
  const double tol =
      4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(q));
  if (std::abs(q - std::nearbyint(q)) <= tol)
    return std::numeric_limits<double>::infinity();
  return 0.0;
}

Tensor exact_grad_reference(const Tensor& u, double gamma) {
  return map(u, [&](double x) { return exact_grad_reference_scalar(x, gamma); });
}

double binary_box_et_scalar(double u, double v_theta) {
  const double lo = 0.5 * v_theta;
  const double hi = 1.5 * v_theta;
  return (u >= lo && u <= hi) ? 1.0 : 0.0;
}

double binary_relsg_et_scalar(double u, double v_theta) {
  const double lo = 0.5 * v_theta;
  const double hi = 1.5 * v_theta;
  if (u < lo) return std::exp(u - lo);
  if (u > hi) return std::exp(-u + hi);
  return 1.0;
}

}  // namespace qbsnn
