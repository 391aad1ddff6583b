#include "hosl/optim.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "hosl/linalg.hpp"

namespace hosl {

void perturb(std::span<double> params, double delta, std::uint64_t seed) {
  if (!std::isfinite(delta)) throw NumericError("perturb: delta not finite");
  if (!all_finite(params)) throw NumericError("perturb: params not finite");
  if (delta == 0.0) return;  // keeps -0.0 coordinates bitwise intact
  PrngStream stream(seed);
  for (double& p : params) p += delta * stream.next_normal();
}

double spsa_scalar(double loss_plus, double loss_minus, double eps,
                   std::size_t q) {
  if (!(eps > 0.0)) throw ConfigError("spsa: eps must be > 0");
  if (q < 1) throw ConfigError("spsa: q must be >= 1");
  return (loss_plus - loss_minus) / (2.0 * eps * static_cast<double>(q));
}

void zo_update(std::span<double> params, const ZOGradientRecord& record,
               double lr) {
  // Definitionally a perturbation with scale -lr * g_hat; sharing the code
  // path is what guarantees the regenerated z matches bitwise.
  perturb(params, -lr * record.g_hat, record.seed);
}

DirectionSource sequential_directions(std::uint64_t seed) {
  auto stream = std::make_shared<PrngStream>(seed);
  return [stream](std::size_t /*q_index*/, std::size_t dim) {
    std::vector<double> z(dim);
    for (double& v : z) v = stream->next_normal();
    return z;
  };
}

std::vector<double> zo_dense_estimate_with(
    std::span<const double> theta,
    const std::function<double(std::span<const double>)>& loss_fn, double eps,
    std::size_t q, const DirectionSource& directions) {
  if (!(eps > 0.0)) throw ConfigError("zo_dense_estimate: eps must be > 0");
  if (q < 1) throw ConfigError("zo_dense_estimate: q must be >= 1");
  std::vector<double> estimate(theta.size(), 0.0);
  std::vector<double> point(theta.begin(), theta.end());
  for (std::size_t k = 0; k < q; ++k) {
    const std::vector<double> z = directions(k, theta.size());
    if (z.size() != theta.size()) throw ShapeError("direction dimension");
    for (std::size_t i = 0; i < point.size(); ++i) {
      point[i] = theta[i] + eps * z[i];
    }
    const double lp = loss_fn(point);
    for (std::size_t i = 0; i < point.size(); ++i) {
      point[i] = theta[i] - eps * z[i];
    }
    const double lm = loss_fn(point);
    const double scale = (lp - lm) / (2.0 * eps * static_cast<double>(q));
    for (std::size_t i = 0; i < estimate.size(); ++i) {
      estimate[i] += scale * z[i];
    }
  }
  return estimate;
}

std::vector<double> zo_dense_estimate(
    std::span<const double> theta,
    const std::function<double(std::span<const double>)>& loss_fn, double eps,
    std::size_t q, std::uint64_t seed) {
  return zo_dense_estimate_with(theta, loss_fn, eps, q,
                                sequential_directions(seed));
}

void sgd_step(std::span<double> params, std::span<const double> grad,
              double lr) {
  if (params.size() != grad.size()) {
    throw ShapeError("sgd: grad size " + std::to_string(grad.size()) +
                     " != params size " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

}  // namespace hosl
