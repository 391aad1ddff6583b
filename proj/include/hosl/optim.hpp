#ifndef HOSL_OPTIM_HPP
#define HOSL_OPTIM_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hosl/common.hpp"
#include "hosl/prng.hpp"

namespace hosl {

struct ZOConfig {
  double eps = 1e-3;      // perturbation / smoothing scale
  std::size_t q = 1;      // perturbation count per iteration
  double lr_client = 0.0;  // eta_c

  void validate() const {
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (q < 1) throw ConfigError("q must be >= 1");
    if (!(lr_client > 0.0)) throw ConfigError("lr-client must be > 0");
  }
};

struct FOConfig {
  double lr_server = 0.0;  // eta_s

  void validate() const {
    if (!(lr_server > 0.0)) throw ConfigError("lr-server must be > 0");
  }
};

// The entire gradient state a ZO side keeps per perturbation: the projected
// gradient scalar (already divided by 2*eps*q) and the seed that regenerates
// the direction z. Nothing of z itself is stored.
struct ZOGradientRecord {
  double g_hat = 0.0;
  std::uint64_t seed = 0;
};

// params[i] += delta * z[i], z standard normal from `seed`, coordinate order.
// delta == 0 leaves params bitwise untouched.
void perturb(std::span<double> params, double delta, std::uint64_t seed);

// (loss_plus - loss_minus) / (2 * eps * q): the stored projected gradient.
double spsa_scalar(double loss_plus, double loss_minus, double eps,
                   std::size_t q);

// params[i] -= lr * g_hat * z[i] with z regenerated from record.seed; the
// same z sequence perturb consumed, bit for bit.
void zo_update(std::span<double> params, const ZOGradientRecord& record,
               double lr);

// Produces the q-th direction vector for a given dimension. Lets tests and
// the dense estimator below share z sources with the protocol path.
using DirectionSource =
    std::function<std::vector<double>(std::size_t q_index, std::size_t dim)>;

// Directions drawn back to back from a single stream: z_q = normals
// [q*dim, (q+1)*dim) of `seed`.
DirectionSource sequential_directions(std::uint64_t seed);

// Dense multi-perturbation estimator: (1/q) * sum_q [(L(theta + eps z_q) -
// L(theta - eps z_q)) / (2 eps)] z_q, materialized as a vector. Exactly 2q
// loss evaluations. The oracle twin of the record-based protocol path.
std::vector<double> zo_dense_estimate(
    std::span<const double> theta,
    const std::function<double(std::span<const double>)>& loss_fn, double eps,
    std::size_t q, std::uint64_t seed);

std::vector<double> zo_dense_estimate_with(
    std::span<const double> theta,
    const std::function<double(std::span<const double>)>& loss_fn, double eps,
    std::size_t q, const DirectionSource& directions);

// params -= lr * grad, coordinatewise.
void sgd_step(std::span<double> params, std::span<const double> grad,
              double lr);

}  // namespace hosl

#endif  // HOSL_OPTIM_HPP
