#ifndef HOSL_MODEL_HPP
#define HOSL_MODEL_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hosl/linalg.hpp"

namespace hosl {

enum class Activation { kIdentity, kTanh, kRelu };

struct LayerSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::kIdentity;
};

enum class LossKind { kMse, kCrossEntropy };

struct Minibatch {
  Matrix x;  // B x n_in
  Matrix y;  // B x n_label (class indices in column 0 for cross-entropy)
};

struct ActivationBatch {
  Matrix values;  // B x cut-layer width
  std::int64_t batch_id = 0;
};

struct LossValue {
  double value = 0.0;
};

// Dense feedforward net partitioned at a cut layer; the client owns layers
// [0, cut) with parameter vector theta_c, the server owns [cut, L) with
// theta_s. Parameter layout is layer-major: weights row-major (out x in)
// followed by the bias, per layer.
struct SplitModel {
  std::vector<LayerSpec> layers;
  std::size_t cut = 0;
  std::vector<double> client_params;
  std::vector<double> server_params;

  std::span<const LayerSpec> client_layers() const {
    return {layers.data(), cut};
  }
  std::span<const LayerSpec> server_layers() const {
    return {layers.data() + cut, layers.size() - cut};
  }
  std::size_t client_dim() const { return client_params.size(); }
  std::size_t server_dim() const { return server_params.size(); }
  std::size_t total_dim() const { return client_dim() + server_dim(); }
};

inline std::size_t layer_param_count(const LayerSpec& l) {
  return l.output_dim * l.input_dim + l.output_dim;
}

std::size_t param_count(std::span<const LayerSpec> layers);

void validate_layer_chain(std::span<const LayerSpec> layers);

SplitModel build_split_model(std::vector<LayerSpec> layers, std::size_t cut,
                             std::uint64_t init_seed);

// Forward over a contiguous layer range. Pure in (params, input).
Matrix forward_layers(std::span<const LayerSpec> layers,
                      std::span<const double> params, const Matrix& input);

// Batch-mean loss of predictions vs labels.
double loss_value(const Matrix& pred, const Matrix& y, LossKind kind);
// d(loss)/d(pred), batch-mean convention; also reports the loss.
Matrix loss_grad(const Matrix& pred, const Matrix& y, LossKind kind,
                 double* loss_out);

ActivationBatch client_forward(const SplitModel& m,
                               std::span<const double> theta_c,
                               const Minibatch& batch,
                               std::int64_t batch_id = 0);

LossValue server_forward(const SplitModel& m, std::span<const double> theta_s,
                         const Matrix& h, const Matrix& y, LossKind kind);

struct ServerBackwardResult {
  double loss = 0.0;
  std::vector<double> server_grad;  // dL/d theta_s
  Matrix activation_grad;           // g_h = dL/dh
};

ServerBackwardResult server_backward(const SplitModel& m,
                                     std::span<const double> theta_s,
                                     const Matrix& h, const Matrix& y,
                                     LossKind kind);

// Chain rule through the client half: (dh/d theta_c)^T g_h.
std::vector<double> client_backward(const SplitModel& m,
                                    std::span<const double> theta_c,
                                    const Minibatch& batch,
                                    const Matrix& activation_grad);

// Loss of the whole model at concatenated theta = [theta_c, theta_s].
double full_loss(const SplitModel& m, std::span<const double> theta,
                 const Minibatch& batch, LossKind kind);

// Monolithic reverse-mode gradient over the unsplit model. Runs the exact
// same per-layer operations as the server_backward + client_backward chain,
// so the two routes agree bitwise.
std::vector<double> full_grad(const SplitModel& m,
                              std::span<const double> theta,
                              const Minibatch& batch, LossKind kind,
                              double* loss_out = nullptr);

// Central finite differences of an arbitrary scalar function; the testing
// oracle for every analytic gradient in the repo.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, double step);

std::vector<double> finite_diff_grad(const SplitModel& m,
                                     std::span<const double> theta,
                                     const Minibatch& batch, LossKind kind,
                                     double step);

// Flat little-endian f64 image of a parameter vector (checkpoint format).
std::vector<std::uint8_t> serialize_params(std::span<const double> params);
std::vector<double> deserialize_params(std::span<const std::uint8_t> bytes);

}  // namespace hosl

#endif  // HOSL_MODEL_HPP
