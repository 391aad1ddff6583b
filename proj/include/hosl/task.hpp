#ifndef HOSL_TASK_HPP
#define HOSL_TASK_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hosl/dataset.hpp"
#include "hosl/model.hpp"

namespace hosl {

// The two halves of a trainable objective as the endpoints see them. A batch
// is always the client's wire view: x feeds the client half, y travels to
// the server and carries whatever the server needs to finish the loss.
class ClientTask {
 public:
  virtual ~ClientTask() = default;
  virtual std::size_t dim() const = 0;
  virtual Matrix forward(std::span<const double> theta_c,
                         const Minibatch& batch) const = 0;
  // (dh/d theta_c)^T g_h
  virtual std::vector<double> backward(std::span<const double> theta_c,
                                       const Minibatch& batch,
                                       const Matrix& activation_grad) const = 0;
};

class ServerTask {
 public:
  struct BackwardResult {
    double loss = 0.0;
    std::vector<double> param_grad;
    Matrix activation_grad;
  };

  virtual ~ServerTask() = default;
  virtual std::size_t dim() const = 0;
  virtual double loss(std::span<const double> theta_s, const Matrix& h,
                      const Matrix& y) const = 0;
  virtual BackwardResult backward(std::span<const double> theta_s,
                                  const Matrix& h, const Matrix& y) const = 0;
};

// Loss at concatenated theta = [theta_c, theta_s] through the same code path
// the protocol takes.
double composed_loss(const ClientTask& client, const ServerTask& server,
                     std::span<const double> theta, const Minibatch& batch);

// Out-of-band evaluation of the full objective over the whole dataset, for
// instrumentation and tests; never touches the wire.
class TaskOracle {
 public:
  virtual ~TaskOracle() = default;
  virtual double dataset_loss(std::span<const double> theta) const = 0;
  virtual std::vector<double> dataset_grad(
      std::span<const double> theta) const = 0;
  // Smoothness constant of the dataset objective where known (quadratic);
  // NaN otherwise.
  virtual double smoothness() const = 0;
};

// How the model half-pair is realized.
//   - linreg/blobs: a SplitModel over `layers` cut at `cut`.
//   - quadratic: parameter blocks over the dataset's quadratic form, the
//     client holding the first quad_client_dim coordinates.
struct ModelConfig {
  std::vector<LayerSpec> layers;
  std::size_t cut = 1;
  std::size_t quad_client_dim = 0;
};

struct TaskBundle {
  std::unique_ptr<ClientTask> client;
  std::unique_ptr<ServerTask> server;
  std::unique_ptr<TaskOracle> oracle;
  std::vector<double> theta_c0;
  std::vector<double> theta_s0;
  // Client wire view of the minibatch for iteration t.
  std::function<Minibatch(std::uint64_t t)> batch_for;
};

TaskBundle make_task(const ModelConfig& cfg, const Dataset& ds,
                     std::uint64_t master_seed, std::size_t batch_size);

// The halves without dataset/batching, for a standalone server endpoint
// that sees only wire traffic. total_quad_dim applies to the quadratic task.
std::unique_ptr<ServerTask> make_server_task(const ModelConfig& cfg,
                                             LossKind loss_kind,
                                             std::size_t total_quad_dim = 0);
std::vector<double> initial_server_params(const ModelConfig& cfg,
                                          std::uint64_t master_seed,
                                          std::size_t total_quad_dim);

}  // namespace hosl

#endif  // HOSL_TASK_HPP
