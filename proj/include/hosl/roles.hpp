#ifndef HOSL_ROLES_HPP
#define HOSL_ROLES_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <vector>

#include "hosl/accounting.hpp"
#include "hosl/optim.hpp"
#include "hosl/task.hpp"
#include "hosl/transport.hpp"

namespace hosl {

enum class Mode { kZoFo, kZoZo, kFoFo };
enum class TransportKind { kInproc, kTcp };

const char* mode_name(Mode m);

struct TrainingConfig {
  Mode mode = Mode::kZoFo;
  std::uint64_t iters = 100;  // T
  std::size_t q = 10;
  double eps = 1e-3;
  double lr_client = 1e-2;
  double lr_server = 1e-2;
  std::size_t batch_size = 16;
  std::uint64_t master_seed = 1;
  ModelConfig model;
  DatasetSpec dataset;
  TransportKind transport = TransportKind::kInproc;
  // Evaluate dataset loss / gradient norm out of band each iteration.
  bool instrument = true;

  void validate() const;
};

struct ClientState {
  std::vector<double> theta_c;
  std::vector<ZOGradientRecord> pending;  // at most Q records, drained once
  std::uint64_t t = 0;
};

struct ServerState {
  std::vector<double> theta_s;
};

// Per-iteration test hook: the Phase-2 forward and the parameter vector it
// was computed from.
struct Phase2Trace {
  Matrix activations;
  std::vector<double> theta_at_phase2;
};

class ClientEndpoint {
 public:
  ClientEndpoint(const ClientTask& task, const TrainingConfig& cfg,
                 std::vector<double> theta0);

  // One full iteration of the configured mode. On any failure the
  // pre-iteration theta_c is restored before the error propagates.
  void run_iteration(std::uint64_t t, const Minibatch& batch, Transport& tr);

  const std::vector<double>& params() const { return state_.theta_c; }
  ClientState& state() { return state_; }
  void set_phase2_trace(Phase2Trace* trace) { trace_ = trace; }

 private:
  void iterate_zo_fo(std::uint64_t t, const Minibatch& batch, Transport& tr);
  void iterate_zo_zo(std::uint64_t t, const Minibatch& batch, Transport& tr);
  void iterate_fo_fo(std::uint64_t t, const Minibatch& batch, Transport& tr);

  double request_loss(Transport& tr, Phase phase, Matrix h, const Matrix& y);

  const ClientTask& task_;
  const TrainingConfig& cfg_;
  ClientState state_;
  Phase2Trace* trace_ = nullptr;
};

struct ServerConfig {
  Mode mode = Mode::kZoFo;
  std::size_t q = 10;
  double eps = 1e-3;
  double lr_server = 1e-2;
  std::uint64_t master_seed = 1;
};

class ServerEndpoint {
 public:
  ServerEndpoint(const ServerTask& task, const ServerConfig& cfg,
                 std::vector<double> theta0);

  // Serves until the peer closes at an iteration boundary. A disconnect
  // mid-iteration or a malformed message throws after the loop shuts down.
  void run_loop(Transport& tr);

  // Safe from other threads whenever no message is in flight.
  std::vector<double> snapshot_params() const;
  std::uint64_t inference_replies() const { return inference_replies_; }
  std::uint64_t grad_updates() const { return grad_updates_; }

 private:
  void handle_inference(const ForwardMsg& fwd, Transport& tr);
  void handle_compute_grad(const ForwardMsg& fwd, Transport& tr);

  const ServerTask& task_;
  ServerConfig cfg_;
  ServerState state_;
  mutable std::mutex mu_;
  std::uint64_t inference_replies_ = 0;
  std::uint64_t grad_updates_ = 0;
  // zo_zo lockstep cursor.
  std::uint64_t zz_t_ = 0;
  std::size_t zz_q_ = 0;
  bool zz_expect_plus_ = true;
  double zz_loss_plus_ = 0.0;
  std::vector<ZOGradientRecord> zz_pending_;
};

struct IterationRecord {
  std::uint64_t iter = 0;
  double loss = 0.0;          // dataset loss at the unperturbed theta^t
  double grad_norm_sq = 0.0;  // ||grad L(theta^t)||^2 where computable
  std::uint64_t client_tx_bytes = 0;
  std::uint64_t client_rx_bytes = 0;
  double elapsed_ms = 0.0;
};

struct TrainLog {
  std::vector<IterationRecord> records;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double objective_decrease = 0.0;  // F = L(theta^0) - L(theta^T)
  double mean_grad_norm_sq = 0.0;   // (1/T) sum_t ||grad L(theta^t)||^2
  CommLedger ledger;
  std::vector<double> final_theta;  // [theta_c, theta_s] after T iterations
};

// iter,loss,grad_norm_sq,client_tx_bytes,client_rx_bytes,elapsed_ms rows,
// ledger totals and summary as trailing comment lines. with_timing=false
// zeroes the elapsed column for byte-reproducible output.
void write_train_log_csv(const TrainLog& log, std::ostream& out,
                         bool with_timing);

struct FrameRecord {
  bool outbound = false;  // relative to the client
  std::vector<std::uint8_t> bytes;
};

struct RunHooks {
  // Client-side tap of every frame, in order.
  std::vector<FrameRecord>* transcript = nullptr;
  Phase2Trace* phase2 = nullptr;
};

// Builds dataset + task from the config, runs client and server endpoints
// over the configured transport for T iterations, returns the log. Fully
// deterministic from cfg.master_seed (timing aside).
TrainLog run_training(const TrainingConfig& cfg, RunHooks* hooks = nullptr);

// Standalone endpoints for two-process TCP runs.
void run_server_standalone(const TrainingConfig& cfg, const HostPort& listen);
TrainLog run_client_standalone(const TrainingConfig& cfg,
                               const HostPort& connect);

// Convenience wrapper over the accounting-side primitive.
BoundReport bound_check(const TrainLog& log, const TheoryParams& params);

}  // namespace hosl

#endif  // HOSL_ROLES_HPP
