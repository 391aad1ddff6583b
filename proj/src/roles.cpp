#include "hosl/roles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <thread>

#include "hosl/prng.hpp"

namespace hosl {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kZoFo:
      return "zo-fo";
    case Mode::kZoZo:
      return "zo-zo";
    case Mode::kFoFo:
      return "fo-fo";
  }
  return "?";
}

void TrainingConfig::validate() const {
  if (iters < 1) throw ConfigError("iters must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const bool zo_active = mode != Mode::kFoFo;
  if (zo_active) {
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0 in ZO modes");
    if (q < 1) throw ConfigError("q must be >= 1 in ZO modes");
  }
  if (!(lr_client > 0.0)) throw ConfigError("lr-client must be > 0");
  if (!(lr_server > 0.0)) throw ConfigError("lr-server must be > 0");
}

ClientEndpoint::ClientEndpoint(const ClientTask& task,
                               const TrainingConfig& cfg,
                               std::vector<double> theta0)
    : task_(task), cfg_(cfg) {
  state_.theta_c = std::move(theta0);
}

double ClientEndpoint::request_loss(Transport& tr, Phase phase, Matrix h,
                                    const Matrix& y) {
  tr.send(ForwardMsg{phase, std::move(h), y});
  const Message reply = tr.recv();
  const auto* loss = std::get_if<LossReplyMsg>(&reply);
  if (!loss) throw ProtocolError("expected LossReply");
  return loss->value;
}

void ClientEndpoint::run_iteration(std::uint64_t t, const Minibatch& batch,
                                   Transport& tr) {
  const std::vector<double> backup = state_.theta_c;
  try {
    switch (cfg_.mode) {
      case Mode::kZoFo:
        iterate_zo_fo(t, batch, tr);
        break;
      case Mode::kZoZo:
        iterate_zo_zo(t, batch, tr);
        break;
      case Mode::kFoFo:
        iterate_fo_fo(t, batch, tr);
        break;
    }
  } catch (...) {
    state_.theta_c = backup;
    state_.pending.clear();
    throw;
  }
  state_.t = t + 1;
}

void ClientEndpoint::iterate_zo_fo(std::uint64_t t, const Minibatch& batch,
                                   Transport& tr) {
  auto& theta = state_.theta_c;
  state_.pending.clear();
  // Phase 1: Q two-sided evaluations, server in inference mode throughout.
  for (std::size_t qi = 0; qi < cfg_.q; ++qi) {
    const std::uint64_t seed =
        derive_seed(cfg_.master_seed, StreamPurpose::kClientPerturb, t, qi);
    perturb(theta, +cfg_.eps, seed);
    const double loss_plus = request_loss(
        tr, Phase::kInference, task_.forward(theta, batch), batch.y);
    perturb(theta, -2.0 * cfg_.eps, seed);
    const double loss_minus = request_loss(
        tr, Phase::kInference, task_.forward(theta, batch), batch.y);
    perturb(theta, +cfg_.eps, seed);  // back at the original theta_c
    state_.pending.push_back(
        {spsa_scalar(loss_plus, loss_minus, cfg_.eps, cfg_.q), seed});
  }
  // Phase 2: server FO update from the unperturbed forward.
  Matrix h = task_.forward(theta, batch);
  if (trace_) {
    trace_->activations = h;
    trace_->theta_at_phase2 = theta;
  }
  tr.send(ForwardMsg{Phase::kComputeGrad, std::move(h), batch.y});
  const Message reply = tr.recv();
  if (!std::holds_alternative<AckMsg>(reply)) {
    throw ProtocolError("expected Ack after compute_grad");
  }
  // Phase 3: replay the stored (g_hat, seed) records.
  for (const ZOGradientRecord& rec : state_.pending) {
    zo_update(theta, rec, cfg_.lr_client);
  }
  state_.pending.clear();
}

void ClientEndpoint::iterate_zo_zo(std::uint64_t t, const Minibatch& batch,
                                   Transport& tr) {
  auto& theta = state_.theta_c;
  state_.pending.clear();
  // The server perturbs its own block in lockstep; each +/- pair evaluates
  // the objective at theta +/- eps [z_c; z_s].
  for (std::size_t qi = 0; qi < cfg_.q; ++qi) {
    const std::uint64_t seed =
        derive_seed(cfg_.master_seed, StreamPurpose::kClientPerturb, t, qi);
    perturb(theta, +cfg_.eps, seed);
    const double loss_plus = request_loss(
        tr, Phase::kInference, task_.forward(theta, batch), batch.y);
    perturb(theta, -2.0 * cfg_.eps, seed);
    const double loss_minus = request_loss(
        tr, Phase::kInference, task_.forward(theta, batch), batch.y);
    perturb(theta, +cfg_.eps, seed);
    state_.pending.push_back(
        {spsa_scalar(loss_plus, loss_minus, cfg_.eps, cfg_.q), seed});
  }
  for (const ZOGradientRecord& rec : state_.pending) {
    zo_update(theta, rec, cfg_.lr_client);
  }
  state_.pending.clear();
}

void ClientEndpoint::iterate_fo_fo(std::uint64_t t, const Minibatch& batch,
                                   Transport& tr) {
  (void)t;
  auto& theta = state_.theta_c;
  Matrix h = task_.forward(theta, batch);
  if (trace_) {
    trace_->activations = h;
    trace_->theta_at_phase2 = theta;
  }
  tr.send(ForwardMsg{Phase::kComputeGrad, std::move(h), batch.y});
  const Message reply = tr.recv();
  const auto* grad = std::get_if<GradReplyMsg>(&reply);
  if (!grad) throw ProtocolError("expected GradReply");
  const std::vector<double> grad_c =
      task_.backward(theta, batch, grad->activation_grad);
  sgd_step(theta, grad_c, cfg_.lr_client);
}

ServerEndpoint::ServerEndpoint(const ServerTask& task, const ServerConfig& cfg,
                               std::vector<double> theta0)
    : task_(task), cfg_(cfg) {
  state_.theta_s = std::move(theta0);
}

std::vector<double> ServerEndpoint::snapshot_params() const {
  std::lock_guard<std::mutex> lk(mu_);
  return state_.theta_s;
}

void ServerEndpoint::run_loop(Transport& tr) {
  for (;;) {
    Message msg;
    try {
      msg = tr.recv();
    } catch (const TransportClosed&) {
      const bool mid_iteration =
          cfg_.mode == Mode::kZoZo && !(zz_q_ == 0 && zz_expect_plus_);
      if (mid_iteration) {
        throw TransportError("peer closed mid-iteration");
      }
      return;  // clean shutdown at an iteration boundary
    }
    const auto* fwd = std::get_if<ForwardMsg>(&msg);
    if (!fwd) throw ProtocolError("server expected a Forward message");
    if (fwd->phase == Phase::kInference) {
      handle_inference(*fwd, tr);
    } else {
      handle_compute_grad(*fwd, tr);
    }
  }
}

void ServerEndpoint::handle_inference(const ForwardMsg& fwd, Transport& tr) {
  std::lock_guard<std::mutex> lk(mu_);
  auto& theta = state_.theta_s;
  double loss;
  if (cfg_.mode == Mode::kZoZo) {
    const std::uint64_t seed = derive_seed(
        cfg_.master_seed, StreamPurpose::kServerPerturb, zz_t_, zz_q_);
    if (zz_expect_plus_) {
      perturb(theta, +cfg_.eps, seed);
      loss = task_.loss(theta, fwd->activations, fwd->labels);
      zz_loss_plus_ = loss;
      zz_expect_plus_ = false;
    } else {
      perturb(theta, -2.0 * cfg_.eps, seed);
      loss = task_.loss(theta, fwd->activations, fwd->labels);
      perturb(theta, +cfg_.eps, seed);  // restore
      zz_pending_.push_back(
          {spsa_scalar(zz_loss_plus_, loss, cfg_.eps, cfg_.q), seed});
      zz_expect_plus_ = true;
      ++zz_q_;
      if (zz_q_ == cfg_.q) {
        // Iteration boundary: apply the stored updates to this block.
        for (const ZOGradientRecord& rec : zz_pending_) {
          zo_update(theta, rec, cfg_.lr_server);
        }
        zz_pending_.clear();
        zz_q_ = 0;
        ++zz_t_;
        ++grad_updates_;
      }
    }
  } else {
    // Forward-only evaluation; theta_s stays untouched.
    loss = task_.loss(theta, fwd->activations, fwd->labels);
  }
  tr.send(LossReplyMsg{loss});
  ++inference_replies_;
}

void ServerEndpoint::handle_compute_grad(const ForwardMsg& fwd,
                                         Transport& tr) {
  if (cfg_.mode == Mode::kZoZo) {
    throw ProtocolError("compute_grad message in zo-zo mode");
  }
  std::lock_guard<std::mutex> lk(mu_);
  auto& theta = state_.theta_s;
  ServerTask::BackwardResult bw =
      task_.backward(theta, fwd->activations, fwd->labels);
  sgd_step(theta, bw.param_grad, cfg_.lr_server);
  ++grad_updates_;
  if (cfg_.mode == Mode::kFoFo) {
    tr.send(GradReplyMsg{std::move(bw.activation_grad)});
  } else {
    tr.send(AckMsg{});  // no loss needed on this path
  }
}

void write_train_log_csv(const TrainLog& log, std::ostream& out,
                         bool with_timing) {
  out << "iter,loss,grad_norm_sq,client_tx_bytes,client_rx_bytes,elapsed_ms\n";
  char buf[256];
  for (const IterationRecord& r : log.records) {
    std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%llu,%llu,%.3f\n",
                  static_cast<unsigned long long>(r.iter), r.loss,
                  r.grad_norm_sq,
                  static_cast<unsigned long long>(r.client_tx_bytes),
                  static_cast<unsigned long long>(r.client_rx_bytes),
                  with_timing ? r.elapsed_ms : 0.0);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "# initial_loss=%.17g\n", log.initial_loss);
  out << buf;
  std::snprintf(buf, sizeof(buf), "# final_loss=%.17g\n", log.final_loss);
  out << buf;
  std::snprintf(buf, sizeof(buf), "# objective_decrease=%.17g\n",
                log.objective_decrease);
  out << buf;
  std::snprintf(buf, sizeof(buf), "# mean_grad_norm_sq=%.17g\n",
                log.mean_grad_norm_sq);
  out << buf;
  const auto& c2s = log.ledger.total(Direction::kClientToServer);
  const auto& s2c = log.ledger.total(Direction::kServerToClient);
  out << "# client_to_server_bytes=" << c2s.bytes
      << " frames=" << c2s.frames << "\n";
  out << "# server_to_client_bytes=" << s2c.bytes
      << " frames=" << s2c.frames << "\n";
}

namespace {

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

std::vector<double> concat(const std::vector<double>& a,
                           const std::vector<double>& b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

ServerConfig server_config(const TrainingConfig& cfg) {
  return {cfg.mode, cfg.q, cfg.eps, cfg.lr_server, cfg.master_seed};
}

// Drives the client side over an established transport, with optional
// oracle instrumentation (single-process runs hand in a server snapshot
// callback; standalone clients cannot see theta_s and log NaN).
TrainLog drive_client(
    const TrainingConfig& cfg, const TaskBundle& task, Transport& tr,
    const std::function<std::vector<double>()>& server_snapshot,
    RunHooks* hooks) {
  TrainLog log;
  tr.set_tap([&](bool outbound, const std::vector<std::uint8_t>& frame) {
    log.ledger.record_frame(outbound ? Direction::kClientToServer
                                     : Direction::kServerToClient,
                            frame);
    if (hooks && hooks->transcript) {
      hooks->transcript->push_back({outbound, frame});
    }
  });

  ClientEndpoint client(*task.client, cfg, task.theta_c0);
  if (hooks && hooks->phase2) client.set_phase2_trace(hooks->phase2);

  const bool can_instrument =
      cfg.instrument && task.oracle != nullptr && server_snapshot != nullptr;
  auto observe = [&](double* loss_out, double* grad_sq_out) {
    if (!can_instrument) {
      *loss_out = nan_value();
      *grad_sq_out = nan_value();
      return;
    }
    const std::vector<double> theta =
        concat(client.params(), server_snapshot());
    *loss_out = task.oracle->dataset_loss(theta);
    const std::vector<double> grad = task.oracle->dataset_grad(theta);
    *grad_sq_out = norm_sq(grad);
  };

  double grad_sq_sum = 0.0;
  log.initial_loss = nan_value();
  for (std::uint64_t t = 0; t < cfg.iters; ++t) {
    IterationRecord rec;
    rec.iter = t;
    observe(&rec.loss, &rec.grad_norm_sq);
    if (t == 0) log.initial_loss = rec.loss;
    grad_sq_sum += rec.grad_norm_sq;
    const auto& c2s_before = log.ledger.total(Direction::kClientToServer);
    const auto& s2c_before = log.ledger.total(Direction::kServerToClient);
    const std::uint64_t tx0 = c2s_before.bytes;
    const std::uint64_t rx0 = s2c_before.bytes;
    const auto start = std::chrono::steady_clock::now();

    log.ledger.begin_round();
    const Minibatch batch = task.batch_for(t);
    client.run_iteration(t, batch, tr);

    const auto stop = std::chrono::steady_clock::now();
    rec.elapsed_ms =
        std::chrono::duration<double, std::milli>(stop - start).count();
    rec.client_tx_bytes =
        log.ledger.total(Direction::kClientToServer).bytes - tx0;
    rec.client_rx_bytes =
        log.ledger.total(Direction::kServerToClient).bytes - rx0;
    log.records.push_back(rec);
  }
  double final_grad_sq;
  observe(&log.final_loss, &final_grad_sq);
  log.objective_decrease = log.initial_loss - log.final_loss;
  log.mean_grad_norm_sq = grad_sq_sum / static_cast<double>(cfg.iters);
  if (can_instrument) {
    log.final_theta = concat(client.params(), server_snapshot());
  } else {
    log.final_theta = client.params();
  }
  tr.set_tap(nullptr);
  return log;
}

}  // namespace

TrainLog run_training(const TrainingConfig& cfg, RunHooks* hooks) {
  cfg.validate();
  const Dataset ds = generate_dataset(cfg.dataset);
  const TaskBundle task =
      make_task(cfg.model, ds, cfg.master_seed, cfg.batch_size);

  std::unique_ptr<Transport> client_tr;
  std::unique_ptr<Transport> server_tr;
  std::unique_ptr<TcpListener> listener;
  if (cfg.transport == TransportKind::kInproc) {
    auto pair = make_inproc_pair();
    client_tr = std::move(pair.first);
    server_tr = std::move(pair.second);
  } else {
    listener = std::make_unique<TcpListener>(HostPort{"127.0.0.1", 0});
    client_tr = tcp_connect(HostPort{"127.0.0.1", listener->port()});
    server_tr = listener->accept();
  }

  ServerEndpoint server(*task.server, server_config(cfg), task.theta_s0);
  std::exception_ptr server_error;
  std::thread server_thread([&] {
    try {
      server.run_loop(*server_tr);
    } catch (...) {
      server_error = std::current_exception();
      server_tr->close();
    }
  });

  TrainLog log;
  std::exception_ptr client_error;
  try {
    log = drive_client(
        cfg, task, *client_tr, [&] { return server.snapshot_params(); },
        hooks);
  } catch (...) {
    client_error = std::current_exception();
  }
  client_tr->close();
  server_thread.join();
  if (client_error) std::rethrow_exception(client_error);
  if (server_error) std::rethrow_exception(server_error);
  return log;
}

void run_server_standalone(const TrainingConfig& cfg,
                           const HostPort& listen) {
  cfg.validate();
  const auto server_task = make_server_task(
      cfg.model,
      cfg.dataset.kind == DatasetKind::kBlobs ? LossKind::kCrossEntropy
                                              : LossKind::kMse,
      cfg.dataset.dims);
  std::vector<double> theta0 =
      initial_server_params(cfg.model, cfg.master_seed, cfg.dataset.dims);
  TcpListener listener(listen);
  auto tr = listener.accept();
  ServerEndpoint server(*server_task, server_config(cfg), std::move(theta0));
  server.run_loop(*tr);
}

TrainLog run_client_standalone(const TrainingConfig& cfg,
                               const HostPort& connect) {
  cfg.validate();
  const Dataset ds = generate_dataset(cfg.dataset);
  TaskBundle task = make_task(cfg.model, ds, cfg.master_seed, cfg.batch_size);
  auto tr = tcp_connect(connect);
  // No server snapshot across processes; loss columns log NaN.
  TrainLog log = drive_client(cfg, task, *tr, nullptr, nullptr);
  tr->close();
  return log;
}

BoundReport bound_check(const TrainLog& log, const TheoryParams& params) {
  return bound_check(log.mean_grad_norm_sq, log.objective_decrease, params);
}

}  // namespace hosl
