#include "hosl/task.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hosl/prng.hpp"

namespace hosl {

namespace {

class NetClientTask final : public ClientTask {
 public:
  explicit NetClientTask(std::shared_ptr<const SplitModel> m)
      : m_(std::move(m)) {}

  std::size_t dim() const override { return m_->client_dim(); }

  Matrix forward(std::span<const double> theta_c,
                 const Minibatch& batch) const override {
    return client_forward(*m_, theta_c, batch).values;
  }

  std::vector<double> backward(std::span<const double> theta_c,
                               const Minibatch& batch,
                               const Matrix& g) const override {
    return client_backward(*m_, theta_c, batch, g);
  }

 private:
  std::shared_ptr<const SplitModel> m_;
};

class NetServerTask final : public ServerTask {
 public:
  NetServerTask(std::shared_ptr<const SplitModel> m, LossKind kind)
      : m_(std::move(m)), kind_(kind) {}

  std::size_t dim() const override { return m_->server_dim(); }

  double loss(std::span<const double> theta_s, const Matrix& h,
              const Matrix& y) const override {
    return server_forward(*m_, theta_s, h, y, kind_).value;
  }

  BackwardResult backward(std::span<const double> theta_s, const Matrix& h,
                          const Matrix& y) const override {
    ServerBackwardResult r = server_backward(*m_, theta_s, h, y, kind_);
    return {r.loss, std::move(r.server_grad), std::move(r.activation_grad)};
  }

 private:
  std::shared_ptr<const SplitModel> m_;
  LossKind kind_;
};

// Block-partitioned quadratic: the client's sub-function is the linear form
// x_c . theta_c sent as a B x 1 activation column; the label block carries
// the server-side features and the target, so the server stays stateless.
class QuadClientTask final : public ClientTask {
 public:
  explicit QuadClientTask(std::size_t dc) : dc_(dc) {}

  std::size_t dim() const override { return dc_; }

  Matrix forward(std::span<const double> theta_c,
                 const Minibatch& batch) const override {
    if (theta_c.size() != dc_ || batch.x.cols != dc_) {
      throw ShapeError("quadratic client block width");
    }
    Matrix h(batch.x.rows, 1);
    for (std::size_t r = 0; r < batch.x.rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < dc_; ++c) {
        s += batch.x.at(r, c) * theta_c[c];
      }
      h.at(r, 0) = s;
    }
    return h;
  }

  std::vector<double> backward(std::span<const double> theta_c,
                               const Minibatch& batch,
                               const Matrix& g) const override {
    if (theta_c.size() != dc_ || batch.x.cols != dc_) {
      throw ShapeError("quadratic client block width");
    }
    if (g.rows != batch.x.rows || g.cols != 1) {
      throw ShapeError("quadratic activation gradient shape");
    }
    std::vector<double> grad(dc_, 0.0);
    for (std::size_t r = 0; r < batch.x.rows; ++r) {
      const double gr = g.at(r, 0);
      for (std::size_t c = 0; c < dc_; ++c) {
        grad[c] += gr * batch.x.at(r, c);
      }
    }
    return grad;
  }

 private:
  std::size_t dc_;
};

class QuadServerTask final : public ServerTask {
 public:
  explicit QuadServerTask(std::size_t ds) : ds_(ds) {}

  std::size_t dim() const override { return ds_; }

  double loss(std::span<const double> theta_s, const Matrix& h,
              const Matrix& y) const override {
    return eval(theta_s, h, y, nullptr, nullptr);
  }

  BackwardResult backward(std::span<const double> theta_s, const Matrix& h,
                          const Matrix& y) const override {
    BackwardResult r;
    r.param_grad.assign(ds_, 0.0);
    r.activation_grad = Matrix(h.rows, 1);
    r.loss = eval(theta_s, h, y, &r.param_grad, &r.activation_grad);
    return r;
  }

 private:
  double eval(std::span<const double> theta_s, const Matrix& h,
              const Matrix& y, std::vector<double>* param_grad,
              Matrix* act_grad) const {
    if (theta_s.size() != ds_) throw ShapeError("quadratic server block");
    if (h.cols != 1 || y.cols != ds_ + 1 || y.rows != h.rows) {
      throw ShapeError("quadratic server label block shape");
    }
    const std::size_t batch = h.rows;
    const double inv_b = 1.0 / static_cast<double>(batch);
    double loss = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
      double pred = h.at(r, 0);
      for (std::size_t j = 0; j < ds_; ++j) pred += y.at(r, j) * theta_s[j];
      const double resid = pred - y.at(r, ds_);
      loss += 0.5 * resid * resid;
      if (param_grad) {
        const double d = resid * inv_b;
        for (std::size_t j = 0; j < ds_; ++j) {
          (*param_grad)[j] += d * y.at(r, j);
        }
        act_grad->at(r, 0) = d;
      }
    }
    return loss * inv_b;
  }

  std::size_t ds_;
};

class NetOracle final : public TaskOracle {
 public:
  NetOracle(std::shared_ptr<const SplitModel> m, LossKind kind, Minibatch all)
      : m_(std::move(m)), kind_(kind), all_(std::move(all)) {}

  double dataset_loss(std::span<const double> theta) const override {
    return full_loss(*m_, theta, all_, kind_);
  }

  std::vector<double> dataset_grad(
      std::span<const double> theta) const override {
    return full_grad(*m_, theta, all_, kind_);
  }

  double smoothness() const override {
    return std::numeric_limits<double>::quiet_NaN();
  }

 private:
  std::shared_ptr<const SplitModel> m_;
  LossKind kind_;
  Minibatch all_;
};

class QuadOracle final : public TaskOracle {
 public:
  QuadOracle(Matrix a, Matrix b, double lmax)
      : a_(std::move(a)), b_(std::move(b)), lmax_(lmax) {}

  double dataset_loss(std::span<const double> theta) const override {
    const std::size_t m = a_.rows;
    double loss = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      double pred = 0.0;
      for (std::size_t c = 0; c < a_.cols; ++c) {
        pred += a_.at(r, c) * theta[c];
      }
      const double resid = pred - b_.at(r, 0);
      loss += 0.5 * resid * resid;
    }
    return loss / static_cast<double>(m);
  }

  std::vector<double> dataset_grad(
      std::span<const double> theta) const override {
    const std::size_t m = a_.rows;
    const double inv_m = 1.0 / static_cast<double>(m);
    std::vector<double> grad(a_.cols, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      double pred = 0.0;
      for (std::size_t c = 0; c < a_.cols; ++c) {
        pred += a_.at(r, c) * theta[c];
      }
      const double d = (pred - b_.at(r, 0)) * inv_m;
      for (std::size_t c = 0; c < a_.cols; ++c) {
        grad[c] += d * a_.at(r, c);
      }
    }
    return grad;
  }

  double smoothness() const override { return lmax_; }

 private:
  Matrix a_;
  Matrix b_;
  double lmax_;
};

Minibatch quad_client_view(const Dataset& ds, std::size_t dc,
                           const std::vector<std::size_t>& idx) {
  const std::size_t d = ds.features.cols;
  Minibatch b;
  b.x = Matrix(idx.size(), dc);
  b.y = Matrix(idx.size(), d - dc + 1);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < dc; ++c) {
      b.x.at(r, c) = ds.features.at(idx[r], c);
    }
    for (std::size_t c = dc; c < d; ++c) {
      b.y.at(r, c - dc) = ds.features.at(idx[r], c);
    }
    b.y.at(r, d - dc) = ds.targets.at(idx[r], 0);
  }
  return b;
}

}  // namespace

double composed_loss(const ClientTask& client, const ServerTask& server,
                     std::span<const double> theta, const Minibatch& batch) {
  if (theta.size() != client.dim() + server.dim()) {
    throw ShapeError("composed_loss: theta size");
  }
  const Matrix h = client.forward(theta.first(client.dim()), batch);
  return server.loss(theta.subspan(client.dim()), h, batch.y);
}

TaskBundle make_task(const ModelConfig& cfg, const Dataset& ds,
                     std::uint64_t master_seed, std::size_t batch_size) {
  TaskBundle bundle;
  if (ds.spec.kind == DatasetKind::kQuadratic) {
    const std::size_t d = ds.features.cols;
    const std::size_t dc = cfg.quad_client_dim;
    if (dc < 1 || dc > d) {
      throw ConfigError("quadratic client dim must be in [1, " +
                        std::to_string(d) + "]");
    }
    bundle.client = std::make_unique<QuadClientTask>(dc);
    bundle.server = std::make_unique<QuadServerTask>(d - dc);
    PrngStream init(derive_seed(master_seed, StreamPurpose::kInit));
    bundle.theta_c0.resize(dc);
    bundle.theta_s0.resize(d - dc);
    for (double& v : bundle.theta_c0) v = init.next_normal();
    for (double& v : bundle.theta_s0) v = init.next_normal();
    bundle.oracle = std::make_unique<QuadOracle>(ds.features, ds.targets,
                                                 quadratic_smoothness(ds));
    bundle.batch_for = [ds, dc, master_seed, batch_size](std::uint64_t t) {
      return quad_client_view(ds, dc,
                              sample_indices(ds, master_seed, t, batch_size));
    };
  } else {
    if (cfg.layers.empty()) throw ConfigError("model layers not configured");
    if (cfg.layers.front().input_dim != ds.features.cols) {
      throw ConfigError("first layer width " +
                        std::to_string(cfg.layers.front().input_dim) +
                        " != dataset input dim " +
                        std::to_string(ds.features.cols));
    }
    const std::size_t out = cfg.layers.back().output_dim;
    if (ds.loss_kind == LossKind::kMse && out != ds.targets.cols) {
      throw ConfigError("output width must match target dim for regression");
    }
    if (ds.loss_kind == LossKind::kCrossEntropy && out < ds.spec.classes) {
      throw ConfigError("output width below class count");
    }
    auto model = std::make_shared<SplitModel>(build_split_model(
        cfg.layers, cfg.cut, derive_seed(master_seed, StreamPurpose::kInit)));
    bundle.theta_c0 = model->client_params;
    bundle.theta_s0 = model->server_params;
    bundle.client = std::make_unique<NetClientTask>(model);
    bundle.server = std::make_unique<NetServerTask>(model, ds.loss_kind);
    std::vector<std::size_t> all(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    bundle.oracle = std::make_unique<NetOracle>(model, ds.loss_kind,
                                                take_rows(ds, all));
    bundle.batch_for = [ds, master_seed, batch_size](std::uint64_t t) {
      return take_rows(ds, sample_indices(ds, master_seed, t, batch_size));
    };
  }
  return bundle;
}

std::unique_ptr<ServerTask> make_server_task(const ModelConfig& cfg,
                                             LossKind loss_kind,
                                             std::size_t total_quad_dim) {
  if (!cfg.layers.empty()) {
    auto model = std::make_shared<SplitModel>(
        build_split_model(cfg.layers, cfg.cut, 0));
    return std::make_unique<NetServerTask>(std::move(model), loss_kind);
  }
  if (total_quad_dim < cfg.quad_client_dim || cfg.quad_client_dim < 1) {
    throw ConfigError("quadratic dims for standalone server");
  }
  return std::make_unique<QuadServerTask>(total_quad_dim -
                                          cfg.quad_client_dim);
}

std::vector<double> initial_server_params(const ModelConfig& cfg,
                                          std::uint64_t master_seed,
                                          std::size_t total_quad_dim) {
  PrngStream init(derive_seed(master_seed, StreamPurpose::kInit));
  if (!cfg.layers.empty()) {
    SplitModel m = build_split_model(
        cfg.layers, cfg.cut, derive_seed(master_seed, StreamPurpose::kInit));
    return m.server_params;
  }
  const std::size_t dc = cfg.quad_client_dim;
  if (total_quad_dim < dc) throw ConfigError("quadratic dims");
  std::vector<double> theta(total_quad_dim);
  for (double& v : theta) v = init.next_normal();
  return {theta.begin() + static_cast<std::ptrdiff_t>(dc), theta.end()};
}

}  // namespace hosl
