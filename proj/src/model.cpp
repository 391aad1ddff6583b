#include "hosl/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hosl/prng.hpp"

namespace hosl {

namespace {

double apply_act(Activation a, double v) {
  switch (a) {
    case Activation::kIdentity:
      return v;
    case Activation::kTanh:
      return std::tanh(v);
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
  }
  return v;
}

// Derivative in terms of the pre-activation value. relu'(0) is defined as 0.
double act_deriv(Activation a, double pre) {
  switch (a) {
    case Activation::kIdentity:
      return 1.0;
    case Activation::kTanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

// One dense layer: out[r, o] = act(sum_i in[r, i] * W[o, i] + b[o]).
// Returns post-activation; optionally stores the pre-activation.
Matrix layer_forward(const LayerSpec& l, std::span<const double> p,
                     const Matrix& in, Matrix* pre_out) {
  if (in.cols != l.input_dim) {
    throw ShapeError("layer input width " + std::to_string(in.cols) +
                     " != " + std::to_string(l.input_dim));
  }
  const std::size_t B = in.rows;
  const double* W = p.data();
  const double* b = p.data() + l.output_dim * l.input_dim;
  Matrix pre(B, l.output_dim);
  for (std::size_t r = 0; r < B; ++r) {
    for (std::size_t o = 0; o < l.output_dim; ++o) {
      double s = b[o];
      const double* wrow = W + o * l.input_dim;
      const double* xrow = in.data.data() + r * l.input_dim;
      for (std::size_t i = 0; i < l.input_dim; ++i) s += wrow[i] * xrow[i];
      pre.at(r, o) = s;
    }
  }
  Matrix out(B, l.output_dim);
  for (std::size_t i = 0; i < pre.data.size(); ++i) {
    out.data[i] = apply_act(l.activation, pre.data[i]);
  }
  if (pre_out) *pre_out = std::move(pre);
  return out;
}

struct LayerCache {
  Matrix input;
  Matrix pre;
};

Matrix forward_cached(std::span<const LayerSpec> layers,
                      std::span<const double> params, const Matrix& input,
                      std::vector<LayerCache>& caches) {
  caches.clear();
  caches.reserve(layers.size());
  Matrix cur = input;
  std::size_t off = 0;
  for (const LayerSpec& l : layers) {
    const std::size_t n = layer_param_count(l);
    LayerCache c;
    c.input = cur;
    cur = layer_forward(l, params.subspan(off, n), cur, &c.pre);
    caches.push_back(std::move(c));
    off += n;
  }
  return cur;
}

// Reverse pass over a layer range. grad_out is dL/d(post-activation of the
// last layer); returns dL/d(input) and fills param_grad (same layout as
// params). Loop order is fixed; both the split and monolithic gradient
// routes run through here, which is what makes them bitwise identical.
Matrix backward_layers(std::span<const LayerSpec> layers,
                       std::span<const double> params,
                       const std::vector<LayerCache>& caches, Matrix grad_out,
                       std::span<double> param_grad) {
  std::size_t off = params.size();
  for (std::size_t li = layers.size(); li-- > 0;) {
    const LayerSpec& l = layers[li];
    const std::size_t n = layer_param_count(l);
    off -= n;
    const double* W = params.data() + off;
    double* gW = param_grad.data() + off;
    double* gb = param_grad.data() + off + l.output_dim * l.input_dim;
    const LayerCache& c = caches[li];
    const std::size_t B = c.input.rows;

    Matrix dpre(B, l.output_dim);
    for (std::size_t i = 0; i < dpre.data.size(); ++i) {
      dpre.data[i] = grad_out.data[i] * act_deriv(l.activation, c.pre.data[i]);
    }
    for (std::size_t o = 0; o < l.output_dim; ++o) {
      double* gwrow = gW + o * l.input_dim;
      double gbo = 0.0;
      for (std::size_t i = 0; i < l.input_dim; ++i) gwrow[i] = 0.0;
      for (std::size_t r = 0; r < B; ++r) {
        const double d = dpre.at(r, o);
        gbo += d;
        const double* xrow = c.input.data.data() + r * l.input_dim;
        for (std::size_t i = 0; i < l.input_dim; ++i) gwrow[i] += d * xrow[i];
      }
      gb[o] = gbo;
    }
    Matrix din(B, l.input_dim);
    for (std::size_t r = 0; r < B; ++r) {
      for (std::size_t i = 0; i < l.input_dim; ++i) {
        double s = 0.0;
        for (std::size_t o = 0; o < l.output_dim; ++o) {
          s += dpre.at(r, o) * W[o * l.input_dim + i];
        }
        din.at(r, i) = s;
      }
    }
    grad_out = std::move(din);
  }
  return grad_out;
}

void check_params_size(std::span<const LayerSpec> layers,
                       std::span<const double> params, const char* who) {
  if (params.size() != param_count(layers)) {
    throw ShapeError(std::string(who) + ": parameter vector size " +
                     std::to_string(params.size()) + " != " +
                     std::to_string(param_count(layers)));
  }
}

}  // namespace

std::size_t param_count(std::span<const LayerSpec> layers) {
  std::size_t n = 0;
  for (const LayerSpec& l : layers) n += layer_param_count(l);
  return n;
}

void validate_layer_chain(std::span<const LayerSpec> layers) {
  if (layers.empty()) throw ConfigError("model needs at least one layer");
  for (const LayerSpec& l : layers) {
    if (l.input_dim < 1 || l.output_dim < 1) {
      throw ConfigError("layer dims must be >= 1");
    }
  }
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i].output_dim != layers[i + 1].input_dim) {
      throw ConfigError("layer " + std::to_string(i) + " output width " +
                        std::to_string(layers[i].output_dim) +
                        " does not chain into layer " + std::to_string(i + 1));
    }
  }
}

SplitModel build_split_model(std::vector<LayerSpec> layers, std::size_t cut,
                             std::uint64_t init_seed) {
  validate_layer_chain(layers);
  if (cut < 1 || cut >= layers.size()) {
    throw ConfigError("cut layer " + std::to_string(cut) +
                      " outside [1, " + std::to_string(layers.size() - 1) +
                      "]");
  }
  SplitModel m;
  m.layers = std::move(layers);
  m.cut = cut;
  // One stream over the whole model in serialization order, so moving the
  // cut does not change the initial point.
  PrngStream stream(init_seed);
  auto init_range = [&stream](std::span<const LayerSpec> ls,
                              std::vector<double>& out) {
    out.reserve(param_count(ls));
    for (const LayerSpec& l : ls) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.input_dim));
      const std::size_t n = layer_param_count(l);
      for (std::size_t i = 0; i < n; ++i) {
        out.push_back(bound * (2.0 * stream.next_unit() - 1.0));
      }
    }
  };
  init_range(m.client_layers(), m.client_params);
  init_range(m.server_layers(), m.server_params);
  return m;
}

Matrix forward_layers(std::span<const LayerSpec> layers,
                      std::span<const double> params, const Matrix& input) {
  check_params_size(layers, params, "forward");
  Matrix cur = input;
  std::size_t off = 0;
  for (const LayerSpec& l : layers) {
    const std::size_t n = layer_param_count(l);
    cur = layer_forward(l, params.subspan(off, n), cur, nullptr);
    off += n;
  }
  return cur;
}

double loss_value(const Matrix& pred, const Matrix& y, LossKind kind) {
  double loss;
  loss_grad(pred, y, kind, &loss);
  return loss;
}

Matrix loss_grad(const Matrix& pred, const Matrix& y, LossKind kind,
                 double* loss_out) {
  const std::size_t B = pred.rows;
  if (B == 0) throw ShapeError("empty batch");
  Matrix g(pred.rows, pred.cols);
  double loss = 0.0;
  if (kind == LossKind::kMse) {
    if (!pred.same_shape(y)) throw ShapeError("mse: pred/label shape");
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      const double r = pred.data[i] - y.data[i];
      loss += 0.5 * r * r;
      g.data[i] = r * inv_b;
    }
    loss *= inv_b;
  } else {
    if (y.rows != B || y.cols != 1) {
      throw ShapeError("cross-entropy labels must be B x 1 class indices");
    }
    const std::size_t C = pred.cols;
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t r = 0; r < B; ++r) {
      const double yl = y.at(r, 0);
      const auto cls = static_cast<std::size_t>(yl);
      if (yl < 0.0 || cls >= C || static_cast<double>(cls) != yl) {
        throw ShapeError("class index out of range");
      }
      double mx = pred.at(r, 0);
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, pred.at(r, c));
      double denom = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        denom += std::exp(pred.at(r, c) - mx);
      }
      loss += (mx + std::log(denom)) - pred.at(r, cls);
      for (std::size_t c = 0; c < C; ++c) {
        const double p = std::exp(pred.at(r, c) - mx) / denom;
        g.at(r, c) = (p - (c == cls ? 1.0 : 0.0)) * inv_b;
      }
    }
    loss *= inv_b;
  }
  if (loss_out) *loss_out = loss;
  return g;
}

ActivationBatch client_forward(const SplitModel& m,
                               std::span<const double> theta_c,
                               const Minibatch& batch, std::int64_t batch_id) {
  return {forward_layers(m.client_layers(), theta_c, batch.x), batch_id};
}

LossValue server_forward(const SplitModel& m, std::span<const double> theta_s,
                         const Matrix& h, const Matrix& y, LossKind kind) {
  const Matrix pred = forward_layers(m.server_layers(), theta_s, h);
  return {loss_value(pred, y, kind)};
}

ServerBackwardResult server_backward(const SplitModel& m,
                                     std::span<const double> theta_s,
                                     const Matrix& h, const Matrix& y,
                                     LossKind kind) {
  check_params_size(m.server_layers(), theta_s, "server_backward");
  std::vector<LayerCache> caches;
  const Matrix pred = forward_cached(m.server_layers(), theta_s, h, caches);
  ServerBackwardResult res;
  Matrix dpred = loss_grad(pred, y, kind, &res.loss);
  res.server_grad.assign(theta_s.size(), 0.0);
  res.activation_grad = backward_layers(m.server_layers(), theta_s, caches,
                                        std::move(dpred), res.server_grad);
  return res;
}

std::vector<double> client_backward(const SplitModel& m,
                                    std::span<const double> theta_c,
                                    const Minibatch& batch,
                                    const Matrix& activation_grad) {
  check_params_size(m.client_layers(), theta_c, "client_backward");
  std::vector<LayerCache> caches;
  const Matrix h = forward_cached(m.client_layers(), theta_c, batch.x, caches);
  if (!h.same_shape(activation_grad)) {
    throw ShapeError("activation gradient shape");
  }
  std::vector<double> grad(theta_c.size(), 0.0);
  backward_layers(m.client_layers(), theta_c, caches, activation_grad, grad);
  return grad;
}

double full_loss(const SplitModel& m, std::span<const double> theta,
                 const Minibatch& batch, LossKind kind) {
  if (theta.size() != m.total_dim()) throw ShapeError("full_loss: theta size");
  const auto theta_c = theta.first(m.client_dim());
  const auto theta_s = theta.subspan(m.client_dim());
  const ActivationBatch h = client_forward(m, theta_c, batch);
  return server_forward(m, theta_s, h.values, batch.y, kind).value;
}

std::vector<double> full_grad(const SplitModel& m,
                              std::span<const double> theta,
                              const Minibatch& batch, LossKind kind,
                              double* loss_out) {
  if (theta.size() != m.total_dim()) throw ShapeError("full_grad: theta size");
  const auto theta_c = theta.first(m.client_dim());
  const auto theta_s = theta.subspan(m.client_dim());
  std::vector<LayerCache> ccaches;
  const Matrix h = forward_cached(m.client_layers(), theta_c, batch.x, ccaches);
  std::vector<LayerCache> scaches;
  const Matrix pred = forward_cached(m.server_layers(), theta_s, h, scaches);
  double loss;
  Matrix dpred = loss_grad(pred, batch.y, kind, &loss);
  if (loss_out) *loss_out = loss;
  std::vector<double> grad(theta.size(), 0.0);
  std::span<double> gspan(grad);
  Matrix g_h = backward_layers(m.server_layers(), theta_s, scaches,
                               std::move(dpred),
                               gspan.subspan(m.client_dim()));
  backward_layers(m.client_layers(), theta_c, ccaches, std::move(g_h),
                  gspan.first(m.client_dim()));
  return grad;
}

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, double step) {
  if (!(step > 0.0)) throw ConfigError("finite difference step must be > 0");
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(theta.size(), 0.0);
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + step;
    const double fp = f(point);
    point[i] = orig - step;
    const double fm = f(point);
    point[i] = orig;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

std::vector<double> finite_diff_grad(const SplitModel& m,
                                     std::span<const double> theta,
                                     const Minibatch& batch, LossKind kind,
                                     double step) {
  return finite_diff_grad(
      [&](std::span<const double> t) { return full_loss(m, t, batch, kind); },
      theta, step);
}

std::vector<std::uint8_t> serialize_params(std::span<const double> params) {
  std::vector<std::uint8_t> out;
  out.reserve(params.size() * 8);
  for (double v : params) put_f64_le(out, v);
  return out;
}

std::vector<double> deserialize_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 8 != 0) throw FramingError("parameter image size");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = get_f64_le(bytes.data() + 8 * i);
  }
  return out;
}

}  // namespace hosl
