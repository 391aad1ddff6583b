#include <doctest.h>

#include <cmath>

#include "hosl/model.hpp"
#include "hosl/prng.hpp"
#include "support/test_util.hpp"

using namespace hosl;
using testutil::max_rel_err;

namespace {

// Random instances for the oracle property tests. Activations avoid relu
// here so the finite-difference oracle is valid everywhere; relu has its
// own dedicated checks below.
SplitModel random_model(PrngStream& stream, bool allow_relu = false) {
  const std::size_t depth = 2 + stream.next_u64() % 2;  // 2..3 layers
  std::vector<LayerSpec> layers;
  std::size_t in = 2 + stream.next_u64() % 4;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t out = (i + 1 == depth) ? 1 + stream.next_u64() % 3
                                             : 2 + stream.next_u64() % 5;
    const std::uint64_t pick = stream.next_u64() % (allow_relu ? 3 : 2);
    const Activation act = pick == 0   ? Activation::kTanh
                           : pick == 1 ? Activation::kIdentity
                                       : Activation::kRelu;
    layers.push_back({in, out, act});
    in = out;
  }
  const std::size_t cut = 1 + stream.next_u64() % (depth - 1 ? depth - 1 : 1);
  return build_split_model(std::move(layers), cut, stream.next_u64());
}

Minibatch random_batch(PrngStream& stream, const SplitModel& m) {
  const std::size_t b = 1 + stream.next_u64() % 6;
  Minibatch batch;
  batch.x = Matrix(b, m.layers.front().input_dim);
  for (double& v : batch.x.data) v = stream.next_normal();
  batch.y = Matrix(b, m.layers.back().output_dim);
  for (double& v : batch.y.data) v = stream.next_normal();
  return batch;
}

std::vector<double> concat_params(const SplitModel& m) {
  std::vector<double> theta = m.client_params;
  theta.insert(theta.end(), m.server_params.begin(), m.server_params.end());
  return theta;
}

}  // namespace

TEST_CASE("parameter counting at the cut") {
  SplitModel m = build_split_model(
      {{2, 2, Activation::kIdentity}, {2, 1, Activation::kIdentity}}, 1, 0);
  CHECK(m.client_dim() == 6);  // 2*2 weights + 2 biases
  CHECK(m.server_dim() == 3);  // 2*1 weights + 1 bias

  SplitModel big = build_split_model({{4, 8, Activation::kTanh},
                                      {8, 8, Activation::kTanh},
                                      {8, 3, Activation::kIdentity}},
                                     2, 0);
  CHECK(big.client_dim() == 112);  // (4*8+8) + (8*8+8)
  CHECK(big.server_dim() == 27);   // 8*3+3
}

TEST_CASE("d_c + d_s is invariant across cuts") {
  const std::vector<LayerSpec> layers{{3, 5, Activation::kTanh},
                                      {5, 4, Activation::kRelu},
                                      {4, 2, Activation::kIdentity}};
  std::size_t total = 0;
  for (std::size_t k = 1; k < layers.size(); ++k) {
    SplitModel m = build_split_model(layers, k, 9);
    if (k == 1) total = m.total_dim();
    CHECK(m.total_dim() == total);
  }
}

TEST_CASE("same init seed reproduces parameters bitwise") {
  const std::vector<LayerSpec> layers{{4, 8, Activation::kTanh},
                                      {8, 3, Activation::kIdentity}};
  SplitModel a = build_split_model(layers, 1, 77);
  SplitModel b = build_split_model(layers, 1, 77);
  CHECK(a.client_params == b.client_params);
  CHECK(a.server_params == b.server_params);
  // init bound is 1/sqrt(fan_in)
  for (double v : a.client_params) CHECK(std::abs(v) <= 0.5);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(
      build_split_model({{2, 2, Activation::kIdentity}}, 1, 0), ConfigError);
  CHECK_THROWS_AS(build_split_model({{2, 2, Activation::kIdentity},
                                     {3, 1, Activation::kIdentity}},
                                    1, 0),
                  ConfigError);
  CHECK_THROWS_AS(build_split_model({{2, 2, Activation::kIdentity},
                                     {2, 1, Activation::kIdentity}},
                                    2, 0),
                  ConfigError);
}

TEST_CASE("client_forward on closed-form instances") {
  SplitModel m = build_split_model(
      {{2, 2, Activation::kIdentity}, {2, 1, Activation::kIdentity}}, 1, 0);
  // identity weights, zero bias
  std::vector<double> theta{1, 0, 0, 1, 0, 0};
  Minibatch batch;
  batch.x = Matrix(1, 2, {1.0, 2.0});
  batch.y = Matrix(1, 1, {0.0});
  const ActivationBatch h = client_forward(m, theta, batch);
  CHECK(h.values.at(0, 0) == 1.0);
  CHECK(h.values.at(0, 1) == 2.0);

  std::vector<double> zeros(6, 0.0);
  const ActivationBatch hz = client_forward(m, zeros, batch);
  CHECK(hz.values.at(0, 0) == 0.0);
  CHECK(hz.values.at(0, 1) == 0.0);

  SplitModel m1 = build_split_model(
      {{1, 1, Activation::kTanh}, {1, 1, Activation::kIdentity}}, 1, 0);
  std::vector<double> w{1.0, 0.0};
  Minibatch b1;
  b1.x = Matrix(1, 1, {0.5});
  b1.y = Matrix(1, 1, {0.0});
  CHECK(client_forward(m1, w, b1).values.at(0, 0) ==
        doctest::Approx(0.46211715726000974).epsilon(1e-12));
}

TEST_CASE("client_forward is pure") {
  PrngStream stream(11);
  SplitModel m = random_model(stream);
  Minibatch batch = random_batch(stream, m);
  const ActivationBatch a = client_forward(m, m.client_params, batch);
  const ActivationBatch b = client_forward(m, m.client_params, batch);
  CHECK(a.values == b.values);
}

TEST_CASE("server_forward losses on identity instances") {
  // Server = single identity layer with identity weights: pred == h.
  SplitModel m = build_split_model(
      {{1, 1, Activation::kIdentity}, {1, 1, Activation::kIdentity}}, 1, 0);
  std::vector<double> theta_s{1.0, 0.0};
  Matrix h(1, 1, {1.0});
  Matrix y0(1, 1, {1.0});
  CHECK(server_forward(m, theta_s, h, y0, LossKind::kMse).value == 0.0);
  Matrix y1(1, 1, {0.0});
  CHECK(server_forward(m, theta_s, h, y1, LossKind::kMse).value ==
        doctest::Approx(0.5).epsilon(1e-15));
  // batch mean of per-sample losses 0.2 and 0.4
  Matrix h2(2, 1, {std::sqrt(0.4), std::sqrt(0.8)});
  Matrix y2(2, 1, {0.0, 0.0});
  CHECK(server_forward(m, theta_s, h2, y2, LossKind::kMse).value ==
        doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("server_backward activation gradient on the identity instance") {
  SplitModel m = build_split_model(
      {{1, 1, Activation::kIdentity}, {1, 1, Activation::kIdentity}}, 1, 0);
  std::vector<double> theta_s{1.0, 0.0};
  Matrix h(1, 1, {1.0});
  Matrix y(1, 1, {0.0});
  const ServerBackwardResult r =
      server_backward(m, theta_s, h, y, LossKind::kMse);
  CHECK(r.activation_grad.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.loss == doctest::Approx(0.5));
}

TEST_CASE("server gradient vanishes at a loss-minimizing point") {
  SplitModel m = build_split_model(
      {{2, 2, Activation::kIdentity}, {2, 1, Activation::kIdentity}}, 1, 3);
  // Server weights solving the instance exactly: pred = h0 => y.
  std::vector<double> theta_s{1.0, 0.0, 0.0};
  Matrix h(3, 2, {0.5, 9, -1.25, 9, 2.0, 9});
  Matrix y(3, 1, {0.5, -1.25, 2.0});
  const ServerBackwardResult r =
      server_backward(m, theta_s, h, y, LossKind::kMse);
  CHECK(norm(r.server_grad) < 1e-8);
}

TEST_CASE("zero activation gradient backpropagates to zero") {
  PrngStream stream(21);
  SplitModel m = random_model(stream);
  Minibatch batch = random_batch(stream, m);
  const ActivationBatch h = client_forward(m, m.client_params, batch);
  Matrix zero(h.values.rows, h.values.cols);
  const std::vector<double> g =
      client_backward(m, m.client_params, batch, zero);
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("split backprop equals monolithic backprop and finite differences") {
  PrngStream stream(1234);
  for (int instance = 0; instance < 100; ++instance) {
    SplitModel m = random_model(stream);
    Minibatch batch = random_batch(stream, m);
    std::vector<double> theta = concat_params(m);

    // Route 1: chained split gradient.
    const auto theta_c =
        std::span<const double>(theta).first(m.client_dim());
    const auto theta_s =
        std::span<const double>(theta).subspan(m.client_dim());
    const ActivationBatch h = client_forward(m, theta_c, batch);
    const ServerBackwardResult sb =
        server_backward(m, theta_s, h.values, batch.y, LossKind::kMse);
    const std::vector<double> gc =
        client_backward(m, theta_c, batch, sb.activation_grad);

    // Route 2: monolithic reverse mode.
    const std::vector<double> gfull =
        full_grad(m, theta, batch, LossKind::kMse);
    std::vector<double> gsplit = gc;
    gsplit.insert(gsplit.end(), sb.server_grad.begin(), sb.server_grad.end());
    REQUIRE(gsplit.size() == gfull.size());
    CHECK(max_rel_err(gsplit, gfull) < 1e-12);

    // Route 3: central finite differences.
    const std::vector<double> gfd =
        finite_diff_grad(m, theta, batch, LossKind::kMse, 1e-5);
    CHECK(testutil::allclose(gfull, gfd, 1e-4, 1e-8));
  }
}

TEST_CASE("relu path: split equals monolithic; finite differences off-kink") {
  PrngStream stream(555);
  for (int instance = 0; instance < 20; ++instance) {
    SplitModel m = random_model(stream, /*allow_relu=*/true);
    Minibatch batch = random_batch(stream, m);
    std::vector<double> theta = concat_params(m);
    const std::vector<double> gfull =
        full_grad(m, theta, batch, LossKind::kMse);
    const auto theta_c = std::span<const double>(theta).first(m.client_dim());
    const auto theta_s = std::span<const double>(theta).subspan(m.client_dim());
    const ActivationBatch h = client_forward(m, theta_c, batch);
    const ServerBackwardResult sb =
        server_backward(m, theta_s, h.values, batch.y, LossKind::kMse);
    std::vector<double> gsplit =
        client_backward(m, theta_c, batch, sb.activation_grad);
    gsplit.insert(gsplit.end(), sb.server_grad.begin(), sb.server_grad.end());
    CHECK(max_rel_err(gsplit, gfull) < 1e-12);
  }
  // Fixed relu layer evaluated away from the kink: FD oracle applies.
  SplitModel m = build_split_model(
      {{2, 3, Activation::kRelu}, {3, 1, Activation::kIdentity}}, 1, 17);
  Minibatch batch;
  batch.x = Matrix(2, 2, {0.8, -0.4, -0.3, 0.9});
  batch.y = Matrix(2, 1, {0.25, -0.5});
  std::vector<double> theta = concat_params(m);
  const std::vector<double> gfull = full_grad(m, theta, batch, LossKind::kMse);
  const std::vector<double> gfd =
      finite_diff_grad(m, theta, batch, LossKind::kMse, 1e-5);
  CHECK(testutil::allclose(gfull, gfd, 1e-4, 1e-8));
}

TEST_CASE("cross-entropy gradients match finite differences") {
  PrngStream stream(31);
  SplitModel m = build_split_model({{3, 5, Activation::kTanh},
                                    {5, 4, Activation::kIdentity}},
                                   1, 5);
  Minibatch batch;
  batch.x = Matrix(4, 3);
  for (double& v : batch.x.data) v = stream.next_normal();
  batch.y = Matrix(4, 1, {0.0, 3.0, 1.0, 2.0});
  std::vector<double> theta = concat_params(m);
  const std::vector<double> g =
      full_grad(m, theta, batch, LossKind::kCrossEntropy);
  const std::vector<double> gfd =
      finite_diff_grad(m, theta, batch, LossKind::kCrossEntropy, 1e-5);
  CHECK(testutil::allclose(g, gfd, 1e-4, 1e-8));
}

TEST_CASE("full_loss equals the composed two-stage evaluation bitwise") {
  PrngStream stream(41);
  for (int i = 0; i < 10; ++i) {
    SplitModel m = random_model(stream);
    Minibatch batch = random_batch(stream, m);
    std::vector<double> theta = concat_params(m);
    const auto theta_c = std::span<const double>(theta).first(m.client_dim());
    const auto theta_s = std::span<const double>(theta).subspan(m.client_dim());
    const ActivationBatch h = client_forward(m, theta_c, batch);
    const double two_stage =
        server_forward(m, theta_s, h.values, batch.y, LossKind::kMse).value;
    CHECK(full_loss(m, theta, batch, LossKind::kMse) == two_stage);
  }
}

TEST_CASE("batch row permutation leaves the mean loss unchanged") {
  PrngStream stream(51);
  SplitModel m = random_model(stream);
  Minibatch batch = random_batch(stream, m);
  std::vector<double> theta = concat_params(m);
  const double base = full_loss(m, theta, batch, LossKind::kMse);
  // Reverse the rows.
  Minibatch rev = batch;
  const std::size_t b = batch.x.rows;
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t c = 0; c < batch.x.cols; ++c) {
      rev.x.at(r, c) = batch.x.at(b - 1 - r, c);
    }
    for (std::size_t c = 0; c < batch.y.cols; ++c) {
      rev.y.at(r, c) = batch.y.at(b - 1 - r, c);
    }
  }
  CHECK(testutil::rel_err(full_loss(m, theta, rev, LossKind::kMse), base) <
        1e-12);
}

TEST_CASE("quadratic objective realized as a linear one-layer model") {
  // L(theta) = (1/2m)||A theta - b||^2 via a 1-layer model evaluated with
  // full_grad on an unsplit wrapper: model input row = A row, weight row =
  // theta, no nonlinearity. Bias column is fixed to zero in the data.
  PrngStream stream(61);
  const std::size_t d = 4, mrows = 8;
  Matrix a(mrows, d);
  for (double& v : a.data) v = stream.next_normal();
  Matrix b(mrows, 1);
  for (double& v : b.data) v = stream.next_normal();
  SplitModel lin = build_split_model(
      {{d, 1, Activation::kIdentity}, {1, 1, Activation::kIdentity}}, 1, 0);
  // Server layer manually pinned to the identity map.
  std::vector<double> theta(lin.total_dim(), 0.0);
  for (std::size_t i = 0; i < d; ++i) theta[i] = stream.next_normal();
  theta[d] = 0.0;          // client bias
  theta[d + 1] = 1.0;      // server weight
  theta[d + 2] = 0.0;      // server bias
  Minibatch batch{a, b};
  const double got = full_loss(lin, theta, batch, LossKind::kMse);
  double want = 0.0;
  for (std::size_t r = 0; r < mrows; ++r) {
    double pred = 0.0;
    for (std::size_t c = 0; c < d; ++c) pred += a.at(r, c) * theta[c];
    want += 0.5 * (pred - b.at(r, 0)) * (pred - b.at(r, 0));
  }
  want /= static_cast<double>(mrows);
  CHECK(testutil::rel_err(got, want) < 1e-14);
}

TEST_CASE("finite differences on closed forms") {
  // Constant loss has zero gradient.
  const auto constant = [](std::span<const double>) { return 3.5; };
  std::vector<double> theta{1.0, -2.0, 0.5};
  for (double g : finite_diff_grad(constant, theta, 1e-5)) CHECK(g == 0.0);
  // Quadratic matches A^T(A theta - b) to O(step^2).
  PrngStream stream(71);
  Matrix a(5, 3);
  for (double& v : a.data) v = stream.next_normal();
  std::vector<double> b(5);
  for (double& v : b) v = stream.next_normal();
  const auto quad = [&](std::span<const double> t) {
    double s = 0.0;
    for (std::size_t r = 0; r < 5; ++r) {
      double pred = -b[r];
      for (std::size_t c = 0; c < 3; ++c) pred += a.at(r, c) * t[c];
      s += 0.5 * pred * pred;
    }
    return s;
  };
  std::vector<double> at{0.3, -0.7, 1.1};
  const std::vector<double> gfd = finite_diff_grad(quad, at, 1e-6);
  std::vector<double> want(3, 0.0);
  for (std::size_t r = 0; r < 5; ++r) {
    double resid = -b[r];
    for (std::size_t c = 0; c < 3; ++c) resid += a.at(r, c) * at[c];
    for (std::size_t c = 0; c < 3; ++c) want[c] += resid * a.at(r, c);
  }
  CHECK(max_rel_err(gfd, want) < 1e-8);
  CHECK_THROWS_AS(finite_diff_grad(constant, theta, 0.0), ConfigError);
}

TEST_CASE("parameter serialization round-trips") {
  PrngStream stream(81);
  std::vector<double> params(37);
  for (double& v : params) v = stream.next_normal();
  const auto bytes = serialize_params(params);
  CHECK(bytes.size() == params.size() * 8);
  CHECK(deserialize_params(bytes) == params);
  // Little-endian spot check: 1.0 is 0x3FF0000000000000.
  const auto one = serialize_params(std::vector<double>{1.0});
  CHECK(one[7] == 0x3F);
  CHECK(one[6] == 0xF0);
  CHECK(one[0] == 0x00);
}

TEST_CASE("shape errors are reported") {
  SplitModel m = build_split_model(
      {{2, 2, Activation::kIdentity}, {2, 1, Activation::kIdentity}}, 1, 0);
  Minibatch bad;
  bad.x = Matrix(1, 3);
  bad.y = Matrix(1, 1);
  CHECK_THROWS_AS(client_forward(m, m.client_params, bad), ShapeError);
  std::vector<double> short_theta(3, 0.0);
  Minibatch ok;
  ok.x = Matrix(1, 2);
  ok.y = Matrix(1, 1);
  CHECK_THROWS_AS(client_forward(m, short_theta, ok), ShapeError);
}
