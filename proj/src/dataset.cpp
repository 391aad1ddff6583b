#include "hosl/dataset.hpp"

#include <cmath>

#include "hosl/prng.hpp"

namespace hosl {

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.dims < 1) throw ConfigError("dataset dims must be >= 1");
  if (spec.samples < 1) throw ConfigError("dataset needs samples");
  if (spec.noise < 0.0) throw ConfigError("noise must be >= 0");
  PrngStream stream(derive_seed(spec.seed, StreamPurpose::kData));
  Dataset ds;
  ds.spec = spec;
  const std::size_t m = spec.samples;
  const std::size_t n = spec.dims;
  switch (spec.kind) {
    case DatasetKind::kQuadratic: {
      ds.features = Matrix(m, n);
      for (double& v : ds.features.data) v = stream.next_normal();
      std::vector<double> theta_star(n);
      for (double& v : theta_star) v = stream.next_normal();
      ds.targets = Matrix(m, 1);
      for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          s += ds.features.at(r, c) * theta_star[c];
        }
        ds.targets.at(r, 0) = s + spec.noise * stream.next_normal();
      }
      ds.loss_kind = LossKind::kMse;
      break;
    }
    case DatasetKind::kLinreg: {
      ds.features = Matrix(m, n);
      for (double& v : ds.features.data) v = stream.next_normal();
      std::vector<double> w(n);
      for (double& v : w) v = stream.next_normal();
      ds.targets = Matrix(m, 1);
      for (std::size_t r = 0; r < m; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += ds.features.at(r, c) * w[c];
        ds.targets.at(r, 0) =
            std::tanh(s) + spec.noise * stream.next_normal();
      }
      ds.loss_kind = LossKind::kMse;
      break;
    }
    case DatasetKind::kBlobs: {
      if (spec.classes < 2) throw ConfigError("blobs need >= 2 classes");
      Matrix centers(spec.classes, n);
      for (double& v : centers.data) v = 3.0 * stream.next_normal();
      ds.features = Matrix(m, n);
      ds.targets = Matrix(m, 1);
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t cls =
            static_cast<std::size_t>(stream.next_u64() % spec.classes);
        ds.targets.at(r, 0) = static_cast<double>(cls);
        for (std::size_t c = 0; c < n; ++c) {
          ds.features.at(r, c) =
              centers.at(cls, c) + spec.noise * stream.next_normal();
        }
      }
      ds.loss_kind = LossKind::kCrossEntropy;
      break;
    }
  }
  return ds;
}

double quadratic_smoothness(const Dataset& ds) {
  if (ds.spec.kind != DatasetKind::kQuadratic) {
    throw ConfigError("smoothness constant requires the quadratic dataset");
  }
  const std::size_t m = ds.size();
  const std::size_t d = ds.features.cols;
  // Gram matrix G = A^T A / m, then power iteration.
  Matrix g(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < m; ++r) {
        s += ds.features.at(r, i) * ds.features.at(r, j);
      }
      s /= static_cast<double>(m);
      g.at(i, j) = s;
      g.at(j, i) = s;
    }
  }
  PrngStream stream(derive_seed(ds.spec.seed, StreamPurpose::kData, 1));
  std::vector<double> v(d);
  for (double& x : v) x = stream.next_normal();
  double lambda = 0.0;
  std::vector<double> gv(d);
  for (int it = 0; it < 2000; ++it) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += g.at(i, j) * v[j];
      gv[i] = s;
    }
    const double nrm = norm(gv);
    if (nrm == 0.0) return 0.0;
    for (std::size_t i = 0; i < d; ++i) v[i] = gv[i] / nrm;
    const double prev = lambda;
    lambda = nrm;
    if (it > 10 && std::abs(lambda - prev) <= 1e-13 * lambda) break;
  }
  return lambda;
}

std::vector<std::size_t> sample_indices(const Dataset& ds,
                                        std::uint64_t master_seed,
                                        std::uint64_t t,
                                        std::size_t batch_size) {
  const std::size_t m = ds.size();
  std::vector<std::size_t> idx;
  if (batch_size >= m) {
    idx.resize(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    return idx;
  }
  PrngStream stream(derive_seed(master_seed, StreamPurpose::kBatch, t));
  idx.resize(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    idx[i] = static_cast<std::size_t>(stream.next_u64() % m);
  }
  return idx;
}

Minibatch take_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Minibatch b;
  b.x = Matrix(idx.size(), ds.features.cols);
  b.y = Matrix(idx.size(), ds.targets.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < ds.features.cols; ++c) {
      b.x.at(r, c) = ds.features.at(idx[r], c);
    }
    for (std::size_t c = 0; c < ds.targets.cols; ++c) {
      b.y.at(r, c) = ds.targets.at(idx[r], c);
    }
  }
  return b;
}

}  // namespace hosl
