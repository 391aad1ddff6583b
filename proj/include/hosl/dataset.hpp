#ifndef HOSL_DATASET_HPP
#define HOSL_DATASET_HPP

#include <cstdint>
#include <vector>

#include "hosl/model.hpp"

namespace hosl {

enum class DatasetKind { kQuadratic, kLinreg, kBlobs };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kQuadratic;
  std::size_t dims = 8;       // quadratic: theta dim; linreg/blobs: inputs
  std::size_t samples = 128;  // m
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::size_t classes = 2;  // blobs only
};

// Synthetic, fully seed-determined data.
//
//   quadratic: features A (m x d) with standard-normal entries, targets
//              b = A theta_star + noise * g. Full-batch objective
//              (1/2m) ||A theta - b||^2; A and b stay exposed for
//              closed-form oracles.
//   linreg:    inputs X (m x n), targets y = tanh(X w) + noise * g (m x 1),
//              trained with MSE.
//   blobs:     class centers plus noise * g, labels are class indices,
//              trained with softmax cross-entropy.
struct Dataset {
  DatasetSpec spec;
  Matrix features;
  Matrix targets;
  LossKind loss_kind = LossKind::kMse;

  std::size_t size() const { return features.rows; }
};

Dataset generate_dataset(const DatasetSpec& spec);

// Largest eigenvalue of (A^T A) / m for the quadratic objective, by power
// iteration; the L constant handed to the theory calculator.
double quadratic_smoothness(const Dataset& ds);

// Minibatch of `batch_size` rows drawn with replacement from the stream
// derive_seed(master, kBatch, t). batch_size >= m returns the whole dataset
// in row order (full-batch mode).
std::vector<std::size_t> sample_indices(const Dataset& ds,
                                        std::uint64_t master_seed,
                                        std::uint64_t t,
                                        std::size_t batch_size);

Minibatch take_rows(const Dataset& ds, const std::vector<std::size_t>& idx);

}  // namespace hosl

#endif  // HOSL_DATASET_HPP
