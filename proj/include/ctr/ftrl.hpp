#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <numeric>
#include <vector>

#include "ctr/common.hpp"
#include "ctr/rng.hpp"
#include "ctr/sparse_vector.hpp"

namespace ctr {

inline constexpr double kPredictionEps = 1e-15;

struct FtrlHyperparams {
  double lr_alpha = 0.1;   // per-coordinate learning-rate numerator
  double lr_beta = 1.0;    // learning-rate stabilizer
  double lambda1 = 0.1;    // L1 strength
  double lambda2 = 0.0;    // L2 strength
  int epochs = 1;
  uint64_t shuffle_seed = 0;

  void validate() const;
};

// Sparse logistic regression with the per-coordinate FTRL-Proximal update.
// State is the (z, n) accumulator pair per coordinate; weights are
// materialized on demand through the L1 soft threshold.
class FtrlModel {
 public:
  FtrlModel(uint32_t dimension, FtrlHyperparams hyper);

  uint32_t dimension() const { return dimension_; }
  const FtrlHyperparams& hyper() const { return hyper_; }

  double weight(uint32_t i) const;
  double z_at(uint32_t i) const { return z_[i]; }
  double n_at(uint32_t i) const { return n_[i]; }

  // sigmoid(w . x), clamped to [kPredictionEps, 1 - kPredictionEps].
  double predict(const SparseVector& x) const;

  // One FTRL-Proximal step on a single example; weight is the example's
  // importance weight (subsampling correction).
  void train_step(const SparseVector& x, int label, double weight = 1.0);

  size_t nonzero_weights() const;

  struct TrainStats {
    double progressive_log_loss = 0.0;  // weighted, first epoch, pre-update predictions
    uint64_t rows = 0;
  };

  // Streamed training: row_at(i) materializes row i into caller-owned storage
  // and returns views. Epoch 1 visits rows in stream order; later epochs use
  // a deterministic shuffle from shuffle_seed.
  struct RowView {
    const SparseVector* x;
    int label;
    double weight;
  };
  template <typename RowFn>
  TrainStats train_stream(size_t row_count, RowFn&& row_at) {
    hyper_.validate();
    TrainStats stats;
    double loss_sum = 0.0, weight_sum = 0.0;
    std::vector<size_t> order;
    for (int epoch = 0; epoch < hyper_.epochs; ++epoch) {
      if (epoch == 0) {
        for (size_t i = 0; i < row_count; ++i) {
          const RowView row = row_at(i);
          const double p = predict(*row.x);
          loss_sum += row.weight * (row.label ? -std::log(p) : -std::log(1.0 - p));
          weight_sum += row.weight;
          train_step(*row.x, row.label, row.weight);
        }
      } else {
        if (order.empty()) {
          order.resize(row_count);
          std::iota(order.begin(), order.end(), size_t{0});
        }
        Rng rng(mix64(hyper_.shuffle_seed ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(epoch))));
        for (size_t i = row_count; i > 1; --i) {
          const size_t j = rng.below(i);
          std::swap(order[i - 1], order[j]);
        }
        for (size_t i = 0; i < row_count; ++i) {
          const RowView row = row_at(order[i]);
          train_step(*row.x, row.label, row.weight);
        }
      }
    }
    stats.rows = static_cast<uint64_t>(row_count) * static_cast<uint64_t>(hyper_.epochs);
    stats.progressive_log_loss = weight_sum > 0.0 ? loss_sum / weight_sum : 0.0;
    return stats;
  }

  struct TrainRow {
    SparseVector x;
    int label;
    double weight = 1.0;
  };
  TrainStats train(const std::vector<TrainRow>& rows);

  bool operator==(const FtrlModel& o) const {
    return dimension_ == o.dimension_ && z_ == o.z_ && n_ == o.n_;
  }

 private:
  friend void save_ftrl(const FtrlModel&, std::ostream&);
  friend FtrlModel load_ftrl(std::istream&);

  uint32_t dimension_;
  FtrlHyperparams hyper_;
  std::vector<double> z_;
  std::vector<double> n_;
};

// Binary (z, n) triple serialization; round-trips bit-exactly.
void save_ftrl(const FtrlModel& model, std::ostream& out);
FtrlModel load_ftrl(std::istream& in);

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Inverse sigmoid of a probability already clamped away from {0, 1}.
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace ctr
