#include "ctr/ftrl.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace ctr {

void FtrlHyperparams::validate() const {
  if (!(lr_alpha > 0.0)) throw ConfigError("lr_alpha must be positive");
  if (lr_beta < 0.0 || lambda1 < 0.0 || lambda2 < 0.0) {
    throw ConfigError("lr_beta, lambda1, lambda2 must be non-negative");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
}

FtrlModel::FtrlModel(uint32_t dimension, FtrlHyperparams hyper)
    : dimension_(dimension), hyper_(hyper) {
  if (dimension == 0) throw ConfigError("model dimension must be positive");
  hyper_.validate();
  z_.assign(dimension, 0.0);
  n_.assign(dimension, 0.0);
}

double FtrlModel::weight(uint32_t i) const {
  if (i >= dimension_) throw DataError("weight index out of range");
  const double z = z_[i];
  if (std::fabs(z) <= hyper_.lambda1) return 0.0;
  const double sign = z < 0.0 ? -1.0 : 1.0;
  const double denom = (hyper_.lr_beta + std::sqrt(n_[i])) / hyper_.lr_alpha + hyper_.lambda2;
  return -(z - sign * hyper_.lambda1) / denom;
}

double FtrlModel::predict(const SparseVector& x) const {
  if (x.dimension != dimension_) {
    throw DataError("predict: vector dimension " + std::to_string(x.dimension) +
                    " != model dimension " + std::to_string(dimension_));
  }
  double a = 0.0;
  for (const auto& e : x.entries) a += weight(e.index) * e.value;
  const double p = sigmoid(a);
  return std::min(1.0 - kPredictionEps, std::max(kPredictionEps, p));
}

void FtrlModel::train_step(const SparseVector& x, int label, double w) {
  if (label != 0 && label != 1) throw DataError("label must be 0 or 1");
  if (!(w > 0.0)) throw DataError("example weight must be positive");
  const double p = predict(x);
  const double err = w * (p - static_cast<double>(label));
  for (const auto& e : x.entries) {
    const uint32_t i = e.index;
    const double g = err * e.value;
    const double n_new = n_[i] + g * g;
    const double sigma = (std::sqrt(n_new) - std::sqrt(n_[i])) / hyper_.lr_alpha;
    const double z_new = z_[i] + g - sigma * weight(i);
    if (!std::isfinite(z_new) || !std::isfinite(n_new)) {
      throw InternalError("train_step: non-finite update at coordinate " + std::to_string(i));
    }
    z_[i] = z_new;
    n_[i] = n_new;
  }
}

size_t FtrlModel::nonzero_weights() const {
  size_t count = 0;
  for (uint32_t i = 0; i < dimension_; ++i) {
    if (weight(i) != 0.0) ++count;
  }
  return count;
}

FtrlModel::TrainStats FtrlModel::train(const std::vector<TrainRow>& rows) {
  return train_stream(rows.size(), [&rows](size_t i) {
    return RowView{&rows[i].x, rows[i].label, rows[i].weight};
  });
}

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("model file truncated");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("model file truncated");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double get_f64(std::istream& in) {
  const uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_ftrl(const FtrlModel& model, std::ostream& out) {
  put_u32(out, model.dimension_);
  put_f64(out, model.hyper_.lr_alpha);
  put_f64(out, model.hyper_.lr_beta);
  put_f64(out, model.hyper_.lambda1);
  put_f64(out, model.hyper_.lambda2);
  put_u32(out, static_cast<uint32_t>(model.hyper_.epochs));
  put_u64(out, model.hyper_.shuffle_seed);
  uint64_t count = 0;
  for (uint32_t i = 0; i < model.dimension_; ++i) {
    if (model.z_[i] != 0.0 || model.n_[i] != 0.0) ++count;
  }
  put_u64(out, count);
  for (uint32_t i = 0; i < model.dimension_; ++i) {
    if (model.z_[i] != 0.0 || model.n_[i] != 0.0) {
      put_u32(out, i);
      put_f64(out, model.z_[i]);
      put_f64(out, model.n_[i]);
    }
  }
}

FtrlModel load_ftrl(std::istream& in) {
  const uint32_t dimension = get_u32(in);
  FtrlHyperparams hp;
  hp.lr_alpha = get_f64(in);
  hp.lr_beta = get_f64(in);
  hp.lambda1 = get_f64(in);
  hp.lambda2 = get_f64(in);
  hp.epochs = static_cast<int>(get_u32(in));
  hp.shuffle_seed = get_u64(in);
  FtrlModel model(dimension, hp);
  const uint64_t count = get_u64(in);
  for (uint64_t k = 0; k < count; ++k) {
    const uint32_t i = get_u32(in);
    if (i >= dimension) throw DataError("model file: coordinate out of range");
    model.z_[i] = get_f64(in);
    model.n_[i] = get_f64(in);
    if (model.n_[i] < 0.0) throw DataError("model file: negative n accumulator");
  }
  return model;
}

}  // namespace ctr
