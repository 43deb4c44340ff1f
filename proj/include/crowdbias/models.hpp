#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crowdbias/aggregation.hpp"
#include "crowdbias/dataset.hpp"

namespace crowdbias {

// Sorted, duplicate-free (index, value) pairs.
struct SparseVector {
  std::vector<std::pair<std::uint32_t, double>> entries;

  double dot(std::span<const double> dense) const;
  bool operator==(const SparseVector&) const = default;
};

// 64-bit FNV-1a.
std::uint64_t hash_token(std::string_view token);

// Bag of hashed tokens: lowercase, split on runs of non-alphanumeric bytes,
// count each token at hash(token) mod dim. `dim` must be a power of two.
SparseVector featurize(std::string_view text, std::uint32_t dim);

struct FeatureMatrix {
  std::uint32_t dim = 0;
  std::vector<SparseVector> rows;
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 20;
  double l2 = 1e-4;
  std::size_t batch_size = 64;
  std::uint64_t seed = 42;
  std::uint32_t hash_dim = 1u << 16;
};

// Logistic regression. Label 1 is the positive class.
struct LRModel {
  std::vector<double> weights;
  double bias = 0.0;
  TrainConfig config;
  std::vector<double> loss_trace;  // regularized loss after each epoch

  double probability(const SparseVector& x) const;
};

struct LossGradient {
  std::vector<double> weights;
  double bias = 0.0;
};

// Mean log-loss plus (l2 / 2) * |w|^2; the bias is not regularized.
double logistic_loss(const LRModel& model, const FeatureMatrix& x,
                     std::span<const int> y, double l2);
LossGradient logistic_gradient(const LRModel& model, const FeatureMatrix& x,
                               std::span<const int> y, double l2);

// Mini-batch gradient descent over seeded shuffles. Throws InputError on a
// size or dimension mismatch, non-binary labels, or an empty training set.
LRModel train_lr(const FeatureMatrix& x, std::span<const int> y,
                 const TrainConfig& config);

// One-hot layout of worker attributes appended after the hashed text.
struct AttributeEncoding {
  std::vector<std::pair<std::string, std::vector<std::string>>> attributes;

  static AttributeEncoding from_dataset(const Dataset& dataset);
  std::size_t width() const;
  // Offsets (relative to the start of the block) of the worker's categories.
  std::vector<std::uint32_t> active(const Worker& worker) const;
};

enum class ModelKind { kModel1, kModel2, kOracle };

std::string_view to_string(ModelKind kind);
// "m1" / "1", "m2" / "2", "oracle" / "m3" / "3".
ModelKind parse_model_kind(std::string_view name);

// A per-(sample, worker) label predictor: model1 reads the text only, model2
// the text plus the worker's attributes, the oracle replays annotations.
class Predictor {
 public:
  static Predictor model1(LRModel model, ScaleSpec scale);
  static Predictor model2(LRModel model, ScaleSpec scale, AttributeEncoding encoding);
  static Predictor oracle(std::shared_ptr<const Dataset> dataset);

  ModelKind kind() const { return kind_; }
  const LRModel* model() const { return model_ ? &*model_ : nullptr; }
  const ScaleSpec& scale() const { return scale_; }
  const AttributeEncoding& encoding() const { return encoding_; }

  SparseVector features(const Sample& sample, const Worker& worker) const;
  // Throws ComputeError when the oracle has no annotation for the pair.
  int predict(const Sample& sample, const Worker& worker) const;

 private:
  Predictor() = default;

  ModelKind kind_ = ModelKind::kOracle;
  std::optional<LRModel> model_;
  ScaleSpec scale_;
  AttributeEncoding encoding_;
  std::shared_ptr<const Dataset> dataset_;
};

// Binary target of a two-value scale: 1 for the more toxic value.
int binary_target(const ScaleSpec& scale, int label);

// Text -> MV label, one row per sample. Needs a two-value scale.
Predictor build_model1(const Dataset& train, const TrainConfig& config = {});
// Text + worker attributes -> that worker's label, one row per annotation.
Predictor build_model2(const Dataset& train, const TrainConfig& config = {});
Predictor build_model3(const Dataset& dataset);

struct SampleSplit {
  std::vector<std::string> train;
  std::vector<std::string> eval;
  double eval_fraction = 0.2;
  std::uint64_t seed = 42;
};

// Splits samples (not annotations) into train / eval, stratified on the MV
// label so both sides keep the label mix.
SampleSplit split_samples(const Dataset& dataset, const AggregatedLabels& mv,
                          double eval_fraction = 0.2, std::uint64_t seed = 42);

// model.bin: little-endian, see README for the layout.
void save_model(const Predictor& predictor, const std::string& path);
Predictor load_model(const std::string& path);

}  // namespace crowdbias
