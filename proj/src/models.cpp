#include "crowdbias/models.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "crowdbias/error.hpp"
#include "crowdbias/random.hpp"

namespace crowdbias {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

bool is_token_byte(unsigned char c) {
  return std::isalnum(c) != 0 || c >= 0x80;
}

void check_training_input(const FeatureMatrix& x, std::span<const int> y,
                          std::size_t weight_count) {
  if (x.rows.size() != y.size()) {
    throw InputError("feature rows (" + std::to_string(x.rows.size()) +
                     ") and labels (" + std::to_string(y.size()) + ") differ in size");
  }
  if (weight_count != x.dim) {
    throw InputError("weight dimension " + std::to_string(weight_count) +
                     " does not match feature dimension " + std::to_string(x.dim));
  }
  for (const auto& row : x.rows) {
    if (!row.entries.empty() && row.entries.back().first >= x.dim) {
      throw InputError("feature index outside the declared dimension");
    }
  }
  for (int label : y) {
    if (label != 0 && label != 1) throw InputError("labels must be 0 or 1");
  }
}

void require_binary(const Dataset& dataset, std::string_view what) {
  if (dataset.scale().size() != 2) {
    throw InputError(std::string(what) +
                     " needs a binary label scale; remap with set-up 1 or 2 first");
  }
}

// Little-endian serialization helpers.
void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_bytes(std::istream& in, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw InputError("model file truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes(in, 4)); }
std::uint64_t get_u64(std::istream& in) { return get_bytes(in, 8); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }
std::string get_string(std::istream& in) {
  const auto size = get_u32(in);
  if (size > (1u << 20)) throw InputError("model file: implausible string length");
  std::string s(size, '\0');
  in.read(s.data(), size);
  if (!in) throw InputError("model file truncated");
  return s;
}

constexpr char kMagic[4] = {'C', 'B', 'L', 'R'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

double SparseVector::dot(std::span<const double> dense) const {
  double sum = 0.0;
  for (const auto& [index, value] : entries) sum += dense[index] * value;
  return sum;
}

std::uint64_t hash_token(std::string_view token) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

SparseVector featurize(std::string_view text, std::uint32_t dim) {
  if (dim == 0 || !std::has_single_bit(dim)) {
    throw InputError("feature dimension must be a power of two");
  }
  std::map<std::uint32_t, double> counts;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    counts[static_cast<std::uint32_t>(hash_token(token) & (dim - 1))] += 1.0;
    token.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_token_byte(c)) {
      token.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else {
      flush();
    }
  }
  flush();
  SparseVector v;
  v.entries.assign(counts.begin(), counts.end());
  return v;
}

double LRModel::probability(const SparseVector& x) const {
  return sigmoid(x.dot(weights) + bias);
}

double logistic_loss(const LRModel& model, const FeatureMatrix& x,
                     std::span<const int> y, double l2) {
  check_training_input(x, y, model.weights.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows.size(); ++i) {
    const double z = x.rows[i].dot(model.weights) + model.bias;
    loss += softplus(z) - y[i] * z;
  }
  if (!x.rows.empty()) loss /= static_cast<double>(x.rows.size());
  double norm = 0.0;
  for (double w : model.weights) norm += w * w;
  return loss + 0.5 * l2 * norm;
}

LossGradient logistic_gradient(const LRModel& model, const FeatureMatrix& x,
                               std::span<const int> y, double l2) {
  check_training_input(x, y, model.weights.size());
  LossGradient g;
  g.weights.assign(model.weights.size(), 0.0);
  const double scale = x.rows.empty() ? 0.0 : 1.0 / static_cast<double>(x.rows.size());
  for (std::size_t i = 0; i < x.rows.size(); ++i) {
    const double residual = model.probability(x.rows[i]) - y[i];
    for (const auto& [index, value] : x.rows[i].entries) {
      g.weights[index] += scale * residual * value;
    }
    g.bias += scale * residual;
  }
  for (std::size_t j = 0; j < g.weights.size(); ++j) g.weights[j] += l2 * model.weights[j];
  return g;
}

LRModel train_lr(const FeatureMatrix& x, std::span<const int> y,
                 const TrainConfig& config) {
  if (x.rows.empty()) throw InputError("cannot train on an empty feature matrix");
  if (config.batch_size == 0 || config.epochs < 0 || config.learning_rate <= 0.0 ||
      config.l2 < 0.0) {
    throw InputError("invalid training configuration");
  }
  LRModel model;
  model.config = config;
  model.weights.assign(x.dim, 0.0);
  check_training_input(x, y, model.weights.size());

  Rng rng(config.seed);
  std::vector<std::size_t> order(x.rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> residuals;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double step = config.learning_rate / static_cast<double>(end - start);
      // Residuals at the current weights, then one simultaneous update.
      residuals.clear();
      for (std::size_t b = start; b < end; ++b) {
        residuals.push_back(model.probability(x.rows[order[b]]) - y[order[b]]);
      }
      if (config.l2 > 0.0) {
        const double decay = 1.0 - config.learning_rate * config.l2;
        for (double& w : model.weights) w *= decay;
      }
      double bias_step = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const double r = residuals[b - start];
        for (const auto& [index, value] : x.rows[order[b]].entries) {
          model.weights[index] -= step * r * value;
        }
        bias_step += r;
      }
      model.bias -= step * bias_step;
    }
    model.loss_trace.push_back(logistic_loss(model, x, y, config.l2));
  }
  for (double w : model.weights) {
    if (!std::isfinite(w)) throw ComputeError("training diverged (non-finite weight)");
  }
  return model;
}

AttributeEncoding AttributeEncoding::from_dataset(const Dataset& dataset) {
  AttributeEncoding encoding;
  for (const auto& name : dataset.schema().names()) {
    std::set<std::string> categories;
    for (const auto& w : dataset.workers()) categories.insert(w.attribute(name));
    encoding.attributes.emplace_back(
        name, std::vector<std::string>(categories.begin(), categories.end()));
  }
  return encoding;
}

std::size_t AttributeEncoding::width() const {
  std::size_t w = 0;
  for (const auto& [name, categories] : attributes) w += categories.size();
  return w;
}

std::vector<std::uint32_t> AttributeEncoding::active(const Worker& worker) const {
  std::vector<std::uint32_t> offsets;
  std::uint32_t base = 0;
  for (const auto& [name, categories] : attributes) {
    const auto& value = worker.attribute(name);
    const auto it = std::lower_bound(categories.begin(), categories.end(), value);
    if (it != categories.end() && *it == value) {
      offsets.push_back(base + static_cast<std::uint32_t>(it - categories.begin()));
    }
    base += static_cast<std::uint32_t>(categories.size());
  }
  return offsets;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kModel1:
      return "m1";
    case ModelKind::kModel2:
      return "m2";
    case ModelKind::kOracle:
      return "oracle";
  }
  return "oracle";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "m1" || name == "1") return ModelKind::kModel1;
  if (name == "m2" || name == "2") return ModelKind::kModel2;
  if (name == "oracle" || name == "m3" || name == "3") return ModelKind::kOracle;
  throw InputError("unknown model '" + std::string(name) + "' (expected m1, m2 or oracle)");
}

Predictor Predictor::model1(LRModel model, ScaleSpec scale) {
  Predictor p;
  p.kind_ = ModelKind::kModel1;
  p.model_ = std::move(model);
  p.scale_ = std::move(scale);
  return p;
}

Predictor Predictor::model2(LRModel model, ScaleSpec scale, AttributeEncoding encoding) {
  Predictor p;
  p.kind_ = ModelKind::kModel2;
  p.model_ = std::move(model);
  p.scale_ = std::move(scale);
  p.encoding_ = std::move(encoding);
  return p;
}

Predictor Predictor::oracle(std::shared_ptr<const Dataset> dataset) {
  Predictor p;
  p.kind_ = ModelKind::kOracle;
  p.scale_ = dataset->scale();
  p.dataset_ = std::move(dataset);
  return p;
}

SparseVector Predictor::features(const Sample& sample, const Worker& worker) const {
  if (!model_) throw ComputeError("the oracle has no feature representation");
  const std::uint32_t dim = model_->config.hash_dim;
  SparseVector x = featurize(sample.text, dim);
  if (kind_ == ModelKind::kModel2) {
    for (std::uint32_t offset : encoding_.active(worker)) {
      x.entries.emplace_back(dim + offset, 1.0);
    }
  }
  return x;
}

int Predictor::predict(const Sample& sample, const Worker& worker) const {
  if (kind_ == ModelKind::kOracle) {
    const auto label = dataset_->label_of(sample.sample_id, worker.worker_id);
    if (!label) {
      throw ComputeError("oracle has no annotation for (" + sample.sample_id + ", " +
                         worker.worker_id + ")");
    }
    return *label;
  }
  const double p = model_->probability(features(sample, worker));
  const int toxic = scale_.lower_is_more_toxic ? scale_.values.front() : scale_.values.back();
  const int other = scale_.lower_is_more_toxic ? scale_.values.back() : scale_.values.front();
  return p >= 0.5 ? toxic : other;
}

int binary_target(const ScaleSpec& scale, int label) {
  if (scale.size() != 2) throw InputError("binary target needs a two-value scale");
  return scale.toxicity_rank(label) == 0 ? 1 : 0;
}

Predictor build_model1(const Dataset& train, const TrainConfig& config) {
  require_binary(train, "model 1");
  const auto mv = majority_vote(train);
  FeatureMatrix x{config.hash_dim, {}};
  std::vector<int> y;
  for (std::size_t s = 0; s < train.n(); ++s) {
    x.rows.push_back(featurize(train.samples()[s].text, config.hash_dim));
    y.push_back(binary_target(train.scale(), mv.label_at(s)));
  }
  return Predictor::model1(train_lr(x, y, config), train.scale());
}

Predictor build_model2(const Dataset& train, const TrainConfig& config) {
  require_binary(train, "model 2");
  auto encoding = AttributeEncoding::from_dataset(train);
  const auto dim = static_cast<std::uint32_t>(config.hash_dim + encoding.width());
  FeatureMatrix x{dim, {}};
  std::vector<int> y;
  x.rows.reserve(train.l());
  for (std::size_t a = 0; a < train.l(); ++a) {
    const auto& sample = train.samples()[train.annotation_sample(a)];
    const auto& worker = train.workers()[train.annotation_worker(a)];
    SparseVector row = featurize(sample.text, config.hash_dim);
    for (std::uint32_t offset : encoding.active(worker)) {
      row.entries.emplace_back(config.hash_dim + offset, 1.0);
    }
    x.rows.push_back(std::move(row));
    y.push_back(binary_target(train.scale(), train.annotations()[a].label));
  }
  return Predictor::model2(train_lr(x, y, config), train.scale(), std::move(encoding));
}

Predictor build_model3(const Dataset& dataset) {
  return Predictor::oracle(std::make_shared<const Dataset>(dataset));
}

SampleSplit split_samples(const Dataset& dataset, const AggregatedLabels& mv,
                          double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw InputError("eval fraction must lie in (0, 1)");
  }
  if (mv.votes.size() != dataset.n()) {
    throw InputError("majority vote does not belong to this dataset");
  }
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t s = 0; s < dataset.n(); ++s) strata[mv.label_at(s)].push_back(s);
  Rng rng(seed);
  std::vector<bool> in_eval(dataset.n(), false);
  for (auto& [label, members] : strata) {
    rng.shuffle(members);
    const auto take = static_cast<std::size_t>(
        std::llround(eval_fraction * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < take; ++i) in_eval[members[i]] = true;
  }
  SampleSplit split;
  split.eval_fraction = eval_fraction;
  split.seed = seed;
  for (std::size_t s = 0; s < dataset.n(); ++s) {
    (in_eval[s] ? split.eval : split.train).push_back(dataset.samples()[s].sample_id);
  }
  return split;
}

void save_model(const Predictor& predictor, const std::string& path) {
  const LRModel* model = predictor.model();
  if (!model) throw InputError("only trained models (m1, m2) can be saved");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out.write(kMagic, 4);
  put_u32(out, kFormatVersion);
  put_u32(out, predictor.kind() == ModelKind::kModel1 ? 1 : 2);
  put_u32(out, model->config.hash_dim);
  const auto& scale = predictor.scale();
  put_u32(out, static_cast<std::uint32_t>(scale.values[0]));
  put_u32(out, static_cast<std::uint32_t>(scale.values[1]));
  put_u32(out, scale.lower_is_more_toxic ? 1 : 0);
  put_f64(out, model->config.learning_rate);
  put_u32(out, static_cast<std::uint32_t>(model->config.epochs));
  put_f64(out, model->config.l2);
  put_u64(out, model->config.batch_size);
  put_u64(out, model->config.seed);
  const auto& encoding = predictor.encoding();
  put_u32(out, static_cast<std::uint32_t>(encoding.attributes.size()));
  for (const auto& [name, categories] : encoding.attributes) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(categories.size()));
    for (const auto& c : categories) put_string(out, c);
  }
  put_u64(out, model->weights.size());
  for (double w : model->weights) put_f64(out, w);
  put_f64(out, model->bias);
  if (!out) throw InputError("failed writing " + path);
}

Predictor load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) {
    throw InputError(path + ": not a model file");
  }
  const auto version = get_u32(in);
  if (version != kFormatVersion) {
    throw InputError(path + ": unsupported model format version " + std::to_string(version));
  }
  const auto kind = get_u32(in);
  if (kind != 1 && kind != 2) throw InputError(path + ": unknown model kind");
  LRModel model;
  model.config.hash_dim = get_u32(in);
  ScaleSpec scale;
  scale.values.push_back(static_cast<std::int32_t>(get_u32(in)));
  scale.values.push_back(static_cast<std::int32_t>(get_u32(in)));
  scale.lower_is_more_toxic = get_u32(in) != 0;
  scale.validate();
  model.config.learning_rate = get_f64(in);
  model.config.epochs = static_cast<int>(get_u32(in));
  model.config.l2 = get_f64(in);
  model.config.batch_size = get_u64(in);
  model.config.seed = get_u64(in);
  AttributeEncoding encoding;
  const auto n_attributes = get_u32(in);
  for (std::uint32_t i = 0; i < n_attributes; ++i) {
    auto name = get_string(in);
    const auto n_categories = get_u32(in);
    std::vector<std::string> categories;
    for (std::uint32_t c = 0; c < n_categories; ++c) categories.push_back(get_string(in));
    encoding.attributes.emplace_back(std::move(name), std::move(categories));
  }
  const auto n_weights = get_u64(in);
  const std::uint64_t expected =
      model.config.hash_dim + (kind == 2 ? encoding.width() : 0);
  if (n_weights != expected) throw InputError(path + ": weight count mismatch");
  model.weights.resize(n_weights);
  for (auto& w : model.weights) w = get_f64(in);
  model.bias = get_f64(in);
  if (kind == 1) return Predictor::model1(std::move(model), std::move(scale));
  return Predictor::model2(std::move(model), std::move(scale), std::move(encoding));
}

}  // namespace crowdbias
