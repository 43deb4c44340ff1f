#include "crowdbias/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "crowdbias/csv.hpp"
#include "json.hpp"

namespace crowdbias {

namespace {

using nlohmann::json;

const std::string& unknown_string() {
  static const std::string kUnknown(kUnknownCategory);
  return kUnknown;
}

std::string pair_key(std::string_view sample_id, std::string_view worker_id) {
  std::string key;
  key.reserve(sample_id.size() + worker_id.size() + 1);
  key.append(sample_id);
  key.push_back('\x1f');
  key.append(worker_id);
  return key;
}

std::optional<int> parse_int(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  int value = 0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return value;
}

// Header columns must start with `expected`.
void check_header(const csv::Row& header, const std::string& file,
                  const std::vector<std::string>& expected) {
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.fields.size() || header.fields[i] != expected[i]) {
      throw DatasetError({RowIssue{file, header.line, expected[i],
                                   "missing or misplaced header column"}});
    }
  }
}

}  // namespace

std::string_view to_string(AttributeRole role) {
  switch (role) {
    case AttributeRole::kProtected:
      return "protected";
    case AttributeRole::kSimilarity:
      return "similarity";
    case AttributeRole::kRepresentativeness:
      return "representativeness";
  }
  return "unknown";
}

void ScaleSpec::validate() const {
  if (values.size() < 2) {
    throw InputError("scale needs at least two values");
  }
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] <= values[i - 1]) {
      throw InputError("scale values must be strictly increasing");
    }
  }
  if (!anchors.empty() && anchors.size() != values.size()) {
    throw InputError("scale anchors must match scale values one-to-one");
  }
}

bool ScaleSpec::contains(int value) const {
  return index_of(value).has_value();
}

std::optional<std::size_t> ScaleSpec::index_of(int value) const {
  const auto it = std::lower_bound(values.begin(), values.end(), value);
  if (it == values.end() || *it != value) return std::nullopt;
  return static_cast<std::size_t>(it - values.begin());
}

std::string ScaleSpec::anchor(std::size_t index) const {
  if (index < anchors.size()) return anchors[index];
  return std::to_string(values.at(index));
}

std::size_t ScaleSpec::toxicity_rank(int value) const {
  const auto index = index_of(value);
  if (!index) throw InputError("label " + std::to_string(value) + " not on scale");
  return lower_is_more_toxic ? *index : values.size() - 1 - *index;
}

std::vector<std::string> AttributeSchema::names() const {
  std::vector<std::string> all = protected_attributes;
  all.insert(all.end(), similarity.begin(), similarity.end());
  all.insert(all.end(), representativeness.begin(), representativeness.end());
  return all;
}

std::optional<AttributeRole> AttributeSchema::role(std::string_view name) const {
  auto has = [&](const std::vector<std::string>& v) {
    return std::find(v.begin(), v.end(), name) != v.end();
  };
  if (has(protected_attributes)) return AttributeRole::kProtected;
  if (has(similarity)) return AttributeRole::kSimilarity;
  if (has(representativeness)) return AttributeRole::kRepresentativeness;
  return std::nullopt;
}

void AttributeSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& name : names()) {
    if (name.empty()) throw InputError("empty attribute name in schema");
    if (name == "worker_id") {
      throw InputError("'worker_id' cannot be an attribute name");
    }
    if (!seen.insert(name).second) {
      throw InputError("attribute '" + name + "' declared with more than one role");
    }
  }
}

const std::string& Worker::attribute(const std::string& name) const {
  const auto it = attributes.find(name);
  return it == attributes.end() ? unknown_string() : it->second;
}

Dataset::Dataset(std::vector<Sample> samples, std::vector<Worker> workers,
                 std::vector<Annotation> annotations, ScaleSpec scale,
                 AttributeSchema schema)
    : samples_(std::move(samples)),
      workers_(std::move(workers)),
      annotations_(std::move(annotations)),
      scale_(std::move(scale)),
      schema_(std::move(schema)) {
  scale_.validate();
  schema_.validate();

  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.sample_id.empty()) throw InputError("empty sample_id");
    if (s.text.empty()) {
      throw InputError("sample '" + s.sample_id + "' has empty text");
    }
    if (!sample_ids_.emplace(s.sample_id, i).second) {
      throw InputError("duplicate sample_id '" + s.sample_id + "'");
    }
  }

  const auto declared = schema_.names();
  for (std::size_t i = 0; i < workers_.size(); ++i) {
    auto& w = workers_[i];
    if (w.worker_id.empty()) throw InputError("empty worker_id");
    if (!worker_ids_.emplace(w.worker_id, i).second) {
      throw InputError("duplicate worker_id '" + w.worker_id + "'");
    }
    for (auto& [name, value] : w.attributes) {
      if (!schema_.role(name)) {
        throw InputError("worker '" + w.worker_id + "' has undeclared attribute '" +
                         name + "'");
      }
      if (value.empty()) value = std::string(kUnknownCategory);
    }
    for (const auto& name : declared) {
      w.attributes.try_emplace(name, std::string(kUnknownCategory));
    }
  }

  by_sample_.resize(samples_.size());
  by_worker_.resize(workers_.size());
  ann_sample_.reserve(annotations_.size());
  ann_worker_.reserve(annotations_.size());
  std::unordered_map<std::string, std::size_t> pairs;
  pairs.reserve(annotations_.size());
  for (std::size_t i = 0; i < annotations_.size(); ++i) {
    const auto& a = annotations_[i];
    const auto s = sample_index(a.sample_id);
    const auto w = worker_index(a.worker_id);
    if (!s) throw InputError("annotation references unknown sample '" + a.sample_id + "'");
    if (!w) throw InputError("annotation references unknown worker '" + a.worker_id + "'");
    if (!scale_.contains(a.label)) {
      throw InputError("label " + std::to_string(a.label) + " on sample '" +
                       a.sample_id + "' is outside the scale");
    }
    if (!pairs.emplace(pair_key(a.sample_id, a.worker_id), i).second) {
      throw InputError("duplicate annotation for (" + a.sample_id + ", " +
                       a.worker_id + ")");
    }
    by_sample_[*s].push_back(i);
    by_worker_[*w].push_back(i);
    ann_sample_.push_back(*s);
    ann_worker_.push_back(*w);
  }
}

std::optional<std::size_t> Dataset::sample_index(std::string_view id) const {
  const auto it = sample_ids_.find(std::string(id));
  if (it == sample_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Dataset::worker_index(std::string_view id) const {
  const auto it = worker_ids_.find(std::string(id));
  if (it == worker_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Dataset::label_of(std::string_view sample_id,
                                     std::string_view worker_id) const {
  const auto s = sample_index(sample_id);
  if (!s) return std::nullopt;
  for (std::size_t a : by_sample_[*s]) {
    if (annotations_[a].worker_id == worker_id) return annotations_[a].label;
  }
  return std::nullopt;
}

bool Dataset::operator==(const Dataset& other) const {
  return samples_ == other.samples_ && workers_ == other.workers_ &&
         annotations_ == other.annotations_ && scale_ == other.scale_ &&
         schema_ == other.schema_;
}

DatasetConfig load_dataset_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  DatasetConfig config;
  try {
    config.scale.values = j.at("scale").get<std::vector<int>>();
    config.scale.anchors = j.value("anchors", std::vector<std::string>{});
    config.scale.lower_is_more_toxic = j.value("lower_is_more_toxic", true);
    config.schema.protected_attributes =
        j.value("protected", std::vector<std::string>{});
    config.schema.similarity = j.value("similarity", std::vector<std::string>{});
    config.schema.representativeness =
        j.value("representativeness", std::vector<std::string>{});
    config.min_count = j.value("min_count", std::size_t{5});
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  config.scale.validate();
  config.schema.validate();
  return config;
}

void save_dataset_config(const DatasetConfig& config, const std::string& path) {
  json j;
  j["scale"] = config.scale.values;
  if (!config.scale.anchors.empty()) j["anchors"] = config.scale.anchors;
  j["lower_is_more_toxic"] = config.scale.lower_is_more_toxic;
  j["protected"] = config.schema.protected_attributes;
  j["similarity"] = config.schema.similarity;
  j["representativeness"] = config.schema.representativeness;
  j["min_count"] = config.min_count;
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << j.dump(2) << '\n';
}

DatasetPaths DatasetPaths::in_directory(const std::string& dir) {
  const std::filesystem::path base(dir);
  return {(base / "annotations.csv").string(), (base / "workers.csv").string(),
          (base / "samples.csv").string(), (base / "dataset.json").string()};
}

std::string RowIssue::to_string() const {
  std::ostringstream out;
  out << file << ":" << line;
  if (!field.empty()) out << " [" << field << "]";
  out << ": " << message;
  return out.str();
}

DatasetError::DatasetError(std::vector<RowIssue> issues)
    : InputError([&] {
        std::string what = std::to_string(issues.size()) + " invalid row(s)";
        const std::size_t shown = std::min<std::size_t>(issues.size(), 10);
        for (std::size_t i = 0; i < shown; ++i) what += "\n  " + issues[i].to_string();
        if (issues.size() > shown) what += "\n  ...";
        return what;
      }()),
      issues_(std::move(issues)) {}

LoadResult load_dataset(const std::string& annotations_path,
                        const std::string& workers_path,
                        const std::string& samples_path,
                        const DatasetConfig& config,
                        const LoadOptions& options) {
  config.scale.validate();
  config.schema.validate();
  std::vector<RowIssue> errors;
  std::vector<RowIssue> warnings;

  // Samples.
  std::vector<Sample> samples;
  std::unordered_map<std::string, std::size_t> sample_ids;
  {
    const auto rows = csv::read_file(samples_path);
    if (rows.empty()) throw DatasetError({{samples_path, 1, "", "missing header"}});
    check_header(rows[0], samples_path, {"sample_id", "text"});
    const bool has_source =
        rows[0].fields.size() > 2 && rows[0].fields[2] == "source";
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.fields.size() != rows[0].fields.size()) {
        errors.push_back({samples_path, row.line, "", "wrong number of fields"});
        continue;
      }
      if (row.fields[0].empty()) {
        errors.push_back({samples_path, row.line, "sample_id", "empty id"});
        continue;
      }
      if (row.fields[1].empty()) {
        errors.push_back({samples_path, row.line, "text", "empty text"});
        continue;
      }
      if (sample_ids.count(row.fields[0])) {
        errors.push_back({samples_path, row.line, "sample_id",
                          "duplicate sample_id '" + row.fields[0] + "'"});
        continue;
      }
      sample_ids.emplace(row.fields[0], samples.size());
      samples.push_back({row.fields[0], row.fields[1],
                         has_source ? row.fields[2] : std::string()});
    }
  }

  // Workers.
  std::vector<Worker> workers;
  std::unordered_map<std::string, std::size_t> worker_ids;
  {
    const auto rows = csv::read_file(workers_path);
    if (rows.empty()) throw DatasetError({{workers_path, 1, "", "missing header"}});
    check_header(rows[0], workers_path, {"worker_id"});
    const auto& header = rows[0].fields;
    for (std::size_t c = 1; c < header.size(); ++c) {
      if (!config.schema.role(header[c])) {
        throw DatasetError({{workers_path, rows[0].line, header[c],
                             "attribute not declared in the dataset config"}});
      }
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.fields.size() != header.size()) {
        errors.push_back({workers_path, row.line, "", "wrong number of fields"});
        continue;
      }
      if (row.fields[0].empty()) {
        errors.push_back({workers_path, row.line, "worker_id", "empty id"});
        continue;
      }
      if (worker_ids.count(row.fields[0])) {
        errors.push_back({workers_path, row.line, "worker_id",
                          "duplicate worker_id '" + row.fields[0] + "'"});
        continue;
      }
      Worker w{row.fields[0], {}};
      for (std::size_t c = 1; c < header.size(); ++c) {
        w.attributes[header[c]] = row.fields[c];
      }
      worker_ids.emplace(w.worker_id, workers.size());
      workers.push_back(std::move(w));
    }
  }

  // Annotations. Re-annotations keep the last occurrence.
  std::vector<Annotation> annotations;
  std::unordered_map<std::string, std::size_t> pairs;
  {
    const auto rows = csv::read_file(annotations_path);
    if (rows.empty()) throw DatasetError({{annotations_path, 1, "", "missing header"}});
    check_header(rows[0], annotations_path, {"sample_id", "worker_id", "label"});
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.fields.size() != rows[0].fields.size()) {
        errors.push_back({annotations_path, row.line, "", "wrong number of fields"});
        continue;
      }
      const auto label = parse_int(row.fields[2]);
      if (!label) {
        errors.push_back({annotations_path, row.line, "label",
                          "not an integer: '" + row.fields[2] + "'"});
        continue;
      }
      if (!config.scale.contains(*label)) {
        errors.push_back({annotations_path, row.line, "label",
                          "label " + std::to_string(*label) + " is outside the scale"});
        continue;
      }
      if (!sample_ids.count(row.fields[0])) {
        errors.push_back({annotations_path, row.line, "sample_id",
                          "unknown sample '" + row.fields[0] + "'"});
        continue;
      }
      if (!worker_ids.count(row.fields[1])) {
        errors.push_back({annotations_path, row.line, "worker_id",
                          "unknown worker '" + row.fields[1] + "'"});
        continue;
      }
      Annotation a{row.fields[0], row.fields[1], *label};
      const auto [it, inserted] =
          pairs.emplace(pair_key(a.sample_id, a.worker_id), annotations.size());
      if (!inserted) {
        warnings.push_back({annotations_path, row.line, "",
                            "re-annotation of (" + a.sample_id + ", " +
                                a.worker_id + "); keeping the last one"});
        annotations[it->second] = std::move(a);
      } else {
        annotations.push_back(std::move(a));
      }
    }
  }

  if (!errors.empty() && !options.drop_invalid_rows) {
    throw DatasetError(std::move(errors));
  }
  LoadResult result{Dataset(std::move(samples), std::move(workers),
                            std::move(annotations), config.scale, config.schema),
                    std::move(warnings), {}};
  if (options.drop_invalid_rows) result.rejected = std::move(errors);
  return result;
}

LoadResult load_dataset(const DatasetPaths& paths, const LoadOptions& options) {
  return load_dataset(paths.annotations, paths.workers, paths.samples,
                      load_dataset_config(paths.config), options);
}

void save_dataset(const Dataset& dataset, const std::string& dir,
                  std::size_t min_count) {
  std::filesystem::create_directories(dir);
  const auto paths = DatasetPaths::in_directory(dir);
  {
    std::ofstream out(paths.samples, std::ios::binary);
    if (!out) throw InputError("cannot write " + paths.samples);
    const bool has_source = std::any_of(
        dataset.samples().begin(), dataset.samples().end(),
        [](const Sample& s) { return !s.source.empty(); });
    if (has_source) {
      csv::write_row(out, {"sample_id", "text", "source"});
    } else {
      csv::write_row(out, {"sample_id", "text"});
    }
    for (const auto& s : dataset.samples()) {
      if (has_source) {
        csv::write_row(out, {s.sample_id, s.text, s.source});
      } else {
        csv::write_row(out, {s.sample_id, s.text});
      }
    }
  }
  {
    std::ofstream out(paths.workers, std::ios::binary);
    if (!out) throw InputError("cannot write " + paths.workers);
    std::vector<std::string> header{"worker_id"};
    const auto names = dataset.schema().names();
    header.insert(header.end(), names.begin(), names.end());
    csv::write_row(out, header);
    for (const auto& w : dataset.workers()) {
      std::vector<std::string> row{w.worker_id};
      for (const auto& name : names) row.push_back(w.attribute(name));
      csv::write_row(out, row);
    }
  }
  {
    std::ofstream out(paths.annotations, std::ios::binary);
    if (!out) throw InputError("cannot write " + paths.annotations);
    csv::write_row(out, {"sample_id", "worker_id", "label"});
    for (const auto& a : dataset.annotations()) {
      csv::write_row(out, {a.sample_id, a.worker_id, std::to_string(a.label)});
    }
  }
  save_dataset_config({dataset.scale(), dataset.schema(), min_count}, paths.config);
}

std::string category_key(const Worker& worker,
                         const std::vector<std::string>& attributes) {
  std::string key;
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (i > 0) key.push_back('|');
    key += worker.attribute(attributes[i]);
  }
  return key;
}

namespace {

AxisDistribution count_axis(const Dataset& dataset,
                            const std::vector<std::string>& attributes,
                            std::size_t min_count) {
  std::map<std::string, CategoryCount> counts;
  for (std::size_t w = 0; w < dataset.f(); ++w) {
    const auto key = category_key(dataset.workers()[w], attributes);
    auto& c = counts[key];
    c.category = key;
    ++c.workers;
    c.annotations += dataset.worker_annotations(w).size();
  }
  AxisDistribution axis{attributes, {}};
  for (auto& [key, c] : counts) {
    c.under_represented = c.workers < min_count;
    axis.categories.push_back(c);
  }
  return axis;
}

}  // namespace

DistributionReport distribution_report(const Dataset& dataset,
                                       const std::vector<std::string>& axes,
                                       std::size_t min_count) {
  for (const auto& name : axes) {
    if (!dataset.schema().role(name)) {
      throw InputError("unknown attribute '" + name + "'");
    }
  }
  DistributionReport report;
  report.min_count = min_count;
  for (const auto& name : axes) {
    report.axes.push_back(count_axis(dataset, {name}, min_count));
  }
  if (axes.size() >= 2) report.cross = count_axis(dataset, axes, min_count);
  return report;
}

std::map<int, std::size_t> label_distribution(const Dataset& dataset) {
  std::map<int, std::size_t> histogram;
  for (int v : dataset.scale().values) histogram[v] = 0;
  for (const auto& a : dataset.annotations()) ++histogram[a.label];
  return histogram;
}

Dataset restrict_to_samples(const Dataset& dataset,
                            const std::vector<std::string>& sample_ids) {
  std::vector<Sample> samples;
  std::vector<Annotation> annotations;
  std::set<std::string> wanted(sample_ids.begin(), sample_ids.end());
  for (std::size_t s = 0; s < dataset.n(); ++s) {
    if (!wanted.count(dataset.samples()[s].sample_id)) continue;
    samples.push_back(dataset.samples()[s]);
  }
  for (const auto& a : dataset.annotations()) {
    if (wanted.count(a.sample_id)) annotations.push_back(a);
  }
  return Dataset(std::move(samples), dataset.workers(), std::move(annotations),
                 dataset.scale(), dataset.schema());
}

}  // namespace crowdbias
