#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "crowdbias/dataset.hpp"

namespace crowdbias::testing {

inline ScaleSpec binary_scale() { return {{0, 1}, {"toxic", "non-toxic"}, true}; }
inline ScaleSpec five_point_scale() {
  return {{-2, -1, 0, 1, 2}, {"very toxic", "toxic", "neutral", "healthy", "very healthy"}, true};
}

// Dataset from (sample, worker, label) triples; samples get their id as text.
inline Dataset make_dataset(const std::vector<std::tuple<std::string, std::string, int>>& triples,
                            ScaleSpec scale = binary_scale(),
                            std::vector<Worker> workers = {},
                            AttributeSchema schema = {}) {
  std::vector<Sample> samples;
  std::vector<Annotation> annotations;
  std::vector<std::string> seen_samples;
  std::vector<std::string> seen_workers;
  for (const auto& w : workers) seen_workers.push_back(w.worker_id);
  for (const auto& [s, w, label] : triples) {
    if (std::find(seen_samples.begin(), seen_samples.end(), s) == seen_samples.end()) {
      seen_samples.push_back(s);
      samples.push_back({s, "text of " + s, "test"});
    }
    if (std::find(seen_workers.begin(), seen_workers.end(), w) == seen_workers.end()) {
      seen_workers.push_back(w);
      workers.push_back({w, {}});
    }
    annotations.push_back({s, w, label});
  }
  return Dataset(samples, workers, annotations, scale, schema);
}

// Dense label matrix: labels[s][w] < 0 means "not annotated".
inline Dataset dataset_from_matrix(const std::vector<std::vector<int>>& labels,
                                   ScaleSpec scale = binary_scale()) {
  std::vector<std::tuple<std::string, std::string, int>> triples;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    for (std::size_t w = 0; w < labels[s].size(); ++w) {
      if (labels[s][w] >= 0) {
        triples.emplace_back("s" + std::to_string(s), "w" + std::to_string(w),
                             scale.values[static_cast<std::size_t>(labels[s][w])]);
      }
    }
  }
  return make_dataset(triples, scale);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("crowdbias_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace crowdbias::testing
