#pragma once

#include <cstddef>
#include <string>

namespace crowdbias {

// Locations of the public Wikipedia toxicity release (tab-separated).
struct JigsawFiles {
  std::string comments = "toxicity_annotated_comments.tsv";
  std::string annotations = "toxicity_annotations.tsv";
  std::string demographics = "toxicity_worker_demographics.tsv";

  static JigsawFiles in_directory(const std::string& dir);
};

struct JigsawImportStats {
  std::size_t samples = 0;
  std::size_t workers = 0;
  std::size_t workers_without_demographics = 0;
  std::size_t annotations = 0;
  std::size_t skipped_annotations = 0;
};

// Converts the release into annotations.csv / workers.csv / samples.csv /
// dataset.json under `out_dir`. toxicity_score (-2..2) becomes the label;
// gender, age_group and education are protected, english_first_language is a
// representativeness attribute. Workers that only appear in the annotation
// file get "unknown" attributes.
JigsawImportStats import_jigsaw(const JigsawFiles& files,
                                const std::string& out_dir);

}  // namespace crowdbias
