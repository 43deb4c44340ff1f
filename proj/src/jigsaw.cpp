#include "crowdbias/jigsaw.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "crowdbias/csv.hpp"
#include "crowdbias/dataset.hpp"
#include "crowdbias/error.hpp"

namespace crowdbias {

namespace {

// rev_id is written as "37675.0" in some exports.
std::string normalize_id(std::string id) {
  if (id.size() > 2 && id.compare(id.size() - 2, 2, ".0") == 0) {
    id.resize(id.size() - 2);
  }
  return id;
}

std::string replace_all(std::string text, const std::string& from,
                        const std::string& to) {
  for (std::size_t pos = text.find(from); pos != std::string::npos;
       pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

std::size_t column(const csv::Row& header, const std::string& name,
                   const std::string& file) {
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    if (header.fields[i] == name) return i;
  }
  throw InputError(file + ": missing column '" + name + "'");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

}  // namespace

JigsawFiles JigsawFiles::in_directory(const std::string& dir) {
  const std::filesystem::path base(dir);
  JigsawFiles files;
  files.comments = (base / files.comments).string();
  files.annotations = (base / files.annotations).string();
  files.demographics = (base / files.demographics).string();
  return files;
}

JigsawImportStats import_jigsaw(const JigsawFiles& files,
                                const std::string& out_dir) {
  const std::filesystem::path out(out_dir);
  std::filesystem::create_directories(out);
  JigsawImportStats stats;

  std::set<std::string> sample_ids;
  {
    const auto rows = csv::read_file(files.comments, '\t');
    if (rows.empty()) throw InputError(files.comments + ": empty file");
    const auto id_col = column(rows[0], "rev_id", files.comments);
    const auto text_col = column(rows[0], "comment", files.comments);
    auto sink = open_out(out / "samples.csv");
    csv::write_row(sink, {"sample_id", "text", "source"});
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& f = rows[r].fields;
      if (f.size() <= std::max(id_col, text_col)) continue;
      auto id = normalize_id(f[id_col]);
      auto text = replace_all(replace_all(f[text_col], "NEWLINE_TOKEN", "\n"),
                              "TAB_TOKEN", "\t");
      if (text.find_first_not_of(" \t\n") == std::string::npos) continue;
      if (!sample_ids.insert(id).second) continue;
      csv::write_row(sink, {id, text, "wikipedia"});
    }
    stats.samples = sample_ids.size();
  }

  const std::vector<std::string> attributes = {"gender", "age_group", "education",
                                               "english_first_language"};
  std::map<std::string, std::vector<std::string>> workers;
  {
    const auto rows = csv::read_file(files.demographics, '\t');
    if (rows.empty()) throw InputError(files.demographics + ": empty file");
    const auto id_col = column(rows[0], "worker_id", files.demographics);
    std::vector<std::size_t> cols;
    for (const auto& a : attributes) cols.push_back(column(rows[0], a, files.demographics));
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& f = rows[r].fields;
      if (f.size() != rows[0].fields.size()) continue;
      std::vector<std::string> values;
      for (auto c : cols) values.push_back(f[c]);
      workers[normalize_id(f[id_col])] = std::move(values);
    }
  }

  {
    const auto rows = csv::read_file(files.annotations, '\t');
    if (rows.empty()) throw InputError(files.annotations + ": empty file");
    const auto rev_col = column(rows[0], "rev_id", files.annotations);
    const auto worker_col = column(rows[0], "worker_id", files.annotations);
    const auto score_col = column(rows[0], "toxicity_score", files.annotations);
    auto sink = open_out(out / "annotations.csv");
    csv::write_row(sink, {"sample_id", "worker_id", "label"});
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& f = rows[r].fields;
      if (f.size() != rows[0].fields.size()) {
        ++stats.skipped_annotations;
        continue;
      }
      auto sample = normalize_id(f[rev_col]);
      auto worker = normalize_id(f[worker_col]);
      auto label = normalize_id(f[score_col]);
      if (!sample_ids.count(sample)) {
        ++stats.skipped_annotations;
        continue;
      }
      if (!workers.count(worker)) {
        workers[worker] = std::vector<std::string>(attributes.size(),
                                                   std::string(kUnknownCategory));
        ++stats.workers_without_demographics;
      }
      csv::write_row(sink, {sample, worker, label});
      ++stats.annotations;
    }
  }

  {
    auto sink = open_out(out / "workers.csv");
    std::vector<std::string> header{"worker_id"};
    header.insert(header.end(), attributes.begin(), attributes.end());
    csv::write_row(sink, header);
    for (const auto& [id, values] : workers) {
      std::vector<std::string> row{id};
      row.insert(row.end(), values.begin(), values.end());
      csv::write_row(sink, row);
    }
    stats.workers = workers.size();
  }

  DatasetConfig config;
  config.scale.values = {-2, -1, 0, 1, 2};
  config.scale.anchors = {"very toxic", "toxic", "neutral", "healthy", "very healthy"};
  config.scale.lower_is_more_toxic = true;
  config.schema.protected_attributes = {"gender", "age_group", "education"};
  config.schema.representativeness = {"english_first_language"};
  save_dataset_config(config, (out / "dataset.json").string());
  return stats;
}

}  // namespace crowdbias
