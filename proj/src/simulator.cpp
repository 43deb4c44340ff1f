#include "crowdbias/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "crowdbias/csv.hpp"
#include "crowdbias/error.hpp"
#include "crowdbias/random.hpp"

namespace crowdbias {

namespace {

using nlohmann::json;

constexpr std::string_view kCoherent = "coherent";
constexpr std::size_t kCueWordsPerClass = 8;
constexpr std::size_t kFillerWords = 400;

std::string numbered(const char* prefix, std::size_t index, int width) {
  std::string digits_text = std::to_string(index);
  if (static_cast<int>(digits_text.size()) < width) {
    digits_text.insert(0, static_cast<std::size_t>(width) - digits_text.size(), '0');
  }
  return prefix + digits_text;
}

int digits(std::size_t n) {
  int d = 1;
  while (n >= 10) {
    n /= 10;
    ++d;
  }
  return std::max(d, 3);
}

std::string resolved_opinion(const CrowdProfile& profile, const Population& p) {
  if (!p.opinion.empty()) return p.opinion;
  if (p.role == Role::kMinority && !profile.opinions.empty()) return profile.opinions[0].id;
  return std::string(kCoherent);
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kCoherent:
      return "coherent";
    case Role::kMinority:
      return "minority";
    case Role::kMistakeProne:
      return "mistake_prone";
    case Role::kSpammer:
      return "spammer";
  }
  return "coherent";
}

Role parse_role(std::string_view name) {
  if (name == "coherent") return Role::kCoherent;
  if (name == "minority") return Role::kMinority;
  if (name == "mistake_prone") return Role::kMistakeProne;
  if (name == "spammer") return Role::kSpammer;
  throw InputError("unknown worker role '" + std::string(name) + "'");
}

std::size_t CrowdProfile::worker_count() const {
  std::size_t total = 0;
  for (const auto& p : populations) total += p.count;
  return total;
}

void CrowdProfile::validate() const {
  scale.validate();
  schema.validate();
  if (n_samples == 0) throw InputError("profile needs at least one sample");
  if (labels_per_sample == 0) throw InputError("labels_per_sample must be positive");
  if (labels_per_sample > worker_count()) {
    throw InputError("infeasible quota: " + std::to_string(labels_per_sample) +
                     " labels per sample but only " + std::to_string(worker_count()) +
                     " workers");
  }
  if (!label_weights.empty()) {
    if (label_weights.size() != scale.size()) {
      throw InputError("label_weights must have one entry per scale value");
    }
    double total = 0.0;
    for (double w : label_weights) {
      if (w < 0.0) throw InputError("label_weights must be non-negative");
      total += w;
    }
    if (total <= 0.0) throw InputError("label_weights must not all be zero");
  }
  if (!(signal >= 0.0 && signal <= 1.0)) throw InputError("signal must lie in [0, 1]");
  if (tokens_per_sample == 0) throw InputError("tokens_per_sample must be positive");
  std::set<std::string> ids{std::string(kCoherent)};
  for (const auto& o : opinions) {
    if (!(o.disagreement >= 0.0 && o.disagreement <= 1.0)) {
      throw InputError("disagreement of opinion '" + o.id + "' must lie in [0, 1]");
    }
    if (!ids.insert(o.id).second) throw InputError("duplicate opinion id '" + o.id + "'");
  }
  std::set<std::string> names;
  for (const auto& p : populations) {
    if (!names.insert(p.name).second) {
      throw InputError("duplicate population name '" + p.name + "'");
    }
    if (!(p.mistake_rate >= 0.0 && p.mistake_rate <= 1.0)) {
      throw InputError("mistake_rate of population '" + p.name + "' must lie in [0, 1]");
    }
    if (p.role != Role::kSpammer && !ids.count(resolved_opinion(*this, p))) {
      throw InputError("population '" + p.name + "' follows unknown opinion '" +
                       p.opinion + "'");
    }
    for (const auto& [attribute, weights] : p.attributes) {
      if (!schema.role(attribute)) {
        throw InputError("population '" + p.name + "' uses undeclared attribute '" +
                         attribute + "'");
      }
      double total = 0.0;
      for (const auto& [category, w] : weights) {
        if (w < 0.0) throw InputError("negative attribute weight");
        total += w;
      }
      if (total <= 0.0) {
        throw InputError("attribute '" + attribute + "' of population '" + p.name +
                         "' has no positive weight");
      }
    }
  }
}

CrowdProfile CrowdProfile::from_json(const json& j) {
  CrowdProfile profile;
  try {
    profile.seed = j.value("seed", profile.seed);
    profile.n_samples = j.value("n_samples", profile.n_samples);
    profile.labels_per_sample = j.value("labels_per_sample", profile.labels_per_sample);
    if (j.contains("scale")) {
      profile.scale.values = j.at("scale").get<std::vector<int>>();
      profile.scale.anchors = j.value("anchors", std::vector<std::string>{});
    }
    profile.scale.lower_is_more_toxic =
        j.value("lower_is_more_toxic", profile.scale.lower_is_more_toxic);
    profile.label_weights = j.value("label_weights", std::vector<double>{});
    profile.schema.protected_attributes = j.value("protected", std::vector<std::string>{});
    profile.schema.similarity = j.value("similarity", std::vector<std::string>{});
    profile.schema.representativeness =
        j.value("representativeness", std::vector<std::string>{});
    profile.balanced_attributes = j.value("balanced_attributes", false);
    profile.tokens_per_sample = j.value("tokens_per_sample", profile.tokens_per_sample);
    profile.signal = j.value("signal", profile.signal);
    for (const auto& o : j.value("opinions", json::array())) {
      profile.opinions.push_back({o.at("id").get<std::string>(),
                                  o.value("disagreement", 0.0)});
    }
    for (const auto& p : j.at("populations")) {
      Population pop;
      pop.name = p.at("name").get<std::string>();
      pop.role = parse_role(p.value("role", std::string("coherent")));
      pop.count = p.at("count").get<std::size_t>();
      pop.opinion = p.value("opinion", std::string());
      pop.mistake_rate = p.value("mistake_rate", 0.0);
      pop.attributes = p.value("attributes",
                               std::map<std::string, std::map<std::string, double>>{});
      profile.populations.push_back(std::move(pop));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid crowd profile: ") + e.what());
  }
  profile.validate();
  return profile;
}

json CrowdProfile::to_json() const {
  json j;
  j["seed"] = seed;
  j["n_samples"] = n_samples;
  j["labels_per_sample"] = labels_per_sample;
  j["scale"] = scale.values;
  j["anchors"] = scale.anchors;
  j["lower_is_more_toxic"] = scale.lower_is_more_toxic;
  j["label_weights"] = label_weights;
  j["protected"] = schema.protected_attributes;
  j["similarity"] = schema.similarity;
  j["representativeness"] = schema.representativeness;
  j["balanced_attributes"] = balanced_attributes;
  j["tokens_per_sample"] = tokens_per_sample;
  j["signal"] = signal;
  j["opinions"] = json::array();
  for (const auto& o : opinions) {
    j["opinions"].push_back({{"id", o.id}, {"disagreement", o.disagreement}});
  }
  j["populations"] = json::array();
  for (const auto& p : populations) {
    j["populations"].push_back({{"name", p.name},
                                {"role", std::string(to_string(p.role))},
                                {"count", p.count},
                                {"opinion", p.opinion},
                                {"mistake_rate", p.mistake_rate},
                                {"attributes", p.attributes}});
  }
  return j;
}

CrowdProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return CrowdProfile::from_json(j);
}

Role GroundTruth::role_of(std::string_view worker_id) const {
  const auto it = std::find(worker_ids.begin(), worker_ids.end(), worker_id);
  if (it == worker_ids.end()) throw InputError("unknown worker '" + std::string(worker_id) + "'");
  return roles[static_cast<std::size_t>(it - worker_ids.begin())];
}

std::optional<int> GroundTruth::true_opinion(std::string_view worker_id,
                                             std::size_t sample) const {
  const auto it = std::find(worker_ids.begin(), worker_ids.end(), worker_id);
  if (it == worker_ids.end()) throw InputError("unknown worker '" + std::string(worker_id) + "'");
  const auto w = static_cast<std::size_t>(it - worker_ids.begin());
  if (roles[w] == Role::kSpammer) return std::nullopt;
  return opinions.at(worker_opinions[w]).at(sample);
}

Simulation generate(const CrowdProfile& profile) {
  profile.validate();
  Rng rng(profile.seed);
  const auto& scale = profile.scale;
  const std::size_t k = scale.size();
  const std::size_t n = profile.n_samples;
  // Scale index ordered from the most toxic end.
  auto by_rank = [&](std::size_t rank) {
    return scale.lower_is_more_toxic ? scale.values[rank] : scale.values[k - 1 - rank];
  };

  GroundTruth truth;
  const int sample_width = digits(n);
  for (std::size_t s = 0; s < n; ++s) truth.sample_ids.push_back(numbered("s", s + 1, sample_width));

  // Coherent opinion per sample.
  const std::vector<double> prior =
      profile.label_weights.empty() ? std::vector<double>(k, 1.0) : profile.label_weights;
  std::vector<int> coherent(n);
  for (std::size_t s = 0; s < n; ++s) coherent[s] = scale.values[rng.weighted(prior)];
  truth.opinions[std::string(kCoherent)] = coherent;

  // Deviation subsets: move one step towards the toxic end.
  std::vector<std::vector<std::size_t>> marks(n);  // opinion indices per sample
  for (std::size_t o = 0; o < profile.opinions.size(); ++o) {
    const auto& function = profile.opinions[o];
    std::vector<std::size_t> eligible;
    for (std::size_t s = 0; s < n; ++s) {
      if (scale.toxicity_rank(coherent[s]) > 0) eligible.push_back(s);
    }
    const auto wanted = static_cast<std::size_t>(
        std::llround(function.disagreement * static_cast<double>(n)));
    if (wanted > eligible.size()) {
      throw InputError("opinion '" + function.id + "' needs " + std::to_string(wanted) +
                       " non-most-toxic samples, only " +
                       std::to_string(eligible.size()) + " exist");
    }
    rng.shuffle(eligible);
    std::vector<int> labels = coherent;
    for (std::size_t i = 0; i < wanted; ++i) {
      const std::size_t s = eligible[i];
      labels[s] = by_rank(scale.toxicity_rank(coherent[s]) - 1);
      marks[s].push_back(o);
    }
    truth.opinions[function.id] = std::move(labels);
  }

  // Texts: filler words plus cue words for the coherent label and for every
  // deviation subset the sample belongs to.
  std::vector<Sample> samples;
  for (std::size_t s = 0; s < n; ++s) {
    std::string text;
    const std::size_t label_index = *scale.index_of(coherent[s]);
    for (std::size_t t = 0; t < profile.tokens_per_sample; ++t) {
      std::string word;
      if (rng.bernoulli(profile.signal)) {
        if (!marks[s].empty() && rng.bernoulli(0.5)) {
          const std::size_t o = marks[s][rng.below(marks[s].size())];
          word = "mark" + std::to_string(o) + "w" + std::to_string(rng.below(kCueWordsPerClass));
        } else {
          word = "cue" + std::to_string(label_index) + "w" +
                 std::to_string(rng.below(kCueWordsPerClass));
        }
      } else {
        word = "word" + std::to_string(rng.below(kFillerWords));
      }
      if (!text.empty()) text.push_back(' ');
      text += word;
    }
    samples.push_back({truth.sample_ids[s], std::move(text), "simulated"});
  }

  // Workers and their attributes.
  std::vector<Worker> workers;
  const int worker_width = digits(profile.worker_count());
  const auto declared = profile.schema.names();
  for (const auto& population : profile.populations) {
    std::map<std::string, std::vector<std::string>> balanced;
    if (profile.balanced_attributes) {
      for (const auto& [attribute, weights] : population.attributes) {
        for (const auto& [category, w] : weights) {
          if (w > 0.0) balanced[attribute].push_back(category);
        }
      }
    }
    for (std::size_t i = 0; i < population.count; ++i) {
      Worker worker{numbered("w", workers.size() + 1, worker_width), {}};
      for (const auto& name : declared) {
        const auto it = population.attributes.find(name);
        if (it == population.attributes.end()) continue;
        if (profile.balanced_attributes) {
          const auto& categories = balanced[name];
          worker.attributes[name] = categories[i % categories.size()];
        } else {
          std::vector<std::string> categories;
          std::vector<double> weights;
          for (const auto& [category, w] : it->second) {
            categories.push_back(category);
            weights.push_back(w);
          }
          worker.attributes[name] = categories[rng.weighted(weights)];
        }
      }
      truth.worker_ids.push_back(worker.worker_id);
      truth.roles.push_back(population.role);
      truth.populations.push_back(population.name);
      truth.worker_opinions.push_back(population.role == Role::kSpammer
                                          ? std::string()
                                          : resolved_opinion(profile, population));
      workers.push_back(std::move(worker));
    }
  }

  // Assignment: least-loaded workers first, random tie-break, so every
  // population contributes in proportion to its size.
  const std::size_t f = workers.size();
  std::vector<std::size_t> load(f, 0);
  std::vector<Annotation> annotations;
  annotations.reserve(n * profile.labels_per_sample);
  std::vector<std::pair<std::pair<std::size_t, std::uint64_t>, std::size_t>> order(f);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t w = 0; w < f; ++w) order[w] = {{load[w], rng.below(UINT64_MAX)}, w};
    std::partial_sort(order.begin(),
                      order.begin() + static_cast<std::ptrdiff_t>(profile.labels_per_sample),
                      order.end());
    for (std::size_t i = 0; i < profile.labels_per_sample; ++i) {
      const std::size_t w = order[i].second;
      ++load[w];
      int label = 0;
      if (truth.roles[w] == Role::kSpammer) {
        label = scale.values[rng.below(k)];
      } else {
        label = truth.opinions.at(truth.worker_opinions[w])[s];
        const auto& population = truth.populations[w];
        const auto it = std::find_if(profile.populations.begin(), profile.populations.end(),
                                     [&](const Population& p) { return p.name == population; });
        if (rng.bernoulli(it->mistake_rate)) {
          // A uniformly chosen different label.
          std::size_t other = rng.below(k - 1);
          if (other >= *scale.index_of(label)) ++other;
          label = scale.values[other];
        }
      }
      annotations.push_back({truth.sample_ids[s], workers[w].worker_id, label});
    }
  }

  return {Dataset(std::move(samples), std::move(workers), std::move(annotations),
                  profile.scale, profile.schema),
          std::move(truth)};
}

void write_simulation(const Simulation& simulation, const std::string& dir) {
  save_dataset(simulation.dataset, dir);
  const std::filesystem::path base(dir);
  const auto& truth = simulation.truth;
  {
    std::ofstream out(base / "ground_truth.csv", std::ios::binary);
    if (!out) throw InputError("cannot write ground_truth.csv in " + dir);
    csv::write_row(out, {"worker_id", "role", "population", "opinion"});
    for (std::size_t w = 0; w < truth.worker_ids.size(); ++w) {
      csv::write_row(out, {truth.worker_ids[w], std::string(to_string(truth.roles[w])),
                           truth.populations[w], truth.worker_opinions[w]});
    }
  }
  {
    std::ofstream out(base / "opinions.csv", std::ios::binary);
    if (!out) throw InputError("cannot write opinions.csv in " + dir);
    std::vector<std::string> header{"sample_id"};
    for (const auto& [id, labels] : truth.opinions) header.push_back(id);
    csv::write_row(out, header);
    for (std::size_t s = 0; s < truth.sample_ids.size(); ++s) {
      std::vector<std::string> row{truth.sample_ids[s]};
      for (const auto& [id, labels] : truth.opinions) row.push_back(std::to_string(labels[s]));
      csv::write_row(out, row);
    }
  }
}

namespace presets {

CrowdProfile spammer_separation(std::uint64_t seed) {
  CrowdProfile profile;
  profile.seed = seed;
  profile.n_samples = 200;
  profile.labels_per_sample = 10;
  profile.label_weights = {0.3, 0.7};
  profile.schema.protected_attributes = {"gender"};
  const std::map<std::string, std::map<std::string, double>> gender = {
      {"gender", {{"female", 0.5}, {"male", 0.5}}}};
  profile.populations = {
      {"coherent", Role::kCoherent, 50, "coherent", 0.05, gender},
      {"spammers", Role::kSpammer, 5, "", 0.0, gender},
  };
  return profile;
}

CrowdProfile polarized(std::uint64_t seed) {
  CrowdProfile profile;
  profile.seed = seed;
  profile.n_samples = 1000;
  profile.labels_per_sample = 10;
  profile.label_weights = {0.3, 0.7};
  profile.schema.protected_attributes = {"gender", "age_group"};
  profile.schema.similarity = {"region"};
  profile.opinions = {{"minority", 0.3}};
  auto attributes = [](const char* region) {
    return std::map<std::string, std::map<std::string, double>>{
        {"gender", {{"female", 0.5}, {"male", 0.5}}},
        {"age_group", {{"18-30", 0.5}, {"30-45", 0.3}, {"45-60", 0.2}}},
        {"region", {{region, 1.0}}}};
  };
  profile.populations = {
      {"majority", Role::kCoherent, 60, "coherent", 0.03, attributes("north")},
      {"minority", Role::kMinority, 30, "minority", 0.03, attributes("south")},
      {"spammers", Role::kSpammer, 10, "", 0.0, attributes("west")},
  };
  return profile;
}

CrowdProfile three_kinds(std::uint64_t seed) {
  CrowdProfile profile;
  profile.seed = seed;
  profile.n_samples = 200;
  profile.labels_per_sample = 10;
  profile.scale = ScaleSpec{{-2, -1, 0, 1, 2},
                            {"very toxic", "toxic", "neutral", "healthy", "very healthy"},
                            true};
  profile.label_weights = {0.1, 0.15, 0.4, 0.2, 0.15};
  profile.schema.protected_attributes = {"gender"};
  profile.opinions = {{"minority", 0.4}};
  const std::map<std::string, std::map<std::string, double>> gender = {
      {"gender", {{"female", 0.5}, {"male", 0.5}}}};
  profile.populations = {
      {"coherent", Role::kCoherent, 60, "coherent", 0.0, gender},
      {"minority", Role::kMinority, 30, "minority", 0.0, gender},
      {"spammers", Role::kSpammer, 10, "", 0.0, gender},
  };
  return profile;
}

}  // namespace presets

}  // namespace crowdbias
