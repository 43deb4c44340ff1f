#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdbias/dataset.hpp"
#include "json.hpp"

namespace crowdbias {

enum class Role { kCoherent, kMinority, kMistakeProne, kSpammer };

std::string_view to_string(Role role);
Role parse_role(std::string_view name);

struct Population {
  std::string name;
  Role role = Role::kCoherent;
  std::size_t count = 0;
  // Opinion function followed before mistakes: "coherent" or the id of a
  // declared OpinionFunction. Empty picks "coherent" (or the first declared
  // function for minority populations).
  std::string opinion;
  double mistake_rate = 0.0;  // ignored for spammers
  // attribute -> category -> weight
  std::map<std::string, std::map<std::string, double>> attributes;
};

// A systematic deviation from the coherent opinion: on a fixed subset of
// `disagreement * n_samples` samples the label moves one step towards the
// toxic end. The subset is marked in the sample text so it is learnable.
struct OpinionFunction {
  std::string id;
  double disagreement = 0.0;
};

struct CrowdProfile {
  std::vector<Population> populations;
  std::vector<OpinionFunction> opinions;
  std::size_t n_samples = 200;
  std::size_t labels_per_sample = 10;
  ScaleSpec scale{{0, 1}, {"toxic", "non-toxic"}, true};
  std::vector<double> label_weights;  // coherent-label prior; empty = uniform
  AttributeSchema schema;
  bool balanced_attributes = false;
  std::size_t tokens_per_sample = 12;
  double signal = 0.5;  // chance that a token carries label information
  std::uint64_t seed = 42;

  void validate() const;
  std::size_t worker_count() const;

  static CrowdProfile from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

CrowdProfile load_profile(const std::string& path);

struct GroundTruth {
  std::vector<std::string> worker_ids;
  std::vector<Role> roles;
  std::vector<std::string> populations;
  std::vector<std::string> worker_opinions;  // empty for spammers
  std::vector<std::string> sample_ids;
  // opinion function id ("coherent" included) -> label per sample
  std::map<std::string, std::vector<int>> opinions;

  Role role_of(std::string_view worker_id) const;
  // Label the worker holds before mistakes; nullopt for spammers.
  std::optional<int> true_opinion(std::string_view worker_id, std::size_t sample) const;
};

struct Simulation {
  Dataset dataset;
  GroundTruth truth;
};

// Deterministic for a given profile (seed included). Throws InputError for an
// invalid profile or an infeasible quota.
Simulation generate(const CrowdProfile& profile);

// Dataset files plus ground_truth.csv (worker_id,role,population,opinion)
// and opinions.csv (sample_id,<opinion id>...).
void write_simulation(const Simulation& simulation, const std::string& dir);

namespace presets {

// 50 coherent workers and 5 uniform spammers, 200 samples x 10 labels.
CrowdProfile spammer_separation(std::uint64_t seed = 42);

// Majority and minority viewpoints (the minority identifiable by an
// attribute) plus spammers, binary labels; for ADR-grouped bias checks.
CrowdProfile polarized(std::uint64_t seed = 42);

// 60% coherent, 30% minority (40% disagreement), 10% spammers on -2..2.
CrowdProfile three_kinds(std::uint64_t seed = 42);

}  // namespace presets

}  // namespace crowdbias
