#include "crowdbias/aggregation.hpp"

#include "crowdbias/error.hpp"

namespace crowdbias {

namespace {

ScaleSpec binary_target() {
  return ScaleSpec{{0, 1}, {"toxic", "non-toxic"}, true};
}

}  // namespace

SetUp SetUp::setup1() {
  return {SetUpName::kSetup1, {{-2, 0}, {-1, 0}, {0, 1}, {1, 1}, {2, 1}},
          binary_target()};
}

SetUp SetUp::setup2() {
  return {SetUpName::kSetup2, {{-2, 0}, {-1, 0}, {0, 0}, {1, 1}, {2, 1}},
          binary_target()};
}

SetUp SetUp::setup3() {
  return {SetUpName::kSetup3,
          {{-2, 0}, {-1, 0}, {0, 1}, {1, 2}, {2, 2}},
          ScaleSpec{{0, 1, 2}, {"toxic", "neutral", "non-toxic"}, true}};
}

SetUp SetUp::setup4() { return {SetUpName::kSetup4, {}, {}}; }

SetUp SetUp::default_for(const ScaleSpec& scale) {
  return scale.values == std::vector<int>{-2, -1, 0, 1, 2} ? setup1() : setup4();
}

SetUp SetUp::from_number(int number) {
  switch (number) {
    case 1:
      return setup1();
    case 2:
      return setup2();
    case 3:
      return setup3();
    case 4:
      return setup4();
    default:
      throw InputError("set-up must be 1, 2, 3 or 4, got " + std::to_string(number));
  }
}

SetUp SetUp::custom(std::map<int, int> mapping, ScaleSpec target) {
  target.validate();
  return {SetUpName::kCustom, std::move(mapping), std::move(target)};
}

std::string SetUp::label() const {
  switch (name) {
    case SetUpName::kSetup1:
      return "setup1";
    case SetUpName::kSetup2:
      return "setup2";
    case SetUpName::kSetup3:
      return "setup3";
    case SetUpName::kSetup4:
      return "setup4";
    case SetUpName::kCustom:
      return "custom";
  }
  return "custom";
}

Dataset remap(const Dataset& dataset, const SetUp& setup) {
  if (setup.name == SetUpName::kSetup4) return dataset;
  setup.target.validate();
  for (int v : dataset.scale().values) {
    const auto it = setup.mapping.find(v);
    if (it == setup.mapping.end()) {
      throw InputError(setup.label() + " has no mapping for scale value " +
                       std::to_string(v));
    }
    if (!setup.target.contains(it->second)) {
      throw InputError(setup.label() + " maps " + std::to_string(v) +
                       " outside its target scale");
    }
  }
  std::vector<Annotation> annotations = dataset.annotations();
  for (auto& a : annotations) a.label = setup.mapping.at(a.label);
  return Dataset(dataset.samples(), dataset.workers(), std::move(annotations),
                 setup.target, dataset.schema());
}

double AggregatedLabels::tie_rate() const {
  if (votes.empty()) return 0.0;
  std::size_t ties = 0;
  for (const auto& v : votes) ties += v.tie ? 1 : 0;
  return static_cast<double>(ties) / static_cast<double>(votes.size());
}

AggregatedLabels majority_vote(const Dataset& dataset) {
  const auto& scale = dataset.scale();
  AggregatedLabels result;
  result.votes.reserve(dataset.n());
  for (std::size_t s = 0; s < dataset.n(); ++s) {
    const auto& indices = dataset.sample_annotations(s);
    if (indices.empty()) {
      throw InputError("sample '" + dataset.samples()[s].sample_id +
                       "' has no annotation");
    }
    SampleVote vote;
    vote.sample_id = dataset.samples()[s].sample_id;
    for (int v : scale.values) vote.counts[v] = 0;
    for (std::size_t a : indices) ++vote.counts[dataset.annotations()[a].label];

    // Walk from the most toxic end so the first maximum wins ties.
    std::size_t best = 0;
    std::size_t holders = 0;
    bool first = true;
    for (std::size_t k = 0; k < scale.size(); ++k) {
      const int v = scale.lower_is_more_toxic ? scale.values[k]
                                              : scale.values[scale.size() - 1 - k];
      const std::size_t c = vote.counts[v];
      if (first || c > best) {
        best = c;
        holders = 1;
        vote.label = v;
        first = false;
      } else if (c == best) {
        ++holders;
      }
    }
    vote.tie = holders > 1;
    result.votes.push_back(std::move(vote));
  }
  return result;
}

}  // namespace crowdbias
