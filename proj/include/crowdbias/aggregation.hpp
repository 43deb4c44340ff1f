#pragma once

#include <map>
#include <string>
#include <vector>

#include "crowdbias/dataset.hpp"

namespace crowdbias {

enum class SetUpName { kSetup1, kSetup2, kSetup3, kSetup4, kCustom };

// Label-scale remapping. Set-ups 1-3 collapse the -2..2 toxicity scale:
//   setup1: {-2,-1} -> toxic, {0,1,2} -> non-toxic
//   setup2: {-2,-1,0} -> toxic, {1,2} -> non-toxic
//   setup3: {-2,-1} -> toxic, {0} -> neutral, {1,2} -> non-toxic
// Targets are encoded 0 = toxic, 1 = (neutral|non-toxic), 2 = non-toxic.
// setup4 is the identity on whatever scale the dataset carries.
struct SetUp {
  SetUpName name = SetUpName::kSetup4;
  std::map<int, int> mapping;  // empty for setup4
  ScaleSpec target;            // unused for setup4

  static SetUp setup1();
  static SetUp setup2();
  static SetUp setup3();
  static SetUp setup4();
  // 1..4; throws InputError otherwise.
  static SetUp from_number(int number);
  static SetUp custom(std::map<int, int> mapping, ScaleSpec target);
  // Set-up 1 for the -2..2 scale, set-up 4 for anything else.
  static SetUp default_for(const ScaleSpec& scale);

  std::string label() const;
};

// Returns a copy of `dataset` with every label mapped onto the target scale.
Dataset remap(const Dataset& dataset, const SetUp& setup);

struct SampleVote {
  std::string sample_id;
  int label = 0;
  bool tie = false;
  std::map<int, std::size_t> counts;  // every scale value, zero-filled
};

struct AggregatedLabels {
  std::vector<SampleVote> votes;  // dataset sample order

  double tie_rate() const;
  // MV label of the sample at index `sample` of the dataset it came from.
  int label_at(std::size_t sample) const { return votes[sample].label; }
};

// Per-sample majority vote. Ties go to the more toxic label and set `tie`.
// Throws InputError if a sample has no annotation.
AggregatedLabels majority_vote(const Dataset& dataset);

}  // namespace crowdbias
