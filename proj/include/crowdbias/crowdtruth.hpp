#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crowdbias/dataset.hpp"

namespace crowdbias {

// Cosine similarity of x and y where coordinate a is weighted by weights[a]:
//   sum_a w_a x_a y_a / sqrt(sum_a w_a x_a^2 * sum_a w_a y_a^2)
// Throws ComputeError if either weighted norm is zero, InputError on a
// dimension mismatch or a negative weight.
double weighted_cosine(std::span<const double> x, std::span<const double> y,
                       std::span<const double> weights);

struct QualityOptions {
  double tol = 1e-6;
  int max_iter = 50;
};

// Unit, worker and annotation quality scores. Workers are one-hot vectors
// over the scale per unit; scores are all in [0, 1].
struct QualityScores {
  std::map<std::string, double> uqs;  // per sample with >= 2 annotators
  std::map<std::string, double> wqs;  // per worker on those samples
  std::map<int, double> aqs;          // per scale value
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> skipped_units;
  std::vector<std::string> warnings;
};

using QualityObserver =
    std::function<void(int iteration, const QualityScores& snapshot)>;

// Iterates UQS -> WQS -> AQS from all-ones until the largest absolute change
// of any score is below `tol` or `max_iter` passes have run.
//
//   UQS(u)  = sum_{i<j} wqs_i wqs_j cos(v_iu, v_ju) / sum_{i<j} wqs_i wqs_j
//   WUA(i)  = sum_u uqs_u cos(v_iu, sum_{j!=i} wqs_j v_ju) / sum_u uqs_u
//   WWA(i)  = sum_j sum_{u shared} wqs_j cos(v_iu, v_ju) / sum wqs_j
//   WQS(i)  = WUA(i) * WWA(i)
//   AQS(a)  = sum_{i!=j} wqs_i wqs_j P_a(j|i) / sum wqs_i wqs_j
// where P_a(j|i) is the fraction of shared units labelled `a` by i on which j
// also chose `a`. Cosines use AQS as coordinate weights. Terms whose cosine
// or conditional probability is undefined (zero norm, zero denominator) are
// left out of both numerator and denominator. A label no pair ever chose
// keeps AQS 1.0 and produces a warning.
//
// Samples with fewer than two annotators are skipped and listed. Throws
// InputError if no sample has two annotators. `observer` (optional) sees a
// snapshot after every iteration.
QualityScores compute_quality(const Dataset& dataset,
                              const QualityOptions& options = {},
                              const QualityObserver& observer = {});

struct RemovedWorker {
  std::string worker_id;
  double wqs = 0.0;
  std::size_t annotations = 0;
};

struct FilterResult {
  Dataset dataset;
  std::vector<RemovedWorker> removed;
};

// Drops workers with WQS < threshold together with their annotations.
// Workers without a score are kept. Refuses (InputError) to remove more than
// half of the workers unless `force` is set.
FilterResult filter_spammers(const Dataset& dataset, const QualityScores& scores,
                             double wqs_threshold, bool force = false);

}  // namespace crowdbias
