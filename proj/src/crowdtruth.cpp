#include "crowdbias/crowdtruth.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

#include "crowdbias/error.hpp"

namespace crowdbias {

namespace {

std::optional<double> try_weighted_cosine(std::span<const double> x,
                                          std::span<const double> y,
                                          std::span<const double> weights) {
  double dot = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  for (std::size_t a = 0; a < weights.size(); ++a) {
    dot += weights[a] * x[a] * y[a];
    xx += weights[a] * x[a] * x[a];
    yy += weights[a] * y[a] * y[a];
  }
  if (xx <= 0.0 || yy <= 0.0) return std::nullopt;
  return std::clamp(dot / std::sqrt(xx * yy), 0.0, 1.0);
}

struct Vote {
  std::size_t worker;  // dense index over participating workers
  std::size_t label;   // scale index
};

// Label co-occurrence of one unordered worker pair over their shared units.
struct PairEntry {
  std::size_t label_first;
  std::size_t label_second;
  std::size_t count;
};

struct PairStat {
  std::size_t first;
  std::size_t second;
  std::size_t begin;  // into entries
  std::size_t end;
};

struct Problem {
  std::size_t labels = 0;
  std::vector<std::string> unit_ids;
  std::vector<std::vector<Vote>> units;
  std::vector<std::string> worker_ids;
  std::vector<std::vector<std::size_t>> worker_units;
  std::vector<PairStat> pairs;
  std::vector<PairEntry> entries;
};

Problem build_problem(const Dataset& dataset, std::vector<std::string>& skipped) {
  Problem p;
  p.labels = dataset.scale().size();
  std::map<std::string, std::size_t> dense;
  // Participating workers get dense indices in worker-id order so the result
  // does not depend on input ordering.
  for (std::size_t s = 0; s < dataset.n(); ++s) {
    if (dataset.sample_annotations(s).size() < 2) continue;
    for (std::size_t a : dataset.sample_annotations(s)) {
      dense.emplace(dataset.annotations()[a].worker_id, 0);
    }
  }
  for (auto& [id, index] : dense) {
    index = p.worker_ids.size();
    p.worker_ids.push_back(id);
  }
  p.worker_units.resize(p.worker_ids.size());

  std::vector<std::pair<std::string, std::size_t>> order;
  for (std::size_t s = 0; s < dataset.n(); ++s) {
    order.emplace_back(dataset.samples()[s].sample_id, s);
  }
  std::sort(order.begin(), order.end());

  struct Tuple {
    std::size_t first, second, label_first, label_second;
    auto operator<=>(const Tuple&) const = default;
  };
  std::vector<Tuple> tuples;
  for (const auto& [id, s] : order) {
    const auto& indices = dataset.sample_annotations(s);
    if (indices.size() < 2) {
      skipped.push_back(id);
      continue;
    }
    std::vector<Vote> votes;
    for (std::size_t a : indices) {
      const auto& ann = dataset.annotations()[a];
      votes.push_back({dense.at(ann.worker_id), *dataset.scale().index_of(ann.label)});
    }
    std::sort(votes.begin(), votes.end(),
              [](const Vote& x, const Vote& y) { return x.worker < y.worker; });
    const std::size_t unit = p.units.size();
    for (std::size_t i = 0; i < votes.size(); ++i) {
      p.worker_units[votes[i].worker].push_back(unit);
      for (std::size_t j = i + 1; j < votes.size(); ++j) {
        tuples.push_back({votes[i].worker, votes[j].worker, votes[i].label,
                          votes[j].label});
      }
    }
    p.unit_ids.push_back(id);
    p.units.push_back(std::move(votes));
  }

  std::sort(tuples.begin(), tuples.end());
  for (std::size_t t = 0; t < tuples.size();) {
    PairStat pair{tuples[t].first, tuples[t].second, p.entries.size(), 0};
    while (t < tuples.size() && tuples[t].first == pair.first &&
           tuples[t].second == pair.second) {
      const auto& head = tuples[t];
      std::size_t count = 0;
      while (t < tuples.size() && tuples[t] == head) {
        ++count;
        ++t;
      }
      p.entries.push_back({head.label_first, head.label_second, count});
    }
    pair.end = p.entries.size();
    p.pairs.push_back(pair);
  }
  return p;
}

// Cosine of two one-hot vectors under AQS weights; nullopt when undefined.
std::vector<std::optional<double>> one_hot_cosines(const std::vector<double>& aqs) {
  const std::size_t k = aqs.size();
  std::vector<std::optional<double>> table(k * k);
  std::vector<double> x(k, 0.0);
  std::vector<double> y(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      std::fill(x.begin(), x.end(), 0.0);
      std::fill(y.begin(), y.end(), 0.0);
      x[a] = 1.0;
      y[b] = 1.0;
      table[a * k + b] = try_weighted_cosine(x, y, aqs);
    }
  }
  return table;
}

QualityScores snapshot(const Problem& p, const Dataset& dataset,
                       const std::vector<double>& uqs,
                       const std::vector<double>& wqs,
                       const std::vector<double>& aqs) {
  QualityScores q;
  for (std::size_t u = 0; u < p.units.size(); ++u) q.uqs[p.unit_ids[u]] = uqs[u];
  for (std::size_t w = 0; w < p.worker_ids.size(); ++w) q.wqs[p.worker_ids[w]] = wqs[w];
  for (std::size_t a = 0; a < p.labels; ++a) q.aqs[dataset.scale().values[a]] = aqs[a];
  return q;
}

double max_change(const std::vector<double>& before, const std::vector<double>& after) {
  double change = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    change = std::max(change, std::abs(after[i] - before[i]));
  }
  return change;
}

}  // namespace

double weighted_cosine(std::span<const double> x, std::span<const double> y,
                       std::span<const double> weights) {
  if (x.size() != y.size() || x.size() != weights.size()) {
    throw InputError("weighted_cosine: dimension mismatch");
  }
  for (double w : weights) {
    if (w < 0.0) throw InputError("weighted_cosine: negative weight");
  }
  const auto value = try_weighted_cosine(x, y, weights);
  if (!value) throw ComputeError("weighted_cosine: zero weighted norm");
  return *value;
}

QualityScores compute_quality(const Dataset& dataset, const QualityOptions& options,
                              const QualityObserver& observer) {
  if (options.tol <= 0.0) throw InputError("tolerance must be positive");
  if (options.max_iter < 1) throw InputError("max_iter must be at least 1");
  std::vector<std::string> skipped;
  const Problem p = build_problem(dataset, skipped);
  if (p.units.empty()) {
    throw InputError("no sample has two or more annotators");
  }
  const std::size_t k = p.labels;
  const std::size_t n_workers = p.worker_ids.size();

  std::vector<double> uqs(p.units.size(), 1.0);
  std::vector<double> wqs(n_workers, 1.0);
  std::vector<double> aqs(k, 1.0);
  std::set<std::size_t> unseen_labels;

  int iteration = 0;
  bool converged = false;
  std::vector<double> residual(k);
  std::vector<double> own(k);
  while (iteration < options.max_iter && !converged) {
    ++iteration;
    const auto cos = one_hot_cosines(aqs);

    // Unit quality.
    std::vector<double> next_uqs(p.units.size(), 0.0);
    for (std::size_t u = 0; u < p.units.size(); ++u) {
      const auto& votes = p.units[u];
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < votes.size(); ++i) {
        for (std::size_t j = i + 1; j < votes.size(); ++j) {
          const auto c = cos[votes[i].label * k + votes[j].label];
          if (!c) continue;
          const double weight = wqs[votes[i].worker] * wqs[votes[j].worker];
          num += weight * *c;
          den += weight;
        }
      }
      next_uqs[u] = den > 0.0 ? num / den : 0.0;
    }

    // Worker-unit agreement.
    std::vector<double> wua_num(n_workers, 0.0);
    std::vector<double> wua_den(n_workers, 0.0);
    for (std::size_t u = 0; u < p.units.size(); ++u) {
      const auto& votes = p.units[u];
      for (const auto& vote : votes) {
        std::fill(residual.begin(), residual.end(), 0.0);
        std::fill(own.begin(), own.end(), 0.0);
        own[vote.label] = 1.0;
        for (const auto& other : votes) {
          if (other.worker != vote.worker) residual[other.label] += wqs[other.worker];
        }
        const auto c = try_weighted_cosine(own, residual, aqs);
        if (!c) continue;
        wua_num[vote.worker] += next_uqs[u] * *c;
        wua_den[vote.worker] += next_uqs[u];
      }
    }

    // Worker-worker agreement over pair statistics.
    std::vector<double> wwa_num(n_workers, 0.0);
    std::vector<double> wwa_den(n_workers, 0.0);
    for (const auto& pair : p.pairs) {
      for (std::size_t e = pair.begin; e < pair.end; ++e) {
        const auto& entry = p.entries[e];
        const auto c = cos[entry.label_first * k + entry.label_second];
        if (!c) continue;
        const double count = static_cast<double>(entry.count);
        wwa_num[pair.first] += wqs[pair.second] * count * *c;
        wwa_den[pair.first] += wqs[pair.second] * count;
        wwa_num[pair.second] += wqs[pair.first] * count * *c;
        wwa_den[pair.second] += wqs[pair.first] * count;
      }
    }

    std::vector<double> next_wqs(n_workers, 0.0);
    for (std::size_t w = 0; w < n_workers; ++w) {
      const double wua = wua_den[w] > 0.0 ? wua_num[w] / wua_den[w] : 0.0;
      const double wwa = wwa_den[w] > 0.0 ? wwa_num[w] / wwa_den[w] : 0.0;
      next_wqs[w] = wua * wwa;
    }

    // Annotation quality from ordered-pair conditional probabilities.
    std::vector<double> aqs_num(k, 0.0);
    std::vector<double> aqs_den(k, 0.0);
    std::vector<bool> defined(k, false);
    std::vector<double> first_chose(k);
    std::vector<double> second_chose(k);
    std::vector<double> both_chose(k);
    for (const auto& pair : p.pairs) {
      std::fill(first_chose.begin(), first_chose.end(), 0.0);
      std::fill(second_chose.begin(), second_chose.end(), 0.0);
      std::fill(both_chose.begin(), both_chose.end(), 0.0);
      for (std::size_t e = pair.begin; e < pair.end; ++e) {
        const auto& entry = p.entries[e];
        const double count = static_cast<double>(entry.count);
        first_chose[entry.label_first] += count;
        second_chose[entry.label_second] += count;
        if (entry.label_first == entry.label_second) both_chose[entry.label_first] += count;
      }
      const double weight = next_wqs[pair.first] * next_wqs[pair.second];
      for (std::size_t a = 0; a < k; ++a) {
        if (first_chose[a] > 0.0) {
          aqs_num[a] += weight * both_chose[a] / first_chose[a];
          aqs_den[a] += weight;
          defined[a] = true;
        }
        if (second_chose[a] > 0.0) {
          aqs_num[a] += weight * both_chose[a] / second_chose[a];
          aqs_den[a] += weight;
          defined[a] = true;
        }
      }
    }
    std::vector<double> next_aqs(k, 1.0);
    for (std::size_t a = 0; a < k; ++a) {
      if (!defined[a]) {
        unseen_labels.insert(a);
        continue;
      }
      next_aqs[a] = aqs_den[a] > 0.0 ? aqs_num[a] / aqs_den[a] : 0.0;
    }

    const double change = std::max({max_change(uqs, next_uqs), max_change(wqs, next_wqs),
                                     max_change(aqs, next_aqs)});
    uqs = std::move(next_uqs);
    wqs = std::move(next_wqs);
    aqs = std::move(next_aqs);
    converged = change < options.tol;
    if (observer) {
      auto snap = snapshot(p, dataset, uqs, wqs, aqs);
      snap.iterations = iteration;
      snap.converged = converged;
      observer(iteration, snap);
    }
  }

  QualityScores result = snapshot(p, dataset, uqs, wqs, aqs);
  result.iterations = iteration;
  result.converged = converged;
  result.skipped_units = std::move(skipped);
  for (std::size_t a : unseen_labels) {
    result.warnings.push_back("label " + std::to_string(dataset.scale().values[a]) +
                              " never chosen on a shared unit; AQS defaults to 1.0");
  }
  if (!converged) {
    result.warnings.push_back("no convergence after " + std::to_string(iteration) +
                              " iterations");
  }
  return result;
}

FilterResult filter_spammers(const Dataset& dataset, const QualityScores& scores,
                             double wqs_threshold, bool force) {
  if (!(wqs_threshold >= 0.0 && wqs_threshold <= 1.0)) {
    throw InputError("WQS threshold must lie in [0, 1]");
  }
  std::set<std::string> drop;
  std::vector<RemovedWorker> removed;
  for (std::size_t w = 0; w < dataset.f(); ++w) {
    const auto& id = dataset.workers()[w].worker_id;
    const auto it = scores.wqs.find(id);
    if (it == scores.wqs.end() || it->second >= wqs_threshold) continue;
    drop.insert(id);
    removed.push_back({id, it->second, dataset.worker_annotations(w).size()});
  }
  if (2 * drop.size() > dataset.f() && !force) {
    throw InputError("threshold " + std::to_string(wqs_threshold) + " would remove " +
                     std::to_string(drop.size()) + " of " +
                     std::to_string(dataset.f()) +
                     " workers; refusing without force");
  }
  std::vector<Worker> workers;
  for (const auto& w : dataset.workers()) {
    if (!drop.count(w.worker_id)) workers.push_back(w);
  }
  std::vector<Annotation> annotations;
  for (const auto& a : dataset.annotations()) {
    if (!drop.count(a.worker_id)) annotations.push_back(a);
  }
  return {Dataset(dataset.samples(), std::move(workers), std::move(annotations),
                  dataset.scale(), dataset.schema()),
          std::move(removed)};
}

}  // namespace crowdbias
