#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sei/network.hpp"

namespace sei {

// Output of one query round: unique pool indices plus the per-index BALD
// score or the K-center pick distance, in selection order.
struct CandidateScores {
  std::vector<int> indices;
  std::vector<double> scores;
  std::string strategy;
};

inline double entropy(const std::vector<double>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

// BALD via MC dropout: T stochastic classifier passes per record; score is
// the entropy of the mean prediction minus the mean per-pass entropy.
// Dropout lives only in the classifier, so the deterministic encoder and
// projection run once per record and the T passes reuse that embedding.
inline std::vector<double> bald_scores(NetworkParams& params, const std::vector<IQRecord>& pool, int passes,
                                       std::uint64_t seed, double aug_angle) {
  if (passes < 2) throw config_error("bald_scores: need at least 2 MC passes, got " + std::to_string(passes));
  if (pool.empty()) return {};
  int m = params.arch.num_classes;
  Tensor projected = project_records_eval(params, pool, iota_indices(pool.size()), aug_angle, false);
  std::vector<double> scores(pool.size());
  std::vector<double> mean_probs(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    Tensor row = Tensor::from({1, params.arch.embed_dim},
                              {projected.data.begin() + static_cast<std::ptrdiff_t>(i) * params.arch.embed_dim,
                               projected.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * params.arch.embed_dim});
    std::fill(mean_probs.begin(), mean_probs.end(), 0.0);
    double entropy_sum = 0;
    for (int t = 0; t < passes; ++t) {
      Rng rng(derive_seed(seed, "mc_dropout", i * static_cast<std::size_t>(passes) + static_cast<std::size_t>(t)));
      Tensor probs = classify_projected(params, row, Mode::mc_dropout, rng);
      entropy_sum += entropy(probs.data);
      for (int j = 0; j < m; ++j) mean_probs[static_cast<std::size_t>(j)] += probs.data[static_cast<std::size_t>(j)];
    }
    for (double& v : mean_probs) v /= static_cast<double>(passes);
    scores[i] = entropy(mean_probs) - entropy_sum / static_cast<double>(passes);
  }
  return scores;
}

inline std::vector<double> bald_scores(NetworkParams& params, const std::vector<IQRecord>& pool, int passes,
                                       std::uint64_t seed) {
  return bald_scores(params, pool, passes, seed, default_aug_angles()[0]);
}

// Indices of the K largest scores; ties break toward the lower index.
inline CandidateScores select_bald(const std::vector<double>& scores, int k) {
  if (k < 0 || k > static_cast<int>(scores.size()))
    throw selection_error("select_bald: budget " + std::to_string(k) + " exceeds pool of " + std::to_string(scores.size()));
  std::vector<int> order = iota_indices(scores.size());
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)]; });
  CandidateScores out;
  out.strategy = "bald";
  for (int i = 0; i < k; ++i) {
    out.indices.push_back(order[static_cast<std::size_t>(i)]);
    out.scores.push_back(scores[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  }
  return out;
}

// K-center greedy under cosine distance d = 1 - cos: repeatedly take the
// pool point farthest from the labeled centers and everything picked so
// far. Scores record the covering distance at each pick, which is
// non-increasing.
inline CandidateScores kcenter_greedy(const std::vector<std::vector<double>>& pool_embeddings,
                                      const std::vector<std::vector<double>>& center_embeddings, int k) {
  if (k < 0 || k > static_cast<int>(pool_embeddings.size()))
    throw selection_error("kcenter_greedy: budget " + std::to_string(k) + " exceeds pool of " + std::to_string(pool_embeddings.size()));
  if (center_embeddings.empty()) throw selection_error("kcenter_greedy: need at least one labeled center");

  auto cosine_distance = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) throw numeric_error("kcenter_greedy: zero embedding");
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
  };

  std::size_t n = pool_embeddings.size();
  std::vector<double> min_dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : center_embeddings) best = std::min(best, cosine_distance(pool_embeddings[i], c));
    min_dist[i] = best;
  }
  std::vector<char> picked(n, 0);
  CandidateScores out;
  out.strategy = "kcenter";
  for (int round = 0; round < k; ++round) {
    int best = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      if (best < 0 || min_dist[i] > min_dist[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    picked[static_cast<std::size_t>(best)] = 1;
    out.indices.push_back(best);
    out.scores.push_back(min_dist[static_cast<std::size_t>(best)]);
    for (std::size_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      min_dist[i] = std::min(min_dist[i], cosine_distance(pool_embeddings[i], pool_embeddings[static_cast<std::size_t>(best)]));
    }
  }
  return out;
}

// Seeded uniform sample without replacement; scores carry the draw order.
inline CandidateScores select_random(int pool_size, int k, std::uint64_t seed) {
  if (k < 0 || k > pool_size)
    throw selection_error("select_random: budget " + std::to_string(k) + " exceeds pool of " + std::to_string(pool_size));
  std::vector<int> order = iota_indices(static_cast<std::size_t>(pool_size));
  Rng rng(seed);
  // Partial Fisher-Yates: position i draws from [i, n).
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(pool_size - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  CandidateScores out;
  out.strategy = "random";
  for (int i = 0; i < k; ++i) {
    out.indices.push_back(order[static_cast<std::size_t>(i)]);
    out.scores.push_back(static_cast<double>(i + 1));
  }
  return out;
}

// Embeddings used by the representativeness selector: eval-mode projection
// outputs, unit-normalized, tilde view.
inline std::vector<std::vector<double>> selection_embeddings(NetworkParams& params, const std::vector<IQRecord>& records,
                                                             double aug_angle) {
  Tensor p = project_records_eval(params, records, iota_indices(records.size()), aug_angle, true);
  std::vector<std::vector<double>> out(records.size());
  int d = params.arch.embed_dim;
  for (std::size_t i = 0; i < records.size(); ++i)
    out[i].assign(p.data.begin() + static_cast<std::ptrdiff_t>(i) * d, p.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * d);
  return out;
}

}  // namespace sei
