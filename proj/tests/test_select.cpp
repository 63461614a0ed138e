#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sei/select.hpp"

using namespace sei;

namespace {

// Independent greedy oracle working straight off a distance matrix.
std::vector<int> brute_force_kcenter(const std::vector<std::vector<double>>& pool,
                                     const std::vector<std::vector<double>>& centers, int k) {
  auto cosd = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return 1.0 - dot / std::sqrt(na * nb);
  };
  std::vector<int> picked;
  std::set<int> taken;
  for (int round = 0; round < k; ++round) {
    int best = -1;
    double best_d = -1;
    for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
      if (taken.count(i)) continue;
      double d = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) d = std::min(d, cosd(pool[static_cast<std::size_t>(i)], c));
      for (int j : picked) d = std::min(d, cosd(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    picked.push_back(best);
    taken.insert(best);
  }
  return picked;
}

std::vector<std::vector<double>> random_points(int n, int dim, Rng& rng) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& p : out) {
    double norm = 0;
    while (norm < 1e-6) {
      for (double& v : p) v = rng.gaussian();
      norm = l2_norm(p);
    }
  }
  return out;
}

NetworkParams tiny_params(int classes, std::uint64_t seed) {
  Arch a;
  a.num_classes = classes;
  a.input_length = 64;
  return init_params(a, seed);
}

std::vector<IQRecord> tiny_pool(int n, std::uint64_t seed) {
  SimConfig cfg;
  cfg.num_emitters = 2;
  cfg.per_emitter = (n + 1) / 2;
  cfg.length = 64;
  cfg.channel.snr_db = 12.0;
  cfg.seed = seed;
  Dataset ds = generate_dataset(cfg);
  ds.pools.unlabeled.resize(static_cast<std::size_t>(n));
  return ds.pools.unlabeled;
}

}  // namespace

TEST_CASE("hand-evaluated BALD scores from prediction sets") {
  // two one-hot passes on different classes: H(mean) - mean(H) = log 2
  std::vector<double> mean{0.5, 0.5};
  double score = entropy(mean) - 0.5 * (entropy({1.0, 0.0}) + entropy({0.0, 1.0}));
  CHECK(score == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // identical passes score zero
  std::vector<double> p{0.3, 0.7};
  CHECK(entropy(p) - entropy(p) == 0.0);
}

TEST_CASE("identical MC passes give zero BALD scores") {
  NetworkParams params = tiny_params(3, 1);
  params.arch.dropout_keep = 1.0;  // dropout disabled: every pass identical
  auto pool = tiny_pool(6, 2);
  for (double s : bald_scores(params, pool, 4, 99)) CHECK(std::abs(s) < 1e-12);
}

TEST_CASE("BALD scores stay inside [0, log M]") {
  NetworkParams params = tiny_params(4, 3);
  auto pool = tiny_pool(12, 4);
  auto scores = bald_scores(params, pool, 6, 7);
  REQUIRE(scores.size() == pool.size());
  for (double s : scores) {
    CHECK(s >= -1e-12);
    CHECK(s <= std::log(4.0) + 1e-12);
  }
  CHECK(bald_scores(params, pool, 6, 7) == scores);  // seeded determinism
  CHECK_THROWS_AS(bald_scores(params, pool, 1, 7), config_error);
}

TEST_CASE("select_bald keeps the top K with low-index tie breaks") {
  CandidateScores sel = select_bald({0.1, 0.9, 0.5}, 2);
  CHECK(sel.indices == std::vector<int>{1, 2});

  CandidateScores all = select_bald({0.3, 0.2, 0.1}, 3);
  CHECK(all.indices == std::vector<int>{0, 1, 2});

  CandidateScores ties = select_bald({0.5, 0.7, 0.5, 0.5}, 3);
  CHECK(ties.indices == std::vector<int>{1, 0, 2});

  CHECK_THROWS_AS(select_bald({0.1}, 2), selection_error);
}

TEST_CASE("select_bald matches a sort oracle on random score sets") {
  Rng rng(5);
  for (int trial = 0; trial < 16; ++trial) {
    std::vector<double> scores(12);
    for (double& s : scores) s = rng.uniform();
    if (trial % 3 == 0) scores[5] = scores[2];  // force ties sometimes
    int k = 1 + static_cast<int>(rng.below(12));
    std::vector<int> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
      return a < b;
    });
    order.resize(static_cast<std::size_t>(k));
    CHECK(select_bald(scores, k).indices == order);
  }
}

TEST_CASE("k-center greedy on the unit circle examples") {
  std::vector<std::vector<double>> centers{{1, 0}};
  std::vector<std::vector<double>> pool{{0, 1}, {-1, 0}};
  CandidateScores one = kcenter_greedy(pool, centers, 1);
  CHECK(one.indices == std::vector<int>{1});  // distance 2 beats distance 1
  CHECK(one.scores[0] == doctest::Approx(2.0).epsilon(1e-12));

  CandidateScores two = kcenter_greedy(pool, centers, 2);
  CHECK(two.indices == std::vector<int>{1, 0});

  CHECK_THROWS_AS(kcenter_greedy(pool, centers, 3), selection_error);
  CHECK_THROWS_AS(kcenter_greedy(pool, {}, 1), selection_error);
}

TEST_CASE("k-center greedy matches the brute-force oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 5 + static_cast<int>(rng.below(16));
    int k = 1 + static_cast<int>(rng.below(std::min(8, n)));
    auto pool = random_points(n, 4, rng);
    auto centers = random_points(2, 4, rng);
    CandidateScores got = kcenter_greedy(pool, centers, k);
    CHECK(got.indices == brute_force_kcenter(pool, centers, k));
  }
}

TEST_CASE("k-center greedy is invariant to positive rescaling") {
  Rng rng(7);
  auto pool = random_points(15, 5, rng);
  auto centers = random_points(3, 5, rng);
  CandidateScores base = kcenter_greedy(pool, centers, 6);
  auto scaled_pool = pool;
  auto scaled_centers = centers;
  for (auto& p : scaled_pool)
    for (double& v : p) v *= 3.7;
  for (auto& c : scaled_centers)
    for (double& v : c) v *= 0.21;
  CHECK(kcenter_greedy(scaled_pool, scaled_centers, 6).indices == base.indices);
}

TEST_CASE("k-center pick distances never increase") {
  Rng rng(8);
  auto pool = random_points(18, 3, rng);
  auto centers = random_points(2, 3, rng);
  CandidateScores sel = kcenter_greedy(pool, centers, 8);
  for (std::size_t i = 1; i < sel.scores.size(); ++i) CHECK(sel.scores[i] <= sel.scores[i - 1] + 1e-12);
  std::set<int> unique(sel.indices.begin(), sel.indices.end());
  CHECK(unique.size() == sel.indices.size());
}

TEST_CASE("random selection is seeded and uniform-ish") {
  CandidateScores all = select_random(5, 5, 1);
  std::set<int> got(all.indices.begin(), all.indices.end());
  CHECK(got == std::set<int>{0, 1, 2, 3, 4});

  CHECK(select_random(20, 6, 42).indices == select_random(20, 6, 42).indices);
  CHECK_THROWS_AS(select_random(4, 5, 1), selection_error);

  std::set<int> covered;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto sel = select_random(10, 3, seed);
    covered.insert(sel.indices.begin(), sel.indices.end());
    std::set<int> uniq(sel.indices.begin(), sel.indices.end());
    CHECK(uniq.size() == 3);
  }
  CHECK(covered.size() == 10);
}

TEST_CASE("selection embeddings are unit rows and deterministic") {
  NetworkParams params = tiny_params(2, 9);
  auto pool = tiny_pool(5, 10);
  auto emb = selection_embeddings(params, pool, default_aug_angles()[0]);
  REQUIRE(emb.size() == pool.size());
  for (const auto& e : emb) CHECK(std::abs(l2_norm(e) - 1.0) < 1e-9);
  CHECK(selection_embeddings(params, pool, default_aug_angles()[0]) == emb);
}
