#include <doctest.h>

#include <cmath>
#include <complex>

#include "sei/signal.hpp"

using namespace sei;

namespace {

SimConfig flat_config(int emitters, int per_emitter, int length, double snr_db, std::uint64_t seed) {
  SimConfig cfg;
  cfg.num_emitters = emitters;
  cfg.per_emitter = per_emitter;
  cfg.length = length;
  cfg.channel.snr_db = snr_db;
  cfg.seed = seed;
  return cfg;
}

const double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST_CASE("degenerate chain reproduces the clean payload") {
  SimConfig cfg = flat_config(2, 1, 128, kInf, 42);
  EmitterProfile zero;
  zero.emitter_id = 1;
  IQRecord rec = generate_record(cfg, zero, 5);

  Rng payload_rng(derive_seed(cfg.seed, "payload", 5));
  auto clean = qpsk_payload(cfg.length, cfg.samples_per_symbol, payload_rng);
  quantize_to_f32(clean);
  REQUIRE(rec.samples.size() == clean.size());
  for (std::size_t l = 0; l < clean.size(); ++l) CHECK(rec.samples[l] == clean[l]);
}

TEST_CASE("pure CFO rotates the payload analytically") {
  SimConfig cfg = flat_config(2, 1, 256, kInf, 9);
  EmitterProfile p;
  p.emitter_id = 1;
  p.carrier_freq_offset = 3e-4;
  IQRecord rec = generate_record(cfg, p, 0);

  Rng payload_rng(derive_seed(cfg.seed, "payload", 0));
  auto clean = qpsk_payload(cfg.length, cfg.samples_per_symbol, payload_rng);
  for (std::size_t l = 0; l < clean.size(); ++l) {
    std::complex<double> want = clean[l] * std::polar(1.0, 2.0 * kPi * p.carrier_freq_offset * static_cast<double>(l));
    CHECK(std::abs(rec.samples[l] - want) < 1e-6);
  }
}

TEST_CASE("empirical SNR lands within half a dB of the target") {
  SimConfig noisy = flat_config(2, 1, 4096, 10.0, 77);
  SimConfig clean = flat_config(2, 1, 4096, kInf, 77);
  EmitterProfile p = draw_profiles(2, 77)[0];
  IQRecord r_noisy = generate_record(noisy, p, 1);
  IQRecord r_clean = generate_record(clean, p, 1);
  double sig = 0, noise = 0;
  for (std::size_t l = 0; l < r_clean.samples.size(); ++l) {
    sig += std::norm(r_clean.samples[l]);
    noise += std::norm(r_noisy.samples[l] - r_clean.samples[l]);
  }
  double snr_db = 10.0 * std::log10(sig / noise);
  CHECK(snr_db > 9.5);
  CHECK(snr_db < 10.5);
}

TEST_CASE("augment matches the unit-circle examples") {
  IQRecord r;
  r.samples = {{1.0, 0.0}};
  r.label = 3;
  r.emitter_truth = 3;
  IQRecord pi_rot = augment(r, kPi);
  CHECK(pi_rot.samples[0].real() == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(pi_rot.samples[0].imag()) < 1e-12);
  IQRecord half = augment(r, 0.5 * kPi);
  CHECK(std::abs(half.samples[0].real()) < 1e-12);
  CHECK(half.samples[0].imag() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pi_rot.label == 3);
  CHECK(pi_rot.emitter_truth == 3);
}

TEST_CASE("augment preserves magnitudes and composes additively") {
  SimConfig cfg = flat_config(2, 2, 128, 15.0, 3);
  Dataset ds = generate_dataset(cfg);
  Rng rng(1);
  for (const IQRecord& rec : ds.pools.unlabeled) {
    double t1 = rng.uniform(0, 2 * kPi), t2 = rng.uniform(0, 2 * kPi);
    IQRecord a = augment(rec, t1);
    IQRecord ab = augment(a, t2);
    IQRecord direct = augment(rec, t1 + t2);
    for (std::size_t l = 0; l < rec.samples.size(); ++l) {
      CHECK(std::abs(std::abs(a.samples[l]) - std::abs(rec.samples[l])) < 1e-12);
      CHECK(std::abs(ab.samples[l] - direct.samples[l]) < 1e-12);
    }
  }
}

TEST_CASE("generation is bit-deterministic per seed") {
  SimConfig cfg = flat_config(3, 4, 128, 10.0, 123);
  Dataset a = generate_dataset(cfg);
  Dataset b = generate_dataset(cfg);
  REQUIRE(a.pools.unlabeled.size() == b.pools.unlabeled.size());
  for (std::size_t i = 0; i < a.pools.unlabeled.size(); ++i)
    CHECK(a.pools.unlabeled[i].samples == b.pools.unlabeled[i].samples);
  for (std::size_t e = 0; e < a.profiles.size(); ++e) {
    CHECK(a.profiles[e].iq_gain_imbalance_db == b.profiles[e].iq_gain_imbalance_db);
    CHECK(a.profiles[e].carrier_freq_offset == b.profiles[e].carrier_freq_offset);
  }
}

TEST_CASE("profiles are distinct across emitters") {
  auto profiles = draw_profiles(6, 2024);
  for (std::size_t i = 0; i < profiles.size(); ++i)
    for (std::size_t j = i + 1; j < profiles.size(); ++j) {
      bool differ = profiles[i].iq_gain_imbalance_db != profiles[j].iq_gain_imbalance_db ||
                    profiles[i].iq_phase_imbalance_rad != profiles[j].iq_phase_imbalance_rad ||
                    profiles[i].carrier_freq_offset != profiles[j].carrier_freq_offset;
      CHECK(differ);
    }
}

namespace {

// Fingerprint statistics of one record: rail power asymmetry, I/Q
// correlation, lag-1 phase drift, envelope kurtosis.
std::vector<double> moment_vector(const IQRecord& r) {
  double pi = 0, pq = 0, iq = 0, p2 = 0, p4 = 0;
  std::complex<double> lag{0, 0};
  for (std::size_t l = 0; l < r.samples.size(); ++l) {
    double re = r.samples[l].real(), im = r.samples[l].imag();
    pi += re * re;
    pq += im * im;
    iq += re * im;
    double m2 = re * re + im * im;
    p2 += m2;
    p4 += m2 * m2;
    if (l + 1 < r.samples.size()) lag += r.samples[l + 1] * std::conj(r.samples[l]);
  }
  double n = static_cast<double>(r.samples.size());
  return {(pi - pq) / n, iq / n, std::arg(lag), (p4 / n) / ((p2 / n) * (p2 / n))};
}

double feature_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("emitters separate in waveform statistics on noise-free data") {
  SimConfig cfg = flat_config(4, 6, 2048, kInf, 31);
  Dataset ds = generate_dataset(cfg);
  std::vector<std::vector<double>> feats;
  std::vector<int> who;
  for (const IQRecord& r : ds.pools.unlabeled) {
    feats.push_back(moment_vector(r));
    who.push_back(r.emitter_truth);
  }
  for (std::size_t d = 0; d < feats[0].size(); ++d) {
    double mean = 0, var = 0;
    for (auto& f : feats) mean += f[d];
    mean /= static_cast<double>(feats.size());
    for (auto& f : feats) var += (f[d] - mean) * (f[d] - mean);
    double sd = std::sqrt(var / static_cast<double>(feats.size())) + 1e-12;
    for (auto& f : feats) f[d] = (f[d] - mean) / sd;
  }
  double within = 0, between = 0;
  int nw = 0, nb = 0;
  for (std::size_t i = 0; i < feats.size(); ++i)
    for (std::size_t j = i + 1; j < feats.size(); ++j) {
      double d = feature_dist(feats[i], feats[j]);
      if (who[i] == who[j]) {
        within += d;
        ++nw;
      } else {
        between += d;
        ++nb;
      }
    }
  CHECK(between / nb > within / nw);
}

TEST_CASE("reveal_label moves records and conserves totals") {
  SimConfig cfg = flat_config(2, 6, 128, 20.0, 5);
  cfg.initial_labeled = 2;
  cfg.test_per_emitter = 1;
  Dataset ds = generate_dataset(cfg);
  DatasetPools& pools = ds.pools;
  std::size_t labeled0 = pools.labeled.size(), unlabeled0 = pools.unlabeled.size();

  reveal_label(pools, {});
  CHECK(pools.labeled.size() == labeled0);
  CHECK(pools.unlabeled.size() == unlabeled0);

  auto moved_samples = pools.unlabeled[1].samples;
  int moved_truth = pools.unlabeled[1].emitter_truth;
  reveal_label(pools, {1});
  CHECK(pools.labeled.size() == labeled0 + 1);
  CHECK(pools.unlabeled.size() == unlabeled0 - 1);
  CHECK(pools.labeled.back().label == moved_truth);
  CHECK(pools.labeled.back().samples == moved_samples);

  std::vector<int> all;
  for (std::size_t i = 0; i < pools.unlabeled.size(); ++i) all.push_back(static_cast<int>(i));
  reveal_label(pools, all);
  CHECK(pools.unlabeled.empty());
  CHECK(pools.labeled.size() == labeled0 + unlabeled0);
  for (const IQRecord& r : pools.labeled) CHECK(r.label == r.emitter_truth);
}

TEST_CASE("reveal_label rejects bad indices") {
  SimConfig cfg = flat_config(2, 2, 128, 20.0, 6);
  Dataset ds = generate_dataset(cfg);
  CHECK_THROWS_AS(reveal_label(ds.pools, {0, 0}), selection_error);
  CHECK_THROWS_AS(reveal_label(ds.pools, {-1}), selection_error);
  CHECK_THROWS_AS(reveal_label(ds.pools, {static_cast<int>(ds.pools.unlabeled.size())}), selection_error);

  while (ds.pools.unlabeled.size() > 1) reveal_label(ds.pools, {0});
  reveal_label(ds.pools, {0});
  CHECK_THROWS_AS(reveal_label(ds.pools, {0}), selection_error);
}

TEST_CASE("generate_dataset validates its configuration") {
  CHECK_THROWS_AS(generate_dataset(flat_config(1, 4, 128, 10, 0)), config_error);
  CHECK_THROWS_AS(generate_dataset(flat_config(2, 4, 32, 10, 0)), config_error);
  SimConfig cfg = flat_config(2, 2, 128, 10, 0);
  cfg.test_per_emitter = 2;
  CHECK_THROWS_AS(generate_dataset(cfg), config_error);
}

TEST_CASE("channel kinds") {
  ChannelConfig flat = make_channel("flat", 10.0, 1);
  CHECK(flat.taps.size() == 1);
  ChannelConfig mp = make_channel("multipath3", 10.0, 1);
  CHECK(mp.taps.size() == 3);
  CHECK(mp.taps == make_channel("multipath3", 10.0, 1).taps);
  CHECK_THROWS_AS(make_channel("bogus", 10.0, 1), config_error);
}
