#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <vector>

#include "sei/common.hpp"

namespace sei {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// One baseband capture. emitter_truth stays filled for simulated data so the
// pool can act as its own annotation oracle; label is only set once revealed.
// Labels are 1-based emitter ids.
struct IQRecord {
  std::vector<std::complex<double>> samples;
  std::optional<int> label;
  int emitter_truth = -1;  // -1: unknown (e.g. unlabeled file data)
};

// The hardware fingerprint. The real chain behind Eq.-1-style captures is
// device dependent; this five-parameter chain is a documented stand-in.
struct EmitterProfile {
  int emitter_id = 0;
  double iq_gain_imbalance_db = 0.0;
  double iq_phase_imbalance_rad = 0.0;
  double carrier_freq_offset = 0.0;  // fraction of sample rate
  double phase_noise_std = 0.0;      // radians per sample
  double pa_cubic_coeff = 0.0;
};

struct ChannelConfig {
  std::vector<std::complex<double>> taps{{1.0, 0.0}};
  double snr_db = std::numeric_limits<double>::infinity();
};

struct DatasetPools {
  std::vector<IQRecord> labeled;
  std::vector<IQRecord> unlabeled;
  std::vector<IQRecord> test;
};

struct SimConfig {
  int num_emitters = 4;
  int per_emitter = 64;
  int length = 256;
  ChannelConfig channel;
  std::uint64_t seed = 0;
  int initial_labeled = 0;   // stratified across emitters
  int test_per_emitter = 0;
  int samples_per_symbol = 4;
};

struct Dataset {
  DatasetPools pools;
  std::vector<EmitterProfile> profiles;
};

// Parameter ranges for the impairment chain. Wide enough that four random
// emitters separate at 10 dB SNR, narrow enough that they are not trivially
// distinct.
namespace impairment_range {
inline constexpr double kGainImbalanceDb = 4.0;       // +/- dB
inline constexpr double kPhaseImbalanceRad = 20.0 * kPi / 180.0;  // +/- rad
inline constexpr double kCfoMax = 5e-3;               // +/- fraction of fs
inline constexpr double kPhaseNoiseStdMax = 0.03;     // rad/sample
inline constexpr double kPaCubicMax = 0.15;
}  // namespace impairment_range

inline std::vector<EmitterProfile> draw_profiles(int num_emitters, std::uint64_t seed) {
  std::vector<EmitterProfile> profiles;
  profiles.reserve(static_cast<std::size_t>(num_emitters));
  for (int e = 0; e < num_emitters; ++e) {
    Rng rng(derive_seed(seed, "profile", static_cast<std::uint64_t>(e)));
    EmitterProfile p;
    p.emitter_id = e + 1;
    p.iq_gain_imbalance_db = rng.uniform(-impairment_range::kGainImbalanceDb, impairment_range::kGainImbalanceDb);
    p.iq_phase_imbalance_rad = rng.uniform(-impairment_range::kPhaseImbalanceRad, impairment_range::kPhaseImbalanceRad);
    p.carrier_freq_offset = rng.uniform(-impairment_range::kCfoMax, impairment_range::kCfoMax);
    p.phase_noise_std = rng.uniform(0.0, impairment_range::kPhaseNoiseStdMax);
    p.pa_cubic_coeff = rng.uniform(0.0, impairment_range::kPaCubicMax);
    profiles.push_back(p);
  }
  return profiles;
}

// Random QPSK pulse train: unit-power symbols held samples_per_symbol wide,
// then lightly smoothed so symbol transitions modulate the envelope (which
// is what makes the cubic PA term observable).
inline std::vector<std::complex<double>> qpsk_payload(int length, int samples_per_symbol, Rng& rng) {
  std::vector<std::complex<double>> out(static_cast<std::size_t>(length));
  const double a = 1.0 / std::sqrt(2.0);
  std::complex<double> sym{a, a};
  for (int l = 0; l < length; ++l) {
    if (l % samples_per_symbol == 0) {
      std::uint64_t bits = rng.below(4);
      sym = {bits & 1 ? a : -a, bits & 2 ? a : -a};
    }
    out[static_cast<std::size_t>(l)] = sym;
  }
  std::vector<std::complex<double>> shaped(out.size());
  for (std::size_t l = 0; l < out.size(); ++l) {
    std::complex<double> prev = l > 0 ? out[l - 1] : out[l];
    std::complex<double> next = l + 1 < out.size() ? out[l + 1] : out[l];
    shaped[l] = 0.25 * prev + 0.5 * out[l] + 0.25 * next;
  }
  return shaped;
}

// Impairment chain: IQ imbalance -> CFO rotation -> phase-noise walk ->
// cubic PA nonlinearity.
inline void apply_impairments(std::vector<std::complex<double>>& x, const EmitterProfile& p, Rng& phase_rng) {
  double gain = std::pow(10.0, p.iq_gain_imbalance_db / 40.0);  // split across rails
  double c = std::cos(p.iq_phase_imbalance_rad / 2.0);
  double s = std::sin(p.iq_phase_imbalance_rad / 2.0);
  double phase_walk = 0.0;
  for (std::size_t l = 0; l < x.size(); ++l) {
    double i = x[l].real(), q = x[l].imag();
    double ii = gain * (i * c - q * s);
    double qq = (q * c - i * s) / gain;
    std::complex<double> y{ii, qq};
    double cfo = 2.0 * kPi * p.carrier_freq_offset * static_cast<double>(l);
    phase_walk += p.phase_noise_std > 0 ? phase_rng.gaussian(0.0, p.phase_noise_std) : 0.0;
    y *= std::polar(1.0, cfo + phase_walk);
    double mag2 = std::norm(y);
    x[l] = y * (1.0 + p.pa_cubic_coeff * mag2);
  }
}

// Causal FIR channel; transient at the start is kept so length is preserved.
inline std::vector<std::complex<double>> apply_channel(const std::vector<std::complex<double>>& x,
                                                       const std::vector<std::complex<double>>& taps) {
  if (taps.empty()) throw config_error("channel must have at least one tap");
  std::vector<std::complex<double>> y(x.size());
  for (std::size_t l = 0; l < x.size(); ++l) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t k = 0; k < taps.size() && k <= l; ++k) acc += taps[k] * x[l - k];
    y[l] = acc;
  }
  return y;
}

inline void quantize_to_f32(std::vector<std::complex<double>>& x) {
  for (auto& v : x) v = {static_cast<double>(static_cast<float>(v.real())), static_cast<double>(static_cast<float>(v.imag()))};
}

// One record of emitter `profile`. Streams are derived per (seed, record
// index) so records are independent of generation order.
inline IQRecord generate_record(const SimConfig& cfg, const EmitterProfile& profile, std::uint64_t record_index) {
  Rng payload_rng(derive_seed(cfg.seed, "payload", record_index));
  Rng phase_rng(derive_seed(cfg.seed, "phase_noise", record_index));
  Rng noise_rng(derive_seed(cfg.seed, "awgn", record_index));

  auto x = qpsk_payload(cfg.length, cfg.samples_per_symbol, payload_rng);
  apply_impairments(x, profile, phase_rng);
  auto y = apply_channel(x, cfg.channel.taps);

  if (std::isfinite(cfg.channel.snr_db)) {
    double power = 0.0;
    for (const auto& v : y) power += std::norm(v);
    power /= static_cast<double>(y.size());
    double sigma2 = power / std::pow(10.0, cfg.channel.snr_db / 10.0);
    double per_component = std::sqrt(sigma2 / 2.0);
    for (auto& v : y) v += std::complex<double>(noise_rng.gaussian(0.0, per_component), noise_rng.gaussian(0.0, per_component));
  }
  // Quantize to f32 so that saving and reloading reproduces samples exactly.
  quantize_to_f32(y);

  IQRecord rec;
  rec.samples = std::move(y);
  rec.emitter_truth = profile.emitter_id;
  return rec;
}

// Full synthetic dataset with a stratified labeled/unlabeled/test split.
// Deterministic per seed.
inline Dataset generate_dataset(const SimConfig& cfg) {
  if (cfg.num_emitters < 2) throw config_error("generate_dataset: need at least 2 emitters, got " + std::to_string(cfg.num_emitters));
  if (cfg.per_emitter < 1) throw config_error("generate_dataset: per_emitter must be >= 1");
  if (cfg.length < 64) throw config_error("generate_dataset: record length must be >= 64, got " + std::to_string(cfg.length));
  if (cfg.test_per_emitter >= cfg.per_emitter)
    throw config_error("generate_dataset: test_per_emitter must leave training records");

  Dataset ds;
  ds.profiles = draw_profiles(cfg.num_emitters, cfg.seed);

  // Per-emitter record lists, then split: test heads, labeled round-robin.
  std::vector<std::vector<IQRecord>> by_emitter(static_cast<std::size_t>(cfg.num_emitters));
  std::uint64_t record_index = 0;
  for (int e = 0; e < cfg.num_emitters; ++e)
    for (int r = 0; r < cfg.per_emitter; ++r)
      by_emitter[static_cast<std::size_t>(e)].push_back(generate_record(cfg, ds.profiles[static_cast<std::size_t>(e)], record_index++));

  for (int e = 0; e < cfg.num_emitters; ++e) {
    auto& v = by_emitter[static_cast<std::size_t>(e)];
    for (int r = 0; r < cfg.test_per_emitter; ++r) {
      v.back().label = v.back().emitter_truth;
      ds.pools.test.push_back(std::move(v.back()));
      v.pop_back();
    }
  }
  int want_labeled = cfg.initial_labeled;
  std::size_t total_left = 0;
  for (auto& v : by_emitter) total_left += v.size();
  if (static_cast<std::size_t>(want_labeled) > total_left)
    throw config_error("generate_dataset: initial_labeled " + std::to_string(want_labeled) + " exceeds available " + std::to_string(total_left));
  int taken = 0;
  while (taken < want_labeled) {
    bool any = false;
    for (int e = 0; e < cfg.num_emitters && taken < want_labeled; ++e) {
      auto& v = by_emitter[static_cast<std::size_t>(e)];
      if (v.empty()) continue;
      v.front().label = v.front().emitter_truth;
      ds.pools.labeled.push_back(std::move(v.front()));
      v.erase(v.begin());
      ++taken;
      any = true;
    }
    if (!any) break;
  }
  // Remaining records form the unlabeled pool, interleaved across emitters
  // and shuffled so pool order carries no class signal.
  bool left = true;
  while (left) {
    left = false;
    for (auto& v : by_emitter) {
      if (v.empty()) continue;
      ds.pools.unlabeled.push_back(std::move(v.front()));
      v.erase(v.begin());
      left = left || !v.empty();
    }
  }
  Rng shuffle_rng(derive_seed(cfg.seed, "pool_shuffle"));
  shuffle_rng.shuffle(ds.pools.unlabeled);
  return ds;
}

inline Dataset generate_dataset(int num_emitters, int per_emitter, int length, const ChannelConfig& channel,
                                std::uint64_t seed) {
  SimConfig cfg;
  cfg.num_emitters = num_emitters;
  cfg.per_emitter = per_emitter;
  cfg.length = length;
  cfg.channel = channel;
  cfg.seed = seed;
  return generate_dataset(cfg);
}

// Phase rotation s_l = r_l * e^{j theta}; labels ride along unchanged.
inline IQRecord augment(const IQRecord& record, double theta) {
  IQRecord out = record;
  std::complex<double> rot = std::polar(1.0, theta);
  for (auto& s : out.samples) s *= rot;
  return out;
}

// Moves the listed unlabeled records into the labeled pool, exposing their
// ground truth. Total record count is conserved.
inline void reveal_label(DatasetPools& pools, const std::vector<int>& unlabeled_indices) {
  std::vector<int> idx = unlabeled_indices;
  std::sort(idx.begin(), idx.end());
  if (std::adjacent_find(idx.begin(), idx.end()) != idx.end())
    throw selection_error("reveal_label: duplicate index in selection");
  for (int i : idx)
    if (i < 0 || i >= static_cast<int>(pools.unlabeled.size()))
      throw selection_error("reveal_label: index " + std::to_string(i) + " out of range for pool of " + std::to_string(pools.unlabeled.size()));
  // Ascending order into labeled, descending removal from unlabeled.
  for (int i : idx) {
    IQRecord rec = pools.unlabeled[static_cast<std::size_t>(i)];
    if (rec.emitter_truth < 1) throw selection_error("reveal_label: record " + std::to_string(i) + " has no ground truth to reveal");
    rec.label = rec.emitter_truth;
    pools.labeled.push_back(std::move(rec));
  }
  for (auto it = idx.rbegin(); it != idx.rend(); ++it)
    pools.unlabeled.erase(pools.unlabeled.begin() + *it);
}

// Default augmentation pair (0.5*pi, pi).
inline std::vector<double> default_aug_angles() { return {0.5 * kPi, kPi}; }

// Flat channel for unit work, 3-tap random multipath for experiments.
inline ChannelConfig make_channel(const std::string& kind, double snr_db, std::uint64_t seed) {
  ChannelConfig ch;
  ch.snr_db = snr_db;
  if (kind == "flat") {
    ch.taps = {{1.0, 0.0}};
  } else if (kind == "multipath3") {
    Rng rng(derive_seed(seed, "channel_taps"));
    ch.taps = {{1.0, 0.0}};
    for (int k = 1; k < 3; ++k) {
      double mag = 0.3 * rng.uniform();
      double ph = rng.uniform(0.0, 2.0 * kPi);
      ch.taps.push_back(std::polar(mag, ph));
    }
  } else {
    throw config_error("unknown channel kind '" + kind + "' (expected flat or multipath3)");
  }
  return ch;
}

}  // namespace sei
