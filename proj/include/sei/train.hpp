#pragma once

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "sei/checkpoint.hpp"
#include "sei/key_queue.hpp"
#include "sei/losses.hpp"
#include "sei/network.hpp"

namespace sei {

struct EpochStats {
  int epoch = 0;  // 1-based
  double l_cl = std::numeric_limits<double>::quiet_NaN();
  double l_ce = std::numeric_limits<double>::quiet_NaN();
  double l_total = std::numeric_limits<double>::quiet_NaN();
  double train_acc = std::numeric_limits<double>::quiet_NaN();
};

struct TrainConfig {
  int epochs = 100;
  int batch = 64;
  double lr = 0.001;
  double tau = 0.2;
  double momentum = 0.99;  // key-branch coefficient
  double alpha = 0.1;      // joint-loss weight, stage 2
  bool compute_cl = true;  // stage 2: drive the key branch and the CL term
  std::vector<double> aug_angles = default_aug_angles();
  std::uint64_t seed = 0;
  // Stage 2 stops once the epoch train accuracy reaches this (left above 1
  // to disable).
  double stop_at_train_acc = 2.0;
};

namespace detail {

inline void check_angles(const TrainConfig& cfg) {
  if (cfg.aug_angles.size() != 2)
    throw config_error("training needs exactly two augmentation angles (tilde, bar views), got " +
                       std::to_string(cfg.aug_angles.size()));
}

inline std::vector<std::pair<std::string, Tensor*>> prefixed(std::string prefix,
                                                             std::vector<std::pair<std::string, Tensor*>> v) {
  for (auto& [name, t] : v) name = prefix + "." + name;
  return v;
}

// Key-branch forward on both views; returns normalized key rows as plain
// tensors (gradient-free by construction).
inline std::pair<Tensor, Tensor> key_forward(Graph& g, NetworkParams& params, const Tensor& batch_tilde,
                                             const Tensor& batch_bar) {
  ParamBinder bind(g, false);
  auto run = [&](const Tensor& batch) {
    Graph::ValueId z = encode(g, bind, params.key_encoder, g.leaf(batch, false), kKeyBranchBn, params.arch);
    Graph::ValueId p = mlp_forward(g, bind, params.key_projection, z);
    return g.value(ops::l2_normalize_rows(g, p));
  };
  return {run(batch_tilde), run(batch_bar)};
}

inline std::vector<std::vector<int>> epoch_batches(std::size_t pool, int batch, Rng& rng) {
  std::vector<int> order = iota_indices(pool);
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch))
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + static_cast<std::size_t>(batch))));
  return batches;
}

inline double train_accuracy(NetworkParams& params, const std::vector<IQRecord>& labeled, double aug_angle) {
  Tensor probs = classify_records_eval(params, labeled, iota_indices(labeled.size()), aug_angle);
  int correct = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i)
    if (argmax_row(probs, static_cast<int>(i)) + 1 == labeled[i].label.value_or(-1)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labeled.size());
}

}  // namespace detail

// Stage 1: contrastive pretraining of encoder, projection head and
// predictor on the unlabeled pool. Per batch: forward both branches on both
// views, backprop the symmetric InfoNCE loss into the query branch, momentum
// update, then enqueue this batch's keys (a batch never sees its own keys
// as negatives).
inline std::vector<EpochStats> pretrain_stage1(NetworkParams& params, const std::vector<IQRecord>& unlabeled,
                                               KeyQueue& queue, const TrainConfig& cfg) {
  detail::check_angles(cfg);
  if (unlabeled.empty()) throw config_error("pretrain_stage1: unlabeled pool is empty");
  if (cfg.batch < 1) throw config_error("pretrain_stage1: batch must be >= 1");
  if (static_cast<std::size_t>(cfg.batch) > unlabeled.size())
    throw config_error("pretrain_stage1: batch " + std::to_string(cfg.batch) + " exceeds pool of " + std::to_string(unlabeled.size()));

  AdamConfig adam{cfg.lr};
  std::vector<EpochStats> history;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(cfg.seed, "stage1_order", static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0;
    std::size_t seen = 0;
    for (const std::vector<int>& idx : detail::epoch_batches(unlabeled.size(), cfg.batch, order_rng)) {
      Tensor batch_tilde = pack_records(unlabeled, idx, cfg.aug_angles[0]);
      Tensor batch_bar = pack_records(unlabeled, idx, cfg.aug_angles[1]);

      Graph g;
      auto [k_tilde, k_bar] = detail::key_forward(g, params, batch_tilde, batch_bar);

      ParamBinder bind(g, true);
      // Running stats track the tilde-view stream only; the bar view
      // normalizes with batch stats without touching them.
      auto query_view = [&](const Tensor& batch, const BnPolicy& bn) {
        Graph::ValueId z = encode(g, bind, params.query_encoder, g.leaf(batch, false), bn, params.arch);
        Graph::ValueId p = mlp_forward(g, bind, params.query_projection, z);
        return mlp_forward(g, bind, params.predictor, p);
      };
      Graph::ValueId q_tilde = query_view(batch_tilde, bn_policy(Mode::train));
      Graph::ValueId q_bar = query_view(batch_bar, BnPolicy{true, false});
      Graph::ValueId loss = contrastive_loss(g, q_tilde, q_bar, k_tilde, k_bar, queue, cfg.tau);
      g.backward(loss);

      adam_step(bind.adam_params(detail::prefixed("query_encoder", encoder_tensors(params.query_encoder, true))),
                params.query_encoder_state, adam);
      adam_step(bind.adam_params(detail::prefixed("query_projection", mlp_tensors(params.query_projection))),
                params.query_projection_state, adam);
      adam_step(bind.adam_params(detail::prefixed("predictor", mlp_tensors(params.predictor))), params.predictor_state,
                adam);
      momentum_update(params, cfg.momentum);
      queue.enqueue(k_tilde, k_bar);

      loss_sum += g.value(loss).item() * static_cast<double>(idx.size());
      seen += idx.size();
    }
    EpochStats s;
    s.epoch = epoch;
    s.l_cl = loss_sum / static_cast<double>(seen);
    s.l_total = s.l_cl;
    history.push_back(s);
  }
  return history;
}

// Stage 2: supervised training on the labeled pool with the weighted joint
// loss. The classifier reads the tilde-view projection; the CL term keeps
// flowing through the same queue (kept warm across stages) unless
// compute_cl is off. Batch size is clamped to the pool.
inline std::vector<EpochStats> train_stage2(NetworkParams& params, const std::vector<IQRecord>& labeled,
                                            KeyQueue& queue, const TrainConfig& cfg) {
  detail::check_angles(cfg);
  if (labeled.empty()) throw config_error("train_stage2: labeled pool is empty");
  if (cfg.batch < 1) throw config_error("train_stage2: batch must be >= 1");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw config_error("train_stage2: alpha must be in [0,1]");

  std::set<int> classes_present;
  for (const IQRecord& r : labeled) {
    if (!r.label) throw config_error("train_stage2: unlabeled record in labeled pool");
    classes_present.insert(*r.label);
  }
  for (int m = 1; m <= params.arch.num_classes; ++m)
    if (!classes_present.count(m)) log_warn("train_stage2: class " + std::to_string(m) + " absent from labeled pool");

  int batch = std::min<int>(cfg.batch, static_cast<int>(labeled.size()));
  AdamConfig adam{cfg.lr};
  Rng dropout_rng(derive_seed(cfg.seed, "stage2_dropout"));
  std::vector<EpochStats> history;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(cfg.seed, "stage2_order", static_cast<std::uint64_t>(epoch)));
    double cl_sum = 0, ce_sum = 0, total_sum = 0;
    std::size_t seen = 0;
    for (const std::vector<int>& idx : detail::epoch_batches(labeled.size(), batch, order_rng)) {
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (int i : idx) labels.push_back(*labeled[static_cast<std::size_t>(i)].label);
      Tensor batch_tilde = pack_records(labeled, idx, cfg.aug_angles[0]);

      Graph g;
      Tensor k_tilde, k_bar, batch_bar;
      if (cfg.compute_cl) {
        batch_bar = pack_records(labeled, idx, cfg.aug_angles[1]);
        std::tie(k_tilde, k_bar) = detail::key_forward(g, params, batch_tilde, batch_bar);
      }

      ParamBinder bind(g, true);
      Graph::ValueId z_tilde = encode(g, bind, params.query_encoder, g.leaf(batch_tilde, false), bn_policy(Mode::train), params.arch);
      Graph::ValueId p_tilde = mlp_forward(g, bind, params.query_projection, z_tilde);
      Graph::ValueId probs = classify(g, bind, params.classifier, p_tilde, Mode::train, dropout_rng, params.arch);
      Graph::ValueId ce = cross_entropy_loss(g, probs, labels);

      Graph::ValueId total = ce;
      double cl_value = std::numeric_limits<double>::quiet_NaN();
      if (cfg.compute_cl) {
        Graph::ValueId q_tilde = mlp_forward(g, bind, params.predictor, p_tilde);
        // Bar view leaves the running stats alone so the unweighted CL term
        // at alpha=0 is traceless next to a pure-CE run.
        Graph::ValueId z_bar = encode(g, bind, params.query_encoder, g.leaf(batch_bar, false), BnPolicy{true, false}, params.arch);
        Graph::ValueId p_bar = mlp_forward(g, bind, params.query_projection, z_bar);
        Graph::ValueId q_bar = mlp_forward(g, bind, params.predictor, p_bar);
        Graph::ValueId cl = contrastive_loss(g, q_tilde, q_bar, k_tilde, k_bar, queue, cfg.tau);
        cl_value = g.value(cl).item();
        total = joint_loss(g, ce, cl, cfg.alpha);
      }
      g.backward(total);

      adam_step(bind.adam_params(detail::prefixed("query_encoder", encoder_tensors(params.query_encoder, true))),
                params.query_encoder_state, adam);
      adam_step(bind.adam_params(detail::prefixed("query_projection", mlp_tensors(params.query_projection))),
                params.query_projection_state, adam);
      adam_step(bind.adam_params(detail::prefixed("predictor", mlp_tensors(params.predictor))), params.predictor_state,
                adam);
      adam_step(bind.adam_params(detail::prefixed("classifier", classifier_tensors(params.classifier))),
                params.classifier_state, adam);
      if (cfg.compute_cl) {
        momentum_update(params, cfg.momentum);
        queue.enqueue(k_tilde, k_bar);
      }

      double n = static_cast<double>(idx.size());
      if (cfg.compute_cl) cl_sum += cl_value * n;
      ce_sum += g.value(ce).item() * n;
      total_sum += g.value(total).item() * n;
      seen += idx.size();
    }
    EpochStats s;
    s.epoch = epoch;
    s.l_ce = ce_sum / static_cast<double>(seen);
    if (cfg.compute_cl) s.l_cl = cl_sum / static_cast<double>(seen);
    s.l_total = total_sum / static_cast<double>(seen);
    s.train_acc = detail::train_accuracy(params, labeled, cfg.aug_angles[0]);
    history.push_back(s);
    if (s.train_acc >= cfg.stop_at_train_acc) break;
  }
  return history;
}

}  // namespace sei
