#pragma once

#include <vector>

#include "sei/graph.hpp"
#include "sei/key_queue.hpp"

namespace sei {

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw config_error("cosine_similarity: dimension " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) throw numeric_error("cosine_similarity: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Symmetric two-term InfoNCE over the batch. Tilde queries score against
// bar keys (positive plus the bar lane of the queue) and vice versa; each
// denominator includes its positive term, so the loss is nonnegative and a
// cold queue degenerates to exactly zero. Keys enter as constants; only the
// query branch receives gradients.
inline Graph::ValueId contrastive_loss(Graph& g, Graph::ValueId q_tilde, Graph::ValueId q_bar,
                                       const Tensor& k_pos_tilde, const Tensor& k_pos_bar, const KeyQueue& queue,
                                       double tau) {
  if (tau <= 0) throw config_error("contrastive_loss: temperature must be positive, got " + std::to_string(tau));
  const Tensor& qt = g.value(q_tilde);
  if (qt.rank() != 2 || !qt.same_shape(g.value(q_bar)) || !qt.same_shape(k_pos_tilde) || !qt.same_shape(k_pos_bar))
    throw config_error("contrastive_loss: query/key batch shapes disagree");
  if (queue.size() == 0) log_warn("contrastive_loss: empty key queue, using positives-only denominator");

  int n = qt.dim(0);
  std::vector<int> target(static_cast<std::size_t>(n), 0);  // positive sits in column 0

  auto view_term = [&](Graph::ValueId q, const Tensor& k_pos, const Tensor& negatives) {
    Graph::ValueId qn = ops::l2_normalize_rows(g, q);
    Graph::ValueId pos = ops::rowwise_dot(g, qn, g.leaf(k_pos, false));
    Graph::ValueId logits = pos;
    if (negatives.size() > 0) logits = ops::concat_cols(g, pos, ops::matmul_nt(g, qn, g.leaf(negatives, false)));
    logits = ops::scale(g, logits, 1.0 / tau);
    return ops::cross_entropy(g, ops::softmax_rows(g, logits), target);
  };

  Graph::ValueId tilde_term = view_term(q_tilde, k_pos_bar, queue.bar_tensor());
  Graph::ValueId bar_term = view_term(q_bar, k_pos_tilde, queue.tilde_tensor());
  return ops::add(g, tilde_term, bar_term);
}

// Plain-value cross entropy over probability rows; labels are 1-based.
inline double cross_entropy_loss(const Tensor& probs, const std::vector<int>& labels) {
  Graph g;
  Graph::ValueId p = g.leaf(probs, false);
  std::vector<int> classes;
  classes.reserve(labels.size());
  for (int l : labels) classes.push_back(l - 1);
  return g.value(ops::cross_entropy(g, p, classes)).item();
}

inline Graph::ValueId cross_entropy_loss(Graph& g, Graph::ValueId probs, const std::vector<int>& labels) {
  std::vector<int> classes;
  classes.reserve(labels.size());
  for (int l : labels) classes.push_back(l - 1);
  return ops::cross_entropy(g, probs, classes);
}

inline double joint_loss(double ce, double cl, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw config_error("joint_loss: alpha must be in [0,1], got " + std::to_string(alpha));
  return (1.0 - alpha) * ce + alpha * cl;
}

inline Graph::ValueId joint_loss(Graph& g, Graph::ValueId ce, Graph::ValueId cl, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw config_error("joint_loss: alpha must be in [0,1], got " + std::to_string(alpha));
  return ops::add(g, ops::scale(g, ce, 1.0 - alpha), ops::scale(g, cl, alpha));
}

}  // namespace sei
