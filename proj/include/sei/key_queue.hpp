#pragma once

#include <deque>
#include <vector>

#include "sei/common.hpp"
#include "sei/tensor.hpp"

namespace sei {

// FIFO dictionary of past key embeddings, one lane per augmentation view.
// Entries are unit vectors; eviction is strictly oldest-first once the
// depth V is reached.
class KeyQueue {
 public:
  explicit KeyQueue(int depth) : depth_(depth) {
    if (depth < 1) throw config_error("KeyQueue: depth must be >= 1, got " + std::to_string(depth));
  }

  int depth() const { return depth_; }
  int size() const { return static_cast<int>(tilde_.size()); }

  // Rows of {n, d} tensors; both views enqueue together so the lanes stay
  // aligned. Rows are re-normalized on entry to hold the unit-norm
  // invariant regardless of producer rounding.
  void enqueue(const Tensor& tilde_keys, const Tensor& bar_keys) {
    if (tilde_keys.rank() != 2 || !tilde_keys.same_shape(bar_keys))
      throw config_error("KeyQueue::enqueue: shape " + shape_str(tilde_keys.shape) + " vs " + shape_str(bar_keys.shape));
    int n = tilde_keys.dim(0), d = tilde_keys.dim(1);
    for (int i = 0; i < n; ++i) {
      tilde_.push_back(normalized_row(tilde_keys, i, d));
      bar_.push_back(normalized_row(bar_keys, i, d));
      while (static_cast<int>(tilde_.size()) > depth_) {
        tilde_.pop_front();
        bar_.pop_front();
      }
    }
  }

  // Snapshot of one lane as a {size, d} tensor, oldest first.
  Tensor tilde_tensor() const { return lane_tensor(tilde_); }
  Tensor bar_tensor() const { return lane_tensor(bar_); }

  const std::deque<std::vector<double>>& tilde_lane() const { return tilde_; }
  const std::deque<std::vector<double>>& bar_lane() const { return bar_; }

 private:
  static std::vector<double> normalized_row(const Tensor& t, int row, int d) {
    std::vector<double> v(t.data.begin() + static_cast<std::ptrdiff_t>(row) * d,
                          t.data.begin() + static_cast<std::ptrdiff_t>(row + 1) * d);
    double nrm = l2_norm(v);
    if (nrm < 1e-30) throw numeric_error("KeyQueue::enqueue: zero key vector");
    for (double& x : v) x /= nrm;
    return v;
  }

  static Tensor lane_tensor(const std::deque<std::vector<double>>& lane) {
    if (lane.empty()) return Tensor{};
    Tensor out({static_cast<int>(lane.size()), static_cast<int>(lane.front().size())});
    std::size_t k = 0;
    for (const auto& row : lane)
      for (double v : row) out.data[k++] = v;
    return out;
  }

  int depth_;
  std::deque<std::vector<double>> tilde_, bar_;
};

}  // namespace sei
