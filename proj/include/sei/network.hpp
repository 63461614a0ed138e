#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sei/graph.hpp"
#include "sei/optimizer.hpp"
#include "sei/signal.hpp"

namespace sei {

// Layer plan: three conv blocks (conv -> BN -> ReLU -> maxpool) with kernel
// widths [7,5,5] and channels [32,64,128], global average pool to the
// latent; projection head and predictor are two dense layers 256 -> 128;
// classifier is three dense layers with hidden widths 128 -> 64 and an
// M-way softmax output, dropout after the first two.
struct Arch {
  int num_classes = 4;
  int input_length = 256;
  std::vector<int> conv_channels{32, 64, 128};
  std::vector<int> conv_kernels{7, 5, 5};
  int pool_window = 2;
  int pool_stride = 2;
  int proj_hidden = 256;
  int embed_dim = 128;
  int cls_hidden1 = 128;
  int cls_hidden2 = 64;
  double dropout_keep = 0.5;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  int latent_dim() const { return conv_channels.back(); }

  // Length after the conv/pool stack, or -1 if the input is too short.
  int encoder_output_length(int length) const {
    int t = length;
    for (std::size_t b = 0; b < conv_kernels.size(); ++b) {
      if (t < conv_kernels[b]) return -1;
      t = t - conv_kernels[b] + 1;
      if (t < pool_window) return -1;
      t = (t - pool_window) / pool_stride + 1;
    }
    return t;
  }

  int min_input_length() const {
    for (int l = 1; l <= 1 << 20; ++l)
      if (encoder_output_length(l) >= 1) return l;
    return -1;
  }

  bool operator==(const Arch&) const = default;
};

struct ConvBlockParams {
  Tensor kernels, bias, bn_gamma, bn_beta, bn_mean, bn_var;
};

struct EncoderParams {
  std::vector<ConvBlockParams> blocks;
};

struct MlpParams {
  Tensor w1, b1, w2, b2;
};

struct ClassifierParams {
  Tensor w1, b1, w2, b2, w3, b3;
};

// Query branch trains by gradient; key branch only ever moves through
// momentum_update. Key collections carry no optimizer state.
struct NetworkParams {
  Arch arch;
  EncoderParams query_encoder, key_encoder;
  MlpParams query_projection, key_projection, predictor;
  ClassifierParams classifier;
  AdamState query_encoder_state, query_projection_state, predictor_state, classifier_state;
};

inline std::vector<std::pair<std::string, Tensor*>> encoder_tensors(EncoderParams& e, bool trainable_only = false) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t b = 0; b < e.blocks.size(); ++b) {
    std::string p = "block" + std::to_string(b + 1) + ".";
    ConvBlockParams& blk = e.blocks[b];
    out.emplace_back(p + "kernels", &blk.kernels);
    out.emplace_back(p + "bias", &blk.bias);
    out.emplace_back(p + "bn_gamma", &blk.bn_gamma);
    out.emplace_back(p + "bn_beta", &blk.bn_beta);
    if (!trainable_only) {
      out.emplace_back(p + "bn_mean", &blk.bn_mean);
      out.emplace_back(p + "bn_var", &blk.bn_var);
    }
  }
  return out;
}

inline std::vector<std::pair<std::string, Tensor*>> mlp_tensors(MlpParams& m) {
  return {{"w1", &m.w1}, {"b1", &m.b1}, {"w2", &m.w2}, {"b2", &m.b2}};
}

inline std::vector<std::pair<std::string, Tensor*>> classifier_tensors(ClassifierParams& c) {
  return {{"w1", &c.w1}, {"b1", &c.b1}, {"w2", &c.w2}, {"b2", &c.b2}, {"w3", &c.w3}, {"b3", &c.b3}};
}

// Every tensor of every collection in checkpoint order.
inline std::vector<std::pair<std::string, Tensor*>> all_tensors(NetworkParams& p) {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto append = [&](const std::string& prefix, std::vector<std::pair<std::string, Tensor*>> v) {
    for (auto& [name, t] : v) out.emplace_back(prefix + "." + name, t);
  };
  append("query_encoder", encoder_tensors(p.query_encoder));
  append("key_encoder", encoder_tensors(p.key_encoder));
  append("query_projection", mlp_tensors(p.query_projection));
  append("key_projection", mlp_tensors(p.key_projection));
  append("predictor", mlp_tensors(p.predictor));
  append("classifier", classifier_tensors(p.classifier));
  return out;
}

namespace detail {

inline Tensor he_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

inline MlpParams init_mlp(int in, int hidden, int out, Rng& rng) {
  MlpParams m;
  m.w1 = he_uniform({hidden, in}, in, rng);
  m.b1 = Tensor({hidden});
  m.w2 = he_uniform({out, hidden}, hidden, rng);
  m.b2 = Tensor({out});
  return m;
}

}  // namespace detail

inline NetworkParams init_params(const Arch& arch, std::uint64_t seed) {
  if (arch.encoder_output_length(arch.input_length) < 1)
    throw config_error("input length " + std::to_string(arch.input_length) + " too short for the encoder; minimum is " +
                       std::to_string(arch.min_input_length()));
  Rng rng(derive_seed(seed, "init"));
  NetworkParams p;
  p.arch = arch;
  int ci = 2;
  for (std::size_t b = 0; b < arch.conv_channels.size(); ++b) {
    int co = arch.conv_channels[b];
    int w = arch.conv_kernels[b];
    ConvBlockParams blk;
    blk.kernels = detail::he_uniform({co, ci, w}, ci * w, rng);
    blk.bias = Tensor({co});
    blk.bn_gamma = Tensor({co}, 1.0);
    blk.bn_beta = Tensor({co});
    blk.bn_mean = Tensor({co});
    blk.bn_var = Tensor({co}, 1.0);
    p.query_encoder.blocks.push_back(std::move(blk));
    ci = co;
  }
  p.query_projection = detail::init_mlp(arch.latent_dim(), arch.proj_hidden, arch.embed_dim, rng);
  p.predictor = detail::init_mlp(arch.embed_dim, arch.proj_hidden, arch.embed_dim, rng);
  ClassifierParams& c = p.classifier;
  c.w1 = detail::he_uniform({arch.cls_hidden1, arch.embed_dim}, arch.embed_dim, rng);
  c.b1 = Tensor({arch.cls_hidden1});
  c.w2 = detail::he_uniform({arch.cls_hidden2, arch.cls_hidden1}, arch.cls_hidden1, rng);
  c.b2 = Tensor({arch.cls_hidden2});
  c.w3 = detail::he_uniform({arch.num_classes, arch.cls_hidden2}, arch.cls_hidden2, rng);
  c.b3 = Tensor({arch.num_classes});
  p.key_encoder = p.query_encoder;
  p.key_projection = p.query_projection;
  return p;
}

enum class Mode { train, eval, mc_dropout };

// How batch normalization treats statistics for one forward pass. The key
// branch normalizes with batch statistics like the query branch but leaves
// its running stats untouched.
struct BnPolicy {
  bool batch_stats = false;
  bool update_running = false;
};

inline BnPolicy bn_policy(Mode mode) {
  return mode == Mode::train ? BnPolicy{true, true} : BnPolicy{false, false};
}

inline constexpr BnPolicy kKeyBranchBn{true, false};

// Binds parameter tensors into a graph as leaves and remembers the mapping
// so gradients can be read back after backward().
class ParamBinder {
 public:
  ParamBinder(Graph& g, bool with_grad) : graph_(&g), with_grad_(with_grad) {}

  Graph::ValueId bind(Tensor& t) {
    Graph::ValueId id = graph_->leaf(t, with_grad_);
    bound_.emplace_back(&t, id);
    return id;
  }

  // Gradient for a bound tensor, or nullptr when none reached it.
  const Tensor* grad_of(const Tensor& t) const {
    for (auto& [ptr, id] : bound_) {
      if (ptr == &t) {
        const Tensor& g = graph_->grad(id);
        return g.data.empty() ? nullptr : &g;
      }
    }
    return nullptr;
  }

  std::vector<AdamParam> adam_params(std::vector<std::pair<std::string, Tensor*>> tensors) const {
    std::vector<AdamParam> out;
    out.reserve(tensors.size());
    for (auto& [name, t] : tensors) out.push_back(AdamParam{name, t, grad_of(*t)});
    return out;
  }

 private:
  Graph* graph_;
  bool with_grad_;
  std::vector<std::pair<Tensor*, Graph::ValueId>> bound_;
};

// Records to a {n, 2, length} tensor (I row, Q row), rotating each sample by
// aug_angle on the way in.
inline Tensor pack_records(const std::vector<IQRecord>& records, const std::vector<int>& indices, double aug_angle) {
  if (indices.empty()) throw config_error("pack_records: empty batch");
  int length = static_cast<int>(records[static_cast<std::size_t>(indices[0])].samples.size());
  Tensor batch({static_cast<int>(indices.size()), 2, length});
  std::complex<double> rot = std::polar(1.0, aug_angle);
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const IQRecord& rec = records[static_cast<std::size_t>(indices[n])];
    if (static_cast<int>(rec.samples.size()) != length)
      throw config_error("pack_records: record length " + std::to_string(rec.samples.size()) + " differs from " + std::to_string(length));
    double* ip = &batch.data[(n * 2 + 0) * static_cast<std::size_t>(length)];
    double* qp = &batch.data[(n * 2 + 1) * static_cast<std::size_t>(length)];
    for (int l = 0; l < length; ++l) {
      std::complex<double> s = rec.samples[static_cast<std::size_t>(l)] * rot;
      ip[l] = s.real();
      qp[l] = s.imag();
    }
  }
  return batch;
}

inline std::vector<int> iota_indices(std::size_t n) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

// Encoder forward; returns the {n, latent} id.
inline Graph::ValueId encode(Graph& g, ParamBinder& bind, EncoderParams& enc, Graph::ValueId input,
                             const BnPolicy& bn, const Arch& arch) {
  const Tensor& in = g.value(input);
  if (in.rank() != 3 || in.dim(1) != 2)
    throw config_error("encode: expected {n,2,length} input, got " + shape_str(in.shape));
  if (arch.encoder_output_length(in.dim(2)) < 1)
    throw config_error("encode: input length " + std::to_string(in.dim(2)) + " below encoder minimum " +
                       std::to_string(arch.min_input_length()));
  Graph::ValueId x = input;
  for (ConvBlockParams& blk : enc.blocks) {
    x = ops::conv1d(g, x, bind.bind(blk.kernels), bind.bind(blk.bias), 1);
    ops::BatchNormContext ctx;
    ctx.running_mean = &blk.bn_mean;
    ctx.running_var = &blk.bn_var;
    ctx.use_batch_stats = bn.batch_stats;
    ctx.update_running = bn.update_running;
    ctx.momentum = arch.bn_momentum;
    ctx.eps = arch.bn_eps;
    x = ops::batchnorm1d(g, x, bind.bind(blk.bn_gamma), bind.bind(blk.bn_beta), ctx);
    x = ops::relu(g, x);
    x = ops::maxpool1d(g, x, arch.pool_window, arch.pool_stride);
  }
  return ops::global_avg_pool(g, x);
}

// dense -> relu -> dense; shared by projection head and predictor.
inline Graph::ValueId mlp_forward(Graph& g, ParamBinder& bind, MlpParams& mlp, Graph::ValueId x) {
  Graph::ValueId h = ops::relu(g, ops::dense(g, x, bind.bind(mlp.w1), bind.bind(mlp.b1)));
  return ops::dense(g, h, bind.bind(mlp.w2), bind.bind(mlp.b2));
}

// Class probabilities {n, M}. Dropout stays live in mc_dropout mode.
inline Graph::ValueId classify(Graph& g, ParamBinder& bind, ClassifierParams& cls, Graph::ValueId p, Mode mode,
                               Rng& dropout_rng, const Arch& arch) {
  bool active = mode != Mode::eval;
  Graph::ValueId h = ops::relu(g, ops::dense(g, p, bind.bind(cls.w1), bind.bind(cls.b1)));
  h = ops::dropout(g, h, arch.dropout_keep, dropout_rng, active);
  h = ops::relu(g, ops::dense(g, h, bind.bind(cls.w2), bind.bind(cls.b2)));
  h = ops::dropout(g, h, arch.dropout_keep, dropout_rng, active);
  h = ops::dense(g, h, bind.bind(cls.w3), bind.bind(cls.b3));
  return ops::softmax_rows(g, h);
}

// key <- m*key + (1-m)*query for encoder and projection head, running stats
// included.
inline void momentum_update(NetworkParams& p, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw config_error("momentum_update: coefficient must be in [0,1], got " + std::to_string(m));
  auto blend = [m](std::vector<std::pair<std::string, Tensor*>> key, std::vector<std::pair<std::string, Tensor*>> query) {
    for (std::size_t i = 0; i < key.size(); ++i) {
      Tensor& k = *key[i].second;
      const Tensor& q = *query[i].second;
      for (std::size_t j = 0; j < k.data.size(); ++j) k.data[j] = m * k.data[j] + (1 - m) * q.data[j];
    }
  };
  blend(encoder_tensors(p.key_encoder), encoder_tensors(p.query_encoder));
  blend(mlp_tensors(p.key_projection), mlp_tensors(p.query_projection));
}

// ---- Whole-branch evaluation helpers -------------------------------------

// Query-branch projection outputs p for a record set; eval mode,
// deterministic. Rows are L2-normalized when `normalize` is set.
inline Tensor project_records_eval(NetworkParams& params, const std::vector<IQRecord>& records,
                                   const std::vector<int>& indices, double aug_angle, bool normalize) {
  Tensor out({static_cast<int>(indices.size()), params.arch.embed_dim});
  const int chunk = 64;
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    std::vector<int> part(indices.begin() + static_cast<std::ptrdiff_t>(start),
                          indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), start + chunk)));
    Graph g;
    ParamBinder bind(g, false);
    Graph::ValueId input = g.leaf(pack_records(records, part, aug_angle), false);
    Graph::ValueId z = encode(g, bind, params.query_encoder, input, bn_policy(Mode::eval), params.arch);
    Graph::ValueId p = mlp_forward(g, bind, params.query_projection, z);
    if (normalize) p = ops::l2_normalize_rows(g, p);
    const Tensor& vals = g.value(p);
    std::copy(vals.data.begin(), vals.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(start * static_cast<std::size_t>(params.arch.embed_dim)));
  }
  return out;
}

// Classifier on precomputed projection rows; one stochastic or
// deterministic pass depending on mode.
inline Tensor classify_projected(NetworkParams& params, const Tensor& p, Mode mode, Rng& rng) {
  Graph g;
  ParamBinder bind(g, false);
  Graph::ValueId pid = g.leaf(p, false);
  return g.value(classify(g, bind, params.classifier, pid, mode, rng, params.arch));
}

// End-to-end eval probabilities for records (tilde view by convention).
inline Tensor classify_records_eval(NetworkParams& params, const std::vector<IQRecord>& records,
                                    const std::vector<int>& indices, double aug_angle) {
  Tensor p = project_records_eval(params, records, indices, aug_angle, false);
  Rng dummy(0);
  return classify_projected(params, p, Mode::eval, dummy);
}

inline int argmax_row(const Tensor& probs, int row) {
  int m = probs.dim(1);
  const double* p = &probs.data[static_cast<std::size_t>(row) * m];
  int best = 0;
  for (int j = 1; j < m; ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

}  // namespace sei
