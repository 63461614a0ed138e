#include <doctest.h>

#include <filesystem>

#include "sei/checkpoint.hpp"
#include "sei/network.hpp"

using namespace sei;
namespace fs = std::filesystem;

namespace {

Arch small_arch(int classes = 3, int length = 64) {
  Arch a;
  a.num_classes = classes;
  a.input_length = length;
  return a;
}

std::vector<IQRecord> some_records(int n, int length, std::uint64_t seed) {
  SimConfig cfg;
  cfg.num_emitters = 2;
  cfg.per_emitter = (n + 1) / 2;
  cfg.length = length;
  cfg.channel.snr_db = 15.0;
  cfg.seed = seed;
  Dataset ds = generate_dataset(cfg);
  ds.pools.unlabeled.resize(static_cast<std::size_t>(n));
  return ds.pools.unlabeled;
}

double checksum(std::vector<std::pair<std::string, Tensor*>> tensors) {
  double s = 0;
  for (auto& [name, t] : tensors)
    for (double v : t->data) s += v * 0.3141 + v * v * 0.01;
  return s;
}

}  // namespace

TEST_CASE("encoder minimum input length is reported") {
  Arch a = small_arch();
  CHECK(a.min_input_length() == 38);
  CHECK(a.encoder_output_length(38) == 1);
  CHECK(a.encoder_output_length(37) == -1);

  Arch bad = small_arch(3, 37);
  CHECK_THROWS_AS(init_params(bad, 1), config_error);

  NetworkParams params = init_params(small_arch(), 1);
  Graph g;
  ParamBinder bind(g, false);
  auto input = g.leaf(Tensor({1, 2, 20}), false);
  try {
    encode(g, bind, params.query_encoder, input, bn_policy(Mode::eval), params.arch);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("38") != std::string::npos);
  }
}

TEST_CASE("identical records produce identical latents and eval is repeatable") {
  NetworkParams params = init_params(small_arch(), 7);
  auto records = some_records(1, 64, 3);
  std::vector<IQRecord> batch3{records[0], records[0], records[0]};
  auto run = [&] {
    Graph g;
    ParamBinder bind(g, false);
    auto in = g.leaf(pack_records(batch3, {0, 1, 2}, 0.5 * kPi), false);
    auto z = encode(g, bind, params.query_encoder, in, bn_policy(Mode::eval), params.arch);
    return g.value(z);
  };
  Tensor z = run();
  int d = params.arch.latent_dim();
  for (int j = 0; j < d; ++j) {
    CHECK(z.data[j] == z.data[static_cast<std::size_t>(d) + j]);
    CHECK(z.data[j] == z.data[static_cast<std::size_t>(2 * d) + j]);
  }
  CHECK(run().data == z.data);
}

TEST_CASE("encode is permutation-equivariant over the batch in eval mode") {
  NetworkParams params = init_params(small_arch(), 11);
  auto records = some_records(4, 64, 5);
  auto embed = [&](const std::vector<int>& order) {
    Graph g;
    ParamBinder bind(g, false);
    auto in = g.leaf(pack_records(records, order, 0.5 * kPi), false);
    return g.value(encode(g, bind, params.query_encoder, in, bn_policy(Mode::eval), params.arch));
  };
  Tensor direct = embed({0, 1, 2, 3});
  Tensor permuted = embed({2, 0, 3, 1});
  int d = params.arch.latent_dim();
  std::vector<int> perm{2, 0, 3, 1};
  for (int row = 0; row < 4; ++row)
    for (int j = 0; j < d; ++j)
      CHECK(permuted.data[static_cast<std::size_t>(row) * d + j] == direct.data[static_cast<std::size_t>(perm[static_cast<std::size_t>(row)]) * d + j]);
}

TEST_CASE("projection and predictor dimensions, q normalization") {
  NetworkParams params = init_params(small_arch(), 13);
  auto records = some_records(2, 64, 9);
  Graph g;
  ParamBinder bind(g, false);
  auto in = g.leaf(pack_records(records, {0, 1}, 0.5 * kPi), false);
  auto z = encode(g, bind, params.query_encoder, in, bn_policy(Mode::eval), params.arch);
  auto p = mlp_forward(g, bind, params.query_projection, z);
  auto q = mlp_forward(g, bind, params.predictor, p);
  CHECK(g.value(p).shape == std::vector<int>{2, 128});
  CHECK(g.value(q).shape == std::vector<int>{2, 128});
  auto qn = ops::l2_normalize_rows(g, q);
  for (int row = 0; row < 2; ++row) {
    double s = 0;
    for (int j = 0; j < 128; ++j) {
      double v = g.value(qn).data[static_cast<std::size_t>(row) * 128 + j];
      s += v * v;
    }
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-9);
  }
}

TEST_CASE("identity-like predictor keeps the direction of p") {
  NetworkParams params = init_params(small_arch(), 17);
  // w1 stacks [I; -I], w2 recombines [I, -I]: relu(p) - relu(-p) = p
  MlpParams& pred = params.predictor;
  pred.w1 = Tensor({256, 128});
  pred.w2 = Tensor({128, 256});
  pred.b1 = Tensor({256});
  pred.b2 = Tensor({128});
  for (int i = 0; i < 128; ++i) {
    pred.w1.data[static_cast<std::size_t>(i) * 128 + i] = 1.0;
    pred.w1.data[static_cast<std::size_t>(i + 128) * 128 + i] = -1.0;
    pred.w2.data[static_cast<std::size_t>(i) * 256 + i] = 1.0;
    pred.w2.data[static_cast<std::size_t>(i) * 256 + 128 + i] = -1.0;
  }
  auto records = some_records(2, 64, 21);
  Graph g;
  ParamBinder bind(g, false);
  auto in = g.leaf(pack_records(records, {0, 1}, 0.5 * kPi), false);
  auto z = encode(g, bind, params.query_encoder, in, bn_policy(Mode::eval), params.arch);
  auto p = mlp_forward(g, bind, params.query_projection, z);
  auto q = mlp_forward(g, bind, params.predictor, p);
  for (std::size_t i = 0; i < g.value(p).data.size(); ++i)
    CHECK(g.value(q).data[i] == doctest::Approx(g.value(p).data[i]).epsilon(1e-12));
}

TEST_CASE("classifier probabilities behave per mode") {
  NetworkParams params = init_params(small_arch(4, 64), 23);
  auto records = some_records(3, 64, 33);
  Tensor p = project_records_eval(params, records, {0, 1, 2}, 0.5 * kPi, false);

  Rng r1(1);
  Tensor probs = classify_projected(params, p, Mode::eval, r1);
  for (int row = 0; row < 3; ++row) {
    double s = 0;
    for (int j = 0; j < 4; ++j) s += probs.data[static_cast<std::size_t>(row) * 4 + j];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  Rng r2(2);
  CHECK(classify_projected(params, p, Mode::eval, r2).data == probs.data);  // eval ignores rng

  Rng r3(3), r4(4);
  Tensor mc1 = classify_projected(params, p, Mode::mc_dropout, r3);
  Tensor mc2 = classify_projected(params, p, Mode::mc_dropout, r4);
  CHECK(mc1.data != mc2.data);
}

TEST_CASE("momentum update endpoints and geometric decay") {
  NetworkParams params = init_params(small_arch(), 29);
  // perturb the query branch so key != query
  Rng rng(5);
  for (auto& [name, t] : encoder_tensors(params.query_encoder))
    for (double& v : t->data) v += rng.uniform(-0.1, 0.1);
  for (auto& [name, t] : mlp_tensors(params.query_projection))
    for (double& v : t->data) v += rng.uniform(-0.1, 0.1);

  NetworkParams snapshot = params;
  momentum_update(params, 1.0);
  CHECK(checksum(encoder_tensors(params.key_encoder)) == checksum(encoder_tensors(snapshot.key_encoder)));

  momentum_update(params, 0.0);
  for (std::size_t i = 0; i < params.key_encoder.blocks.size(); ++i)
    CHECK(params.key_encoder.blocks[i].kernels.data == params.query_encoder.blocks[i].kernels.data);
  CHECK(params.key_projection.w1.data == params.query_projection.w1.data);

  // reset and decay: ||key - query|| shrinks by 0.99 each step
  params = snapshot;
  auto diff_norm = [&] {
    double s = 0;
    auto key = encoder_tensors(params.key_encoder);
    auto query = encoder_tensors(params.query_encoder);
    for (std::size_t i = 0; i < key.size(); ++i)
      for (std::size_t j = 0; j < key[i].second->data.size(); ++j) {
        double d = key[i].second->data[j] - query[i].second->data[j];
        s += d * d;
      }
    return std::sqrt(s);
  };
  double d0 = diff_norm();
  REQUIRE(d0 > 0);
  int n = 100;
  for (int i = 0; i < n; ++i) momentum_update(params, 0.99);
  CHECK(std::abs(diff_norm() - std::pow(0.99, n) * d0) < 1e-9 * d0);

  CHECK_THROWS_AS(momentum_update(params, 1.5), config_error);
}

TEST_CASE("momentum update keeps keys on the segment toward the query") {
  NetworkParams params = init_params(small_arch(), 31);
  Rng rng(6);
  for (auto& [name, t] : encoder_tensors(params.query_encoder))
    for (double& v : t->data) v += rng.uniform(-0.2, 0.2);
  NetworkParams before = params;
  momentum_update(params, 0.7);
  auto old_key = encoder_tensors(before.key_encoder);
  auto new_key = encoder_tensors(params.key_encoder);
  auto query = encoder_tensors(params.query_encoder);
  for (std::size_t i = 0; i < new_key.size(); ++i)
    for (std::size_t j = 0; j < new_key[i].second->data.size(); ++j) {
      double lo = std::min(old_key[i].second->data[j], query[i].second->data[j]);
      double hi = std::max(old_key[i].second->data[j], query[i].second->data[j]);
      CHECK(new_key[i].second->data[j] >= lo - 1e-15);
      CHECK(new_key[i].second->data[j] <= hi + 1e-15);
    }
}

TEST_CASE("checkpoints round-trip and refuse mismatched architectures") {
  fs::path dir = fs::temp_directory_path() / "sei_ckpt_tests";
  fs::create_directories(dir);
  NetworkParams params = init_params(small_arch(4, 64), 37);
  Rng rng(9);
  for (auto& [name, t] : all_tensors(params))
    for (double& v : t->data) v += rng.uniform(-0.05, 0.05);

  fs::path path = dir / "model.ckpt";
  save_checkpoint(params, path, {37, "stage1"});

  CheckpointMeta meta;
  NetworkParams loaded = load_checkpoint(path, params.arch, &meta);
  CHECK(meta.seed == 37);
  CHECK(meta.stage == "stage1");
  auto a = all_tensors(params);
  auto b = all_tensors(loaded);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].second->data == b[i].second->data);

  Arch wrong_m = small_arch(5, 64);
  try {
    load_checkpoint(path, wrong_m);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("num_classes") != std::string::npos);
  }

  Arch wrong_kernels = small_arch(4, 64);
  wrong_kernels.conv_kernels = {7, 5, 3};
  try {
    load_checkpoint(path, wrong_kernels);
    FAIL("expected config_error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("conv_kernels") != std::string::npos);
  }

  fs::path truncated = dir / "cut.ckpt";
  std::string buf;
  {
    std::ifstream in(path, std::ios::binary);
    buf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  buf.resize(buf.size() / 2);
  std::ofstream(truncated, std::ios::binary) << buf;
  CHECK_THROWS_AS(load_checkpoint(truncated, params.arch), parse_error);
}
