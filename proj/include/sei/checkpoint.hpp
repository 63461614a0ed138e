#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "sei/network.hpp"

namespace sei {

// Checkpoint = one-line JSON header (architecture + provenance) followed by
// raw little-endian float64 for every tensor of every collection in
// all_tensors() order. Loading refuses any architecture mismatch.

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string stage;  // "stage1", "round0", ...
};

namespace detail {

inline nlohmann::json arch_json(const Arch& a) {
  return {{"num_classes", a.num_classes},
          {"input_length", a.input_length},
          {"conv_channels", a.conv_channels},
          {"conv_kernels", a.conv_kernels},
          {"pool_window", a.pool_window},
          {"pool_stride", a.pool_stride},
          {"proj_hidden", a.proj_hidden},
          {"embed_dim", a.embed_dim},
          {"cls_hidden1", a.cls_hidden1},
          {"cls_hidden2", a.cls_hidden2},
          {"dropout_keep", a.dropout_keep},
          {"bn_momentum", a.bn_momentum},
          {"bn_eps", a.bn_eps}};
}

inline Arch arch_from_json(const nlohmann::json& j) {
  Arch a;
  a.num_classes = j.at("num_classes").get<int>();
  a.input_length = j.at("input_length").get<int>();
  a.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  a.conv_kernels = j.at("conv_kernels").get<std::vector<int>>();
  a.pool_window = j.at("pool_window").get<int>();
  a.pool_stride = j.at("pool_stride").get<int>();
  a.proj_hidden = j.at("proj_hidden").get<int>();
  a.embed_dim = j.at("embed_dim").get<int>();
  a.cls_hidden1 = j.at("cls_hidden1").get<int>();
  a.cls_hidden2 = j.at("cls_hidden2").get<int>();
  a.dropout_keep = j.at("dropout_keep").get<double>();
  a.bn_momentum = j.at("bn_momentum").get<double>();
  a.bn_eps = j.at("bn_eps").get<double>();
  return a;
}

inline void put_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void save_checkpoint(NetworkParams& params, const std::filesystem::path& path, const CheckpointMeta& meta) {
  nlohmann::json header = detail::arch_json(params.arch);
  header["format"] = "sei-checkpoint-v1";
  header["seed"] = meta.seed;
  header["stage"] = meta.stage;
  std::string buf = header.dump();
  buf.push_back('\n');
  for (auto& [name, t] : all_tensors(params))
    for (double v : t->data) detail::put_f64(buf, v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw parse_error("save_checkpoint: cannot open " + path.string() + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw parse_error("save_checkpoint: short write to " + path.string());
}

// Loads into a freshly built parameter set for `expected`; throws
// config_error naming every mismatched architecture field.
inline NetworkParams load_checkpoint(const std::filesystem::path& path, const Arch& expected,
                                     CheckpointMeta* meta_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("load_checkpoint: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t nl = buf.find('\n');
  if (nl == std::string::npos) throw parse_error(path.string() + ": no checkpoint header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(path.string() + ": malformed checkpoint header: " + e.what());
  }
  if (header.value("format", "") != "sei-checkpoint-v1")
    throw parse_error(path.string() + ": unknown checkpoint format '" + header.value("format", "") + "'");
  Arch stored = detail::arch_from_json(header);

  std::vector<std::string> mismatches;
  auto check = [&](const std::string& field, auto lhs, auto rhs) {
    if (!(lhs == rhs)) mismatches.push_back(field);
  };
  check("num_classes", stored.num_classes, expected.num_classes);
  check("input_length", stored.input_length, expected.input_length);
  check("conv_channels", stored.conv_channels, expected.conv_channels);
  check("conv_kernels", stored.conv_kernels, expected.conv_kernels);
  check("pool_window", stored.pool_window, expected.pool_window);
  check("pool_stride", stored.pool_stride, expected.pool_stride);
  check("proj_hidden", stored.proj_hidden, expected.proj_hidden);
  check("embed_dim", stored.embed_dim, expected.embed_dim);
  check("cls_hidden1", stored.cls_hidden1, expected.cls_hidden1);
  check("cls_hidden2", stored.cls_hidden2, expected.cls_hidden2);
  if (!mismatches.empty())
    throw config_error(path.string() + ": checkpoint architecture does not match (fields: " + join(mismatches, ", ") + ")");

  NetworkParams params = init_params(expected, 0);
  params.arch = stored;  // carries dropout/bn hyperparameters as saved
  std::size_t offset = nl + 1;
  for (auto& [name, t] : all_tensors(params)) {
    std::size_t bytes = t->data.size() * 8;
    if (buf.size() < offset + bytes)
      throw parse_error(path.string() + ": truncated at byte " + std::to_string(buf.size()) + " while reading '" + name + "'");
    for (std::size_t i = 0; i < t->data.size(); ++i) t->data[i] = detail::get_f64(buf.data() + offset + i * 8);
    offset += bytes;
  }
  if (offset != buf.size()) throw parse_error(path.string() + ": trailing bytes at offset " + std::to_string(offset));
  if (meta_out) {
    meta_out->seed = header.value("seed", 0ULL);
    meta_out->stage = header.value("stage", "");
  }
  return params;
}

}  // namespace sei
