#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sei/common.hpp"
#include "sei/signal.hpp"

namespace sei {

// File layout:
//   line 1: JSON header {"count", "length", "sample_rate", "labels_present"}
//   payload: count records, each `length` interleaved I,Q float32 LE pairs
//   labels:  count int32 LE (only when labels_present)
// Round-trips are byte-exact; the simulator quantizes to f32 for this reason.

struct IqFile {
  std::vector<IQRecord> records;
  double sample_rate = 1.0;
};

namespace detail {

inline void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline void put_i32(std::string& buf, std::int32_t v) {
  std::uint32_t bits = static_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline float get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::int32_t get_i32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return static_cast<std::int32_t>(bits);
}

}  // namespace detail

inline void save_iq_file(const std::vector<IQRecord>& records, const std::filesystem::path& path,
                         double sample_rate = 1.0) {
  std::size_t length = records.empty() ? 0 : records.front().samples.size();
  std::size_t n_labeled = 0;
  for (const IQRecord& r : records) {
    if (r.samples.size() != length)
      throw config_error("save_iq_file: record length " + std::to_string(r.samples.size()) + " differs from first record " + std::to_string(length));
    if (r.label) ++n_labeled;
  }
  if (n_labeled != 0 && n_labeled != records.size())
    throw config_error("save_iq_file: mixed labeled and unlabeled records (" + std::to_string(n_labeled) + " of " + std::to_string(records.size()) + " labeled)");
  bool labels_present = n_labeled == records.size() && !records.empty();
  nlohmann::json header{{"count", records.size()},
                        {"length", length},
                        {"sample_rate", sample_rate},
                        {"labels_present", labels_present}};
  std::string buf = header.dump();
  buf.push_back('\n');
  for (const IQRecord& r : records)
    for (const auto& s : r.samples) {
      detail::put_f32(buf, static_cast<float>(s.real()));
      detail::put_f32(buf, static_cast<float>(s.imag()));
    }
  if (labels_present)
    for (const IQRecord& r : records) detail::put_i32(buf, *r.label);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw parse_error("save_iq_file: cannot open " + path.string() + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw parse_error("save_iq_file: short write to " + path.string());
}

inline IqFile load_iq_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("load_iq_file: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t nl = buf.find('\n');
  if (nl == std::string::npos) throw parse_error(path.string() + ": no header line terminator in first " + std::to_string(buf.size()) + " bytes");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(path.string() + ": malformed JSON header at byte 0: " + e.what());
  }
  if (!header.contains("count") || !header.contains("length") || !header.contains("labels_present"))
    throw parse_error(path.string() + ": header missing count/length/labels_present at byte 0");
  std::size_t count = header["count"].get<std::size_t>();
  std::size_t length = header["length"].get<std::size_t>();
  bool labels_present = header["labels_present"].get<bool>();

  IqFile file;
  file.sample_rate = header.value("sample_rate", 1.0);
  std::size_t offset = nl + 1;
  std::size_t payload_bytes = count * length * 8;
  if (buf.size() < offset + payload_bytes)
    throw parse_error(path.string() + ": truncated payload at byte " + std::to_string(buf.size()) + " (need " + std::to_string(offset + payload_bytes) + ")");
  file.records.resize(count);
  const char* p = buf.data() + offset;
  for (std::size_t r = 0; r < count; ++r) {
    auto& samples = file.records[r].samples;
    samples.resize(length);
    for (std::size_t l = 0; l < length; ++l) {
      float i = detail::get_f32(p);
      float q = detail::get_f32(p + 4);
      p += 8;
      samples[l] = {static_cast<double>(i), static_cast<double>(q)};
    }
  }
  offset += payload_bytes;
  if (labels_present) {
    std::size_t label_bytes = count * 4;
    if (buf.size() < offset + label_bytes)
      throw parse_error(path.string() + ": truncated label block at byte " + std::to_string(buf.size()) + " (need " + std::to_string(offset + label_bytes) + ")");
    for (std::size_t r = 0; r < count; ++r) {
      std::int32_t v = detail::get_i32(buf.data() + offset + r * 4);
      if (v >= 1) {
        file.records[r].label = v;
        file.records[r].emitter_truth = v;
      }
    }
    offset += label_bytes;
  }
  if (offset != buf.size())
    throw parse_error(path.string() + ": trailing bytes at offset " + std::to_string(offset));
  return file;
}

}  // namespace sei
