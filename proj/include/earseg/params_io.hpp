#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "earseg/network.hpp"
#include "earseg/tensor.hpp"

namespace earseg {

// Binary weight container
// -----------------------
//   magic   8 bytes  "EARSEGW\0"
//   version u8       1
//   count   u32 LE   number of entries
//   entry table, `count` times:
//     name_len u16 LE, name bytes
//     dtype    u8      0 = float32, 1 = float64
//     ndim     u8
//     dims     ndim x u64 LE
//     offset   u64 LE  byte offset into the payload section
//   payload           IEEE-754 little-endian values, densely packed
//
// Entries are named conv01.weight, conv01.bias, bn01.gamma, bn01.beta,
// bn01.running_mean, bn01.running_var, ... with 1-based, zero-padded
// layer numbers in network order.

class WeightsFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class WeightsShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class WeightsTruncatedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace wio {

inline constexpr char kMagic[8] = {'E', 'A', 'R', 'S', 'E', 'G', 'W', '\0'};
inline constexpr std::uint8_t kVersion = 1;

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  bool need(std::size_t k) const { return pos + k <= buf.size(); }

  std::uint8_t u8() {
    if (!need(1)) throw WeightsTruncatedError("weights file: truncated header");
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint16_t u16() {
    if (!need(2)) throw WeightsTruncatedError("weights file: truncated header");
    std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::string bytes(std::size_t k) {
    if (!need(k)) throw WeightsTruncatedError("weights file: truncated header");
    std::string s = buf.substr(pos, k);
    pos += k;
    return s;
  }
};

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "weights container stores float32 or float64");
  return std::is_same_v<T, float> ? 0 : 1;
}

template <typename T>
void append_values(std::string& payload, const T* values, std::size_t count) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (std::size_t i = 0; i < count; ++i) {
    Bits b = std::bit_cast<Bits>(values[i]);
    if constexpr (sizeof(T) == 4) {
      put_u32(payload, b);
    } else {
      put_u64(payload, b);
    }
  }
}

// Reads `count` values of the stored dtype, converting to T.
template <typename T>
void read_values(Reader& r, std::uint8_t dtype, T* out, std::size_t count,
                 const std::string& name) {
  const std::size_t elem = (dtype == 0) ? 4 : 8;
  if (!r.need(count * elem)) {
    throw WeightsTruncatedError("weights file: payload for '" + name +
                                "' extends past end of file");
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (dtype == 0) {
      std::uint32_t b = r.u32();
      out[i] = static_cast<T>(std::bit_cast<float>(b));
    } else {
      std::uint64_t b = r.u64();
      out[i] = static_cast<T>(std::bit_cast<double>(b));
    }
  }
}

struct EntryMeta {
  std::uint8_t dtype = 0;
  std::vector<std::uint64_t> dims;
  std::uint64_t offset = 0;  // into payload
};

inline std::string layer_tag(const char* prefix, int index1) {
  std::ostringstream os;
  os << prefix << std::setfill('0') << std::setw(2) << index1;
  return os.str();
}

}  // namespace wio

// Writes the full parameter set. Throws std::runtime_error on I/O failure.
template <typename T>
void save_params(const std::string& path, const NetworkSpec& spec,
                 const NetworkParams<T>& params) {
  check_params(spec, params);

  struct PendingEntry {
    std::string name;
    std::vector<std::uint64_t> dims;
    const T* data;
    std::size_t count;
  };
  std::vector<PendingEntry> entries;
  for (std::size_t i = 0; i < params.conv.size(); ++i) {
    const auto& c = params.conv[i];
    const std::string tag = wio::layer_tag("conv", static_cast<int>(i) + 1);
    entries.push_back({tag + ".weight",
                       {static_cast<std::uint64_t>(c.weight.n()),
                        static_cast<std::uint64_t>(c.weight.c()), 3u, 3u},
                       c.weight.data(), c.weight.size()});
    entries.push_back({tag + ".bias", {c.bias.size()}, c.bias.data(), c.bias.size()});
  }
  for (std::size_t i = 0; i < params.bn.size(); ++i) {
    const auto& b = params.bn[i];
    const std::string tag = wio::layer_tag("bn", static_cast<int>(i) + 1);
    entries.push_back({tag + ".gamma", {b.gamma.size()}, b.gamma.data(), b.gamma.size()});
    entries.push_back({tag + ".beta", {b.beta.size()}, b.beta.data(), b.beta.size()});
    entries.push_back({tag + ".running_mean",
                       {b.running_mean.size()},
                       b.running_mean.data(),
                       b.running_mean.size()});
    entries.push_back({tag + ".running_var",
                       {b.running_var.size()},
                       b.running_var.data(),
                       b.running_var.size()});
  }

  std::string header;
  std::string payload;
  header.append(wio::kMagic, sizeof(wio::kMagic));
  header.push_back(static_cast<char>(wio::kVersion));
  wio::put_u32(header, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    wio::put_u16(header, static_cast<std::uint16_t>(e.name.size()));
    header.append(e.name);
    header.push_back(static_cast<char>(wio::dtype_code<T>()));
    header.push_back(static_cast<char>(e.dims.size()));
    for (std::uint64_t d : e.dims) wio::put_u64(header, d);
    wio::put_u64(header, payload.size());
    wio::append_values(payload, e.data, e.count);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

// Loads a parameter set and validates it against `spec`. Throws
// WeightsFormatError on a bad magic/version/header, WeightsShapeError when an
// entry is missing or its shape disagrees with the spec (the message names
// the offending layer), and WeightsTruncatedError when data stops short.
template <typename T = float>
NetworkParams<T> load_params(const std::string& path, const NetworkSpec& spec) {
  spec.validate();

  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  wio::Reader r{buf};
  if (buf.size() < sizeof(wio::kMagic) ||
      std::memcmp(buf.data(), wio::kMagic, sizeof(wio::kMagic)) != 0) {
    throw WeightsFormatError("weights file: bad magic, not a weights container");
  }
  r.pos = sizeof(wio::kMagic);
  const std::uint8_t version = r.u8();
  if (version != wio::kVersion) {
    throw WeightsFormatError("weights file: unsupported container version " +
                             std::to_string(version));
  }
  const std::uint32_t count = r.u32();

  std::map<std::string, wio::EntryMeta> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    std::string name = r.bytes(name_len);
    wio::EntryMeta m;
    m.dtype = r.u8();
    if (m.dtype > 1) {
      throw WeightsFormatError("weights file: entry '" + name + "' has unknown dtype code " +
                               std::to_string(m.dtype));
    }
    const std::uint8_t ndim = r.u8();
    for (std::uint8_t d = 0; d < ndim; ++d) m.dims.push_back(r.u64());
    m.offset = r.u64();
    if (!table.emplace(std::move(name), std::move(m)).second) {
      throw WeightsFormatError("weights file: duplicate entry in header");
    }
  }
  const std::size_t payload_base = r.pos;

  auto fetch = [&](const std::string& name, const std::vector<std::uint64_t>& want_dims, T* out,
                   std::size_t count_values, const std::string& layer_desc) {
    auto it = table.find(name);
    if (it == table.end()) {
      throw WeightsShapeError("weights file: missing entry '" + name + "' for " + layer_desc);
    }
    const auto& m = it->second;
    if (m.dims != want_dims) {
      std::ostringstream os;
      os << "weights file: entry '" << name << "' for " << layer_desc << " has shape (";
      for (std::size_t i = 0; i < m.dims.size(); ++i) os << (i ? "," : "") << m.dims[i];
      os << "), expected (";
      for (std::size_t i = 0; i < want_dims.size(); ++i) os << (i ? "," : "") << want_dims[i];
      os << ")";
      throw WeightsShapeError(os.str());
    }
    wio::Reader pr{buf};
    pr.pos = payload_base + m.offset;
    if (pr.pos < payload_base || pr.pos > buf.size()) {
      throw WeightsTruncatedError("weights file: payload for '" + name +
                                  "' extends past end of file");
    }
    wio::read_values(pr, m.dtype, out, count_values, name);
  };

  NetworkParams<T> params = init_params<T>(spec, 0);  // shapes only; contents overwritten
  const auto shapes = conv_shapes(spec);
  std::size_t expected_entries = 0;
  for (std::size_t i = 0; i < params.conv.size(); ++i) {
    auto& c = params.conv[i];
    const std::string tag = wio::layer_tag("conv", static_cast<int>(i) + 1);
    const std::string desc = "conv layer " + std::to_string(i + 1);
    fetch(tag + ".weight",
          {static_cast<std::uint64_t>(shapes[i].first), static_cast<std::uint64_t>(shapes[i].second),
           3u, 3u},
          c.weight.data(), c.weight.size(), desc);
    fetch(tag + ".bias", {c.bias.size()}, c.bias.data(), c.bias.size(), desc);
    expected_entries += 2;
  }
  for (std::size_t i = 0; i < params.bn.size(); ++i) {
    auto& b = params.bn[i];
    const std::string tag = wio::layer_tag("bn", static_cast<int>(i) + 1);
    const std::string desc = "batch-norm layer " + std::to_string(i + 1);
    fetch(tag + ".gamma", {b.gamma.size()}, b.gamma.data(), b.gamma.size(), desc);
    fetch(tag + ".beta", {b.beta.size()}, b.beta.data(), b.beta.size(), desc);
    fetch(tag + ".running_mean", {b.running_mean.size()}, b.running_mean.data(),
          b.running_mean.size(), desc);
    fetch(tag + ".running_var", {b.running_var.size()}, b.running_var.data(),
          b.running_var.size(), desc);
    expected_entries += 4;
  }
  if (table.size() != expected_entries) {
    throw WeightsShapeError("weights file: contains " + std::to_string(table.size()) +
                            " entries, the network needs " + std::to_string(expected_entries) +
                            " (layer count mismatch)");
  }
  return params;
}

}  // namespace earseg
