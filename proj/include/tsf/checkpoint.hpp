#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tsf/nn.hpp"

namespace tsf {

// Layout (all integers little-endian):
//   magic "TSFCKPT\0" | u32 version | u64 n + n bytes of "key=value\n" config
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
//     u64 dims[rank], f64 data[prod(dims)]
inline constexpr std::array<char, 8> kCheckpointMagic{'T', 'S', 'F', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::map<std::string, std::string> config;  // sorted: byte-stable output
  std::vector<StoredTensor> tensors;

  const std::string& get(const std::string& key) const {
    auto it = config.find(key);
    if (it == config.end()) fail(ErrorKind::schema, "checkpoint is missing config key '" + key + "'");
    return it->second;
  }

  bool has(const std::string& key) const { return config.count(key) > 0; }

  void store_parameters(const ParameterList& params) {
    for (const auto& p : params) tensors.push_back({p.name, p.tensor.shape(), p.tensor.values()});
  }

  /// Copies stored values into a freshly built model's parameters; names and
  /// shapes must match exactly.
  void load_parameters(ParameterList& params) const {
    if (params.size() != tensors.size())
      fail(ErrorKind::schema, "checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                                  std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      if (t.name != params[i].name || t.shape != params[i].tensor.shape())
        fail(ErrorKind::schema, "checkpoint tensor '" + t.name + "' " + shape_str(t.shape) + " does not match model '" +
                                    params[i].name + "' " + shape_str(params[i].tensor.shape()));
      auto dst = params[i].tensor.mutable_data();
      std::copy(t.data.begin(), t.data.end(), dst.begin());
    }
  }
};

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) fail(ErrorKind::schema, std::string("checkpoint truncated reading ") + what);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}

inline std::string get_bytes(std::istream& in, std::uint64_t n, const char* what) {
  if (n > (std::uint64_t{1} << 32)) fail(ErrorKind::schema, std::string("checkpoint: implausible length for ") + what);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::uint64_t>(in.gcount()) != n)
    fail(ErrorKind::schema, std::string("checkpoint truncated reading ") + what);
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  std::string cfg;
  for (const auto& [k, v] : ck.config) {
    if (k.empty() || k.find_first_of("=\n\\") != std::string::npos)
      fail(ErrorKind::schema, "checkpoint: bad config key '" + k + "'");
    // values may span lines (ARIMA specs): escape backslash and newline
    std::string esc;
    for (char c : v) esc += c == '\n' ? std::string("\\n") : c == '\\' ? std::string("\\\\") : std::string(1, c);
    cfg += k + "=" + esc + "\n";
  }
  detail::put_le<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_le<std::uint64_t>(out, d);
    for (double v : t.data) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) fail(ErrorKind::io, "checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kCheckpointMagic)
    fail(ErrorKind::schema, "not a checkpoint file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::schema, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto cfg_len = detail::get_le<std::uint64_t>(in, "config length");
  std::istringstream cfg(detail::get_bytes(in, cfg_len, "config"));
  std::string line;
  while (std::getline(cfg, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::schema, "checkpoint: malformed config line '" + line + "'");
    std::string v;
    const std::string raw = line.substr(eq + 1);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 1 < raw.size()) {
        v += raw[i + 1] == 'n' ? '\n' : raw[i + 1];
        ++i;
      } else {
        v += raw[i];
      }
    }
    ck.config[line.substr(0, eq)] = v;
  }
  const auto count = detail::get_le<std::uint32_t>(in, "tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    StoredTensor t;
    t.name = detail::get_bytes(in, detail::get_le<std::uint32_t>(in, "name length"), "tensor name");
    const auto rank = detail::get_le<std::uint32_t>(in, "rank");
    if (rank == 0 || rank > 8) fail(ErrorKind::schema, "checkpoint tensor '" + t.name + "' has bad rank");
    std::uint64_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = detail::get_le<std::uint64_t>(in, "dimension");
      if (d == 0 || d > (std::uint64_t{1} << 32)) fail(ErrorKind::schema, "checkpoint tensor '" + t.name + "' has bad shape");
      t.shape.push_back(static_cast<std::size_t>(d));
      total *= d;
    }
    if (total > (std::uint64_t{1} << 32)) fail(ErrorKind::schema, "checkpoint tensor '" + t.name + "' is too large");
    t.data.resize(total);
    for (auto& v : t.data) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, "tensor data"));
    ck.tensors.push_back(std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::schema, "checkpoint has trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint '" + path + "'");
  write_checkpoint(out, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace tsf
