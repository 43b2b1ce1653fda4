#ifndef RSFT_NN_CHECKPOINT_HPP_
#define RSFT_NN_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "rsft/nn/tensor.hpp"
#include "rsft/read_class.hpp"

namespace rsft::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

/// Binary checkpoint, all integers little-endian:
///
///   "RSFT1"                       5 magic bytes
///   u32 n, n bytes                header text, "key=value\n" lines
///   u32 count, count x tensor     parameters, sorted by name
///   u32 count, count x tensor     optimizer state, sorted by name
///
/// tensor := u32 name_len, name bytes, u32 rank, rank x u32 dims,
///           product(dims) x f64 values
struct Checkpoint {
  std::map<std::string, std::string> header;
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr char kCheckpointMagic[5] = {'R', 'S', 'F', 'T', '1'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw DataError("[rsft::nn::load_checkpoint] error: truncated file");
  }
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  auto n = get_u32(in);
  if (n > (1u << 28)) throw DataError("[rsft::nn::load_checkpoint] error: corrupt string length");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("[rsft::nn::load_checkpoint] error: truncated file");
  return s;
}

inline void put_tensors(std::ostream& out, const std::map<std::string, Tensor>& tensors) {
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

inline std::map<std::string, Tensor> get_tensors(std::istream& in) {
  std::map<std::string, Tensor> out;
  auto count = get_u32(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    auto name = get_string(in);
    auto rank = get_u32(in);
    if (rank > 8) throw DataError("[rsft::nn::load_checkpoint] error: corrupt rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32(in));
    Tensor t(shape);
    if (t.size() && !in.read(reinterpret_cast<char*>(t.data()),
                             static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw DataError("[rsft::nn::load_checkpoint] error: truncated tensor " + name);
    }
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  std::string header;
  for (const auto& [k, v] : ckpt.header) header += k + "=" + v + "\n";
  detail::put_string(out, header);
  detail::put_tensors(out, ckpt.params);
  detail::put_tensors(out, ckpt.optimizer);
  if (!out) throw DataError("[rsft::nn::save_checkpoint] error: write failed");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)] = {};
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("[rsft::nn::load_checkpoint] error: not an RSFT1 checkpoint");
  }
  Checkpoint ckpt;
  std::istringstream header(detail::get_string(in));
  std::string line;
  while (std::getline(header, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ckpt.params = detail::get_tensors(in);
  ckpt.optimizer = detail::get_tensors(in);
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("[rsft::nn::save_checkpoint] error: unable to open " + path);
  save_checkpoint(out, ckpt);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("[rsft::nn::load_checkpoint] error: unable to open " + path);
  return load_checkpoint(in);
}

}  // namespace rsft::nn

#endif  // RSFT_NN_CHECKPOINT_HPP_
