#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pfsel/dtree.hpp"
#include "pfsel/errors.hpp"
#include "pfsel/num_io.hpp"
#include "pfsel/phase.hpp"

namespace pfsel {

// Core blob layout, depth d: (2^d - 1) internal nodes of {2-bit slot,
// 16-bit threshold} then 2^d leaves of 4-bit mask, breadth-first,
// MSB-first bit packing, zero padding to a byte boundary.
// d = 4: 15*18 + 16*4 = 334 bits -> 42 bytes.
inline constexpr std::size_t core_blob_bits(int depth) {
  return DecisionTree::internal_count(depth) * 18 + DecisionTree::leaf_count(depth) * 4;
}
inline constexpr std::size_t core_blob_bytes(int depth) { return (core_blob_bits(depth) + 7) / 8; }

inline constexpr char kModelMagic[4] = {'P', 'F', 'S', 'M'};
inline constexpr char kPhaseMagic[4] = {'P', 'F', 'P', 'H'};
inline constexpr std::uint8_t kModelVersion = 1;
inline constexpr std::uint8_t kPhaseVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 4 + 1 + 1 + 2 + 4 * 2 * 4;  // 40

// 16-bit fixed-point threshold quantization over scaled [0,1].
inline std::uint16_t quantize_threshold(double t) {
  const double c = std::clamp(t, 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(c * 65535.0));
}
inline double dequantize_threshold(std::uint16_t u) { return static_cast<double>(u) / 65535.0; }

namespace detail {

class BitWriter {
public:
  void push(std::uint32_t value, int bits) {
    for (int i = bits - 1; i >= 0; --i) {
      if (used_ == 0) bytes_.push_back(std::byte{0});
      if ((value >> i) & 1)
        bytes_.back() |= std::byte{static_cast<unsigned char>(1u << (7 - used_))};
      used_ = (used_ + 1) % 8;
    }
  }
  std::vector<std::byte> take() { return std::move(bytes_); }

private:
  std::vector<std::byte> bytes_;
  int used_ = 0;
};

class BitReader {
public:
  explicit BitReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::uint32_t read(int bits, const std::string& what) {
    std::uint32_t v = 0;
    for (int i = 0; i < bits; ++i) {
      const std::size_t byte_i = pos_ / 8;
      if (byte_i >= bytes_.size()) throw ParseError("model decode: truncated " + what);
      const int bit = (std::to_integer<unsigned>(bytes_[byte_i]) >> (7 - pos_ % 8)) & 1;
      v = (v << 1) | static_cast<std::uint32_t>(bit);
      ++pos_;
    }
    return v;
  }

private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

inline void put_u16_le(std::vector<std::byte>& out, std::uint16_t v) {
  out.push_back(std::byte{static_cast<unsigned char>(v & 0xff)});
  out.push_back(std::byte{static_cast<unsigned char>(v >> 8)});
}
inline void put_u32_le(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::byte{static_cast<unsigned char>((v >> (8 * i)) & 0xff)});
}
inline void put_f32_le(std::vector<std::byte>& out, float f) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}
inline void put_u64_le(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(std::byte{static_cast<unsigned char>((v >> (8 * i)) & 0xff)});
}
inline void put_f64_le(std::vector<std::byte>& out, double d) {
  put_u64_le(out, std::bit_cast<std::uint64_t>(d));
}

class ByteReader {
public:
  ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return std::to_integer<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16_le(const std::string& what) {
    need(2, what);
    const auto lo = std::to_integer<std::uint16_t>(bytes_[pos_]);
    const auto hi = std::to_integer<std::uint16_t>(bytes_[pos_ + 1]);
    pos_ += 2;
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::uint32_t u32_le(const std::string& what) {
    std::uint32_t v = 0;
    need(4, what);
    for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64_le(const std::string& what) {
    std::uint64_t v = 0;
    need(8, what);
    for (int i = 0; i < 8; ++i) v |= std::to_integer<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32_le(const std::string& what) { return std::bit_cast<float>(u32_le(what)); }
  double f64_le(const std::string& what) { return std::bit_cast<double>(u64_le(what)); }
  std::span<const std::byte> bytes(std::size_t n, const std::string& what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool magic(const char (&m)[4]) {
    if (remaining() < 4) return false;
    for (int i = 0; i < 4; ++i)
      if (std::to_integer<char>(bytes_[pos_ + i]) != m[i]) return false;
    pos_ += 4;
    return true;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::size_t n, const std::string& what) {
    if (remaining() < n) throw ParseError("model decode: truncated " + what);
  }
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// A decoded model: the tree plus the four mapped features' scaler, exactly
// what the runtime agent needs.
struct Model {
  DecisionTree tree;
  SlotScaler scaler;
};

struct ModelBlob {
  std::vector<std::byte> bytes;
};

inline std::vector<std::byte> encode_core(const DecisionTree& tree) {
  if (tree.nodes.size() != DecisionTree::internal_count(tree.depth) ||
      tree.leaves.size() != DecisionTree::leaf_count(tree.depth))
    throw DataError("encode: tree is not complete for its depth");
  detail::BitWriter w;
  for (const auto& nd : tree.nodes) {
    w.push(nd.slot, 2);
    w.push(quantize_threshold(nd.threshold), 16);
  }
  for (auto leaf : tree.leaves) w.push(leaf.mask, 4);
  auto bytes = w.take();
  bytes.resize(core_blob_bytes(tree.depth), std::byte{0});  // zero pad to the byte boundary
  return bytes;
}

inline DecisionTree decode_core(std::span<const std::byte> core, int depth,
                                const std::array<std::uint8_t, 4>& feature_map) {
  if (core.size() != core_blob_bytes(depth)) throw ParseError("model decode: bad core blob length");
  detail::BitReader r(core);
  DecisionTree tree;
  tree.depth = depth;
  tree.feature_map = feature_map;
  tree.nodes.resize(DecisionTree::internal_count(depth));
  tree.leaves.resize(DecisionTree::leaf_count(depth));
  for (auto& nd : tree.nodes) {
    nd.slot = static_cast<std::uint8_t>(r.read(2, "node slot"));
    nd.threshold = dequantize_threshold(static_cast<std::uint16_t>(r.read(16, "node threshold")));
  }
  for (auto& leaf : tree.leaves) {
    leaf = PrefetcherConfig{static_cast<std::uint8_t>(r.read(4, "leaf mask"))};
    if (!leaf.is_valid())
      throw ParseError("model decode: leaf mask " + leaf.to_string() + " not in valid config set");
  }
  return tree;
}

// Container: magic PFSM, version, depth, 2-byte feature map (4 x 3 bits,
// MSB-first, low 4 bits zero), 4 x (min,max) float32 LE, core blob.
inline ModelBlob encode(const DecisionTree& tree, const Scaler& scaler) {
  ModelBlob blob;
  auto& out = blob.bytes;
  for (char c : kModelMagic) out.push_back(std::byte{static_cast<unsigned char>(c)});
  out.push_back(std::byte{kModelVersion});
  if (tree.depth < 1 || tree.depth > 8) throw DataError("encode: depth must be in 1..8");
  out.push_back(std::byte{static_cast<unsigned char>(tree.depth)});
  const auto& fm = tree.feature_map;
  for (auto id : fm)
    if (id >= FeatureVector::kCount) throw DataError("encode: bad feature id in map");
  out.push_back(std::byte{static_cast<unsigned char>((fm[0] << 5) | (fm[1] << 2) | (fm[2] >> 1))});
  out.push_back(std::byte{static_cast<unsigned char>(((fm[2] & 1) << 7) | (fm[3] << 4))});
  const SlotScaler ss = SlotScaler::narrow(scaler, fm);
  for (int j = 0; j < 4; ++j) {
    detail::put_f32_le(out, ss.min[j]);
    detail::put_f32_le(out, ss.max[j]);
  }
  const auto core = encode_core(tree);
  out.insert(out.end(), core.begin(), core.end());
  return blob;
}

inline Model decode(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  if (!r.magic(kModelMagic)) throw ParseError("model decode: bad magic");
  const auto version = r.u8("version");
  if (version != kModelVersion)
    throw ParseError("model decode: unsupported version " + std::to_string(version));
  const int depth = r.u8("depth");
  if (depth < 1 || depth > 8) throw ParseError("model decode: bad depth " + std::to_string(depth));
  const auto fm0 = r.u8("feature map");
  const auto fm1 = r.u8("feature map");
  if (fm1 & 0x0f) throw ParseError("model decode: nonzero feature map padding");
  std::array<std::uint8_t, 4> fm{};
  fm[0] = static_cast<std::uint8_t>((fm0 >> 5) & 0x7);
  fm[1] = static_cast<std::uint8_t>((fm0 >> 2) & 0x7);
  fm[2] = static_cast<std::uint8_t>(((fm0 & 0x3) << 1) | (fm1 >> 7));
  fm[3] = static_cast<std::uint8_t>((fm1 >> 4) & 0x7);
  for (int a = 0; a < 4; ++a) {
    if (fm[a] >= FeatureVector::kCount) throw ParseError("model decode: feature id out of range");
    for (int b = a + 1; b < 4; ++b)
      if (fm[a] == fm[b]) throw ParseError("model decode: duplicate feature id in map");
  }
  Model m;
  for (int j = 0; j < 4; ++j) {
    m.scaler.min[j] = r.f32_le("scaler");
    m.scaler.max[j] = r.f32_le("scaler");
  }
  const auto core = r.bytes(core_blob_bytes(depth), "core blob");
  m.tree = decode_core(core, depth, fm);
  if (r.remaining() != 0) throw ParseError("model decode: trailing bytes after core blob");
  return m;
}

inline Model decode(const ModelBlob& blob) { return decode(std::span<const std::byte>(blob.bytes)); }

// ---- phase model section ------------------------------------------------
// Payload: k u16 LE, 7 x (min,max) f64 LE, then k x 7 f64 LE center rows.
// Used both as a trailing section of .pfm files and standalone as .pfph.

inline std::vector<std::byte> encode_phase_section(const PhaseModel& pm) {
  std::vector<std::byte> out;
  for (char c : kPhaseMagic) out.push_back(std::byte{static_cast<unsigned char>(c)});
  out.push_back(std::byte{kPhaseVersion});
  std::vector<std::byte> payload;
  detail::put_u16_le(payload, static_cast<std::uint16_t>(pm.k()));
  for (std::size_t i = 0; i < FeatureVector::kCount; ++i) {
    detail::put_f64_le(payload, pm.scaler.min[i]);
    detail::put_f64_le(payload, pm.scaler.max[i]);
  }
  for (const auto& c : pm.centers)
    for (double v : c) detail::put_f64_le(payload, v);
  detail::put_u32_le(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline PhaseModel decode_phase_payload(std::span<const std::byte> payload) {
  detail::ByteReader r(payload);
  PhaseModel pm;
  const int k = r.u16_le("phase k");
  if (k < 1) throw ParseError("phase decode: k must be >= 1");
  for (std::size_t i = 0; i < FeatureVector::kCount; ++i) {
    pm.scaler.min[i] = r.f64_le("phase scaler");
    pm.scaler.max[i] = r.f64_le("phase scaler");
  }
  pm.centers.resize(k);
  for (auto& c : pm.centers)
    for (auto& v : c) v = r.f64_le("phase center");
  if (r.remaining() != 0) throw ParseError("phase decode: trailing bytes in section");
  return pm;
}

inline PhaseModel decode_phase_section(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  if (!r.magic(kPhaseMagic)) throw ParseError("phase decode: bad magic");
  const auto version = r.u8("phase version");
  if (version != kPhaseVersion)
    throw ParseError("phase decode: unsupported version " + std::to_string(version));
  const auto len = r.u32_le("phase section length");
  const auto payload = r.bytes(len, "phase section payload");
  if (r.remaining() != 0) throw ParseError("phase decode: trailing bytes after section");
  return decode_phase_payload(payload);
}

// ---- files ---------------------------------------------------------------

struct ModelFile {
  Model model;
  std::optional<PhaseModel> phases;
};

inline void write_bytes(const std::string& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError(path + ": write failed");
}

inline std::vector<std::byte> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) bytes[i] = std::byte{static_cast<unsigned char>(data[i])};
  return bytes;
}

inline void write_model_file(const std::string& path, const DecisionTree& tree, const Scaler& scaler,
                             const PhaseModel* phases = nullptr) {
  auto blob = encode(tree, scaler);
  if (phases) {
    const auto section = encode_phase_section(*phases);
    blob.bytes.insert(blob.bytes.end(), section.begin(), section.end());
  }
  write_bytes(path, blob.bytes);
}

inline ModelFile read_model_file(const std::string& path) {
  const auto bytes = read_bytes(path);
  detail::ByteReader probe(bytes);
  if (!probe.magic(kModelMagic)) throw ParseError(path + ": bad magic");
  const auto version = probe.u8("version");
  if (version != kModelVersion)
    throw ParseError(path + ": unsupported version " + std::to_string(version));
  const int depth = probe.u8("depth");
  if (depth < 1 || depth > 8) throw ParseError(path + ": bad depth");
  const std::size_t model_len = kModelHeaderBytes + core_blob_bytes(depth);
  if (bytes.size() < model_len) throw ParseError(path + ": truncated model");
  ModelFile mf;
  mf.model = decode(std::span<const std::byte>(bytes).first(model_len));
  auto rest = std::span<const std::byte>(bytes).subspan(model_len);
  if (!rest.empty()) mf.phases = decode_phase_section(rest);
  return mf;
}

inline void write_phase_file(const std::string& path, const PhaseModel& pm) {
  const auto section = encode_phase_section(pm);
  write_bytes(path, section);
}

inline PhaseModel read_phase_file(const std::string& path) {
  return decode_phase_section(read_bytes(path));
}

// ---- text dumps ----------------------------------------------------------

namespace detail {

inline void dump_node(std::ostream& out, const Model& m, std::size_t pos, int level) {
  const std::string indent(static_cast<std::size_t>(level) * 2, ' ');
  if (level == m.tree.depth) {
    out << indent << "leaf " << m.tree.leaves[pos - DecisionTree::internal_count(m.tree.depth)].to_string()
        << "\n";
    return;
  }
  const auto& nd = m.tree.nodes[pos];
  out << indent << "if " << kFeatureNames[m.tree.feature_map[nd.slot]] << " <= "
      << fmt_double(nd.threshold, 6) << "\n";
  dump_node(out, m, 2 * pos + 1, level + 1);
  out << indent << "else\n";
  dump_node(out, m, 2 * pos + 2, level + 1);
}

}  // namespace detail

inline std::string dump_model_text(const Model& m) {
  std::ostringstream out;
  out << "depth " << m.tree.depth << "\n";
  out << "features";
  for (auto id : m.tree.feature_map) out << ' ' << kFeatureNames[id];
  out << "\n";
  for (int j = 0; j < 4; ++j)
    out << "scaler slot " << j << ": min " << fmt_double(m.scaler.min[j], 9) << " max "
        << fmt_double(m.scaler.max[j], 9) << "\n";
  detail::dump_node(out, m, 0, 0);
  return out.str();
}

inline std::string dump_phase_text(const PhaseModel& pm) {
  std::ostringstream out;
  out << "k " << pm.k() << "\n";
  for (std::size_t i = 0; i < FeatureVector::kCount; ++i)
    out << "scaler " << kFeatureNames[i] << ": min " << fmt_double(pm.scaler.min[i]) << " max "
        << fmt_double(pm.scaler.max[i]) << "\n";
  for (int c = 0; c < pm.k(); ++c) {
    out << "center " << c << ":";
    for (double v : pm.centers[c]) out << ' ' << fmt_double(v, 9);
    out << "\n";
  }
  return out.str();
}

}  // namespace pfsel
