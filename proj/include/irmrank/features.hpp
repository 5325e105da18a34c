#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irmrank/errors.hpp"
#include "irmrank/graph.hpp"
#include "irmrank/numerics/tensor.hpp"

namespace irm {

// IRMF1 interchange file: one JSON header line, then count * prod(dims)
// little-endian float32 values, row-major, items in header `ids` order.
//
//   {"magic":"IRMF1","kind":"conv","count":2,"dims":[4,4,8],"dtype":"f32le","ids":[0,1]}\n<payload>

inline constexpr const char* kFeatureMagic = "IRMF1";

enum class FeatureKind { Global, Conv, Text };

inline const char* kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::Global: return "global";
    case FeatureKind::Conv: return "conv";
    case FeatureKind::Text: return "text";
  }
  return "?";
}

inline FeatureKind parse_kind(const std::string& s) {
  if (s == "global") return FeatureKind::Global;
  if (s == "conv") return FeatureKind::Conv;
  if (s == "text") return FeatureKind::Text;
  throw FormatError("unknown feature kind '" + s + "'");
}

inline std::size_t kind_rank(FeatureKind k) { return k == FeatureKind::Global ? 1 : 3; }

struct FeatureBlock {
  FeatureKind kind = FeatureKind::Global;
  Shape dims;
  IdList ids;
  std::vector<float> values;

  std::size_t count() const { return ids.size(); }
  std::size_t item_size() const { return shape_size(dims); }
  std::span<const float> item(std::size_t idx) const {
    return std::span<const float>(values).subspan(idx * item_size(), item_size());
  }

  bool operator==(const FeatureBlock&) const = default;
};

namespace detail {

inline void check_block_schema(FeatureKind kind, const Shape& dims, std::size_t offset) {
  if (dims.size() != kind_rank(kind))
    throw FormatError("IRMF1 byte " + std::to_string(offset) + ": kind '" + kind_name(kind) + "' requires rank " +
                      std::to_string(kind_rank(kind)) + " dims, got " + shape_str(dims));
  for (auto d : dims)
    if (d == 0) throw FormatError("IRMF1 byte " + std::to_string(offset) + ": zero dimension in " + shape_str(dims));
}

inline std::uint32_t to_le(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big)
    return ((x & 0xffU) << 24) | ((x & 0xff00U) << 8) | ((x >> 8) & 0xff00U) | (x >> 24);
  return x;
}

}  // namespace detail

inline void write_features(std::ostream& out, const FeatureBlock& block) {
  detail::check_block_schema(block.kind, block.dims, 0);
  if (block.values.size() != block.count() * block.item_size())
    throw FormatError("write_features: payload length does not match count * prod(dims)");
  for (float v : block.values)
    if (!std::isfinite(v)) throw FormatError("write_features: non-finite value");
  nlohmann::json header = {{"magic", kFeatureMagic},          {"kind", kind_name(block.kind)},
                           {"count", block.count()},          {"dims", block.dims},
                           {"dtype", "f32le"},                {"ids", block.ids}};
  out << header.dump() << '\n';
  std::vector<std::uint32_t> raw(block.values.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = detail::to_le(std::bit_cast<std::uint32_t>(block.values[i]));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

inline FeatureBlock read_features(std::istream& in, std::optional<FeatureKind> expected = std::nullopt) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("IRMF1 byte 0: missing header line");
  const std::size_t payload_offset = line.size() + 1;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("IRMF1 byte 0: header is not JSON: ") + e.what());
  }
  FeatureBlock block;
  try {
    if (header.at("magic").get<std::string>() != kFeatureMagic)
      throw FormatError("IRMF1 byte 0: bad magic '" + header.at("magic").get<std::string>() + "'");
    if (header.at("dtype").get<std::string>() != "f32le")
      throw FormatError("IRMF1 byte 0: unsupported dtype '" + header.at("dtype").get<std::string>() + "'");
    block.kind = parse_kind(header.at("kind").get<std::string>());
    block.dims = header.at("dims").get<Shape>();
    const auto count = header.at("count").get<std::size_t>();
    if (header.contains("ids")) {
      block.ids = header.at("ids").get<IdList>();
      if (block.ids.size() != count) throw FormatError("IRMF1 byte 0: ids length does not match count");
    } else {
      block.ids.resize(count);
      for (std::size_t i = 0; i < count; ++i) block.ids[i] = static_cast<Id>(i);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("IRMF1 byte 0: malformed header: ") + e.what());
  }
  detail::check_block_schema(block.kind, block.dims, 0);
  if (expected && *expected != block.kind)
    throw FormatError(std::string("IRMF1 byte 0: expected kind '") + kind_name(*expected) + "', file holds '" +
                      kind_name(block.kind) + "'");
  const std::size_t n = block.count() * block.item_size();
  std::vector<std::uint32_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 4));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != n * 4)
    throw FormatError("IRMF1 byte " + std::to_string(payload_offset + got) + ": truncated payload, expected " +
                      std::to_string(n * 4) + " bytes, got " + std::to_string(got));
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("IRMF1 byte " + std::to_string(payload_offset + n * 4) + ": trailing bytes after payload");
  block.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    block.values[i] = std::bit_cast<float>(detail::to_le(raw[i]));
    if (!std::isfinite(block.values[i]))
      throw FormatError("IRMF1 byte " + std::to_string(payload_offset + 4 * i) + ": non-finite value");
  }
  return block;
}

inline void write_features(const std::filesystem::path& path, const FeatureBlock& block) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_features(out, block);
  if (!out) throw InputError("write failed: " + path.string());
}

inline FeatureBlock read_features(const std::filesystem::path& path, std::optional<FeatureKind> expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return read_features(in, expected);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

struct FeatureDims {
  std::size_t global = 32;
  std::size_t conv_h = 4, conv_w = 4, channels = 8;
  std::size_t contexts = 2, tokens = 6, word_dim = 16;

  std::size_t conv_size() const { return conv_h * conv_w * channels; }
  std::size_t text_size() const { return contexts * tokens * word_dim; }
  bool operator==(const FeatureDims&) const = default;
};

/// Feature dimensions of the full-scale setting: 1536-d global vectors,
/// 8x8x1536 conv maps, 4 sentences x 12 tokens x 300-d word vectors.
inline FeatureDims paper_scale_dims() { return {1536, 8, 8, 1536, 4, 12, 300}; }

inline nlohmann::json dims_json(const FeatureDims& d) {
  return {{"global", {d.global}},
          {"conv", {d.conv_h, d.conv_w, d.channels}},
          {"text", {d.contexts, d.tokens, d.word_dim}}};
}

inline FeatureDims dims_from_json(const nlohmann::json& j) {
  FeatureDims d;
  auto g = j.at("global").get<Shape>();
  auto c = j.at("conv").get<Shape>();
  auto t = j.at("text").get<Shape>();
  if (g.size() != 1 || c.size() != 3 || t.size() != 3) throw FormatError("manifest dims have wrong rank");
  d.global = g[0];
  d.conv_h = c[0], d.conv_w = c[1], d.channels = c[2];
  d.contexts = t[0], d.tokens = t[1], d.word_dim = t[2];
  return d;
}

/// Per-tweet multimodal features in float64, indexed by tweet id.
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::size_t tweets, FeatureDims dims)
      : tweets_(tweets),
        dims_(dims),
        global_(tweets * dims.global),
        conv_(tweets * dims.conv_size()),
        text_(tweets * dims.text_size()) {}

  std::size_t tweet_count() const { return tweets_; }
  const FeatureDims& dims() const { return dims_; }

  std::span<const double> global(Id i) const { return slice(global_, i, dims_.global); }
  std::span<const double> conv(Id i) const { return slice(conv_, i, dims_.conv_size()); }
  std::span<const double> text(Id i) const { return slice(text_, i, dims_.text_size()); }
  /// Word vector `token` of sentence `ctx` of tweet i.
  std::span<const double> word(Id i, std::size_t ctx, std::size_t token) const {
    return text(i).subspan((ctx * dims_.tokens + token) * dims_.word_dim, dims_.word_dim);
  }

  std::span<double> global_mut(Id i) { return slice_mut(global_, i, dims_.global); }
  std::span<double> conv_mut(Id i) { return slice_mut(conv_, i, dims_.conv_size()); }
  std::span<double> text_mut(Id i) { return slice_mut(text_, i, dims_.text_size()); }

 private:
  std::span<const double> slice(const Vec& v, Id i, std::size_t n) const {
    if (i >= tweets_) throw InputError("unknown tweet id " + std::to_string(i));
    return std::span<const double>(v).subspan(std::size_t{i} * n, n);
  }
  std::span<double> slice_mut(Vec& v, Id i, std::size_t n) {
    if (i >= tweets_) throw InputError("unknown tweet id " + std::to_string(i));
    return std::span<double>(v).subspan(std::size_t{i} * n, n);
  }

  std::size_t tweets_ = 0;
  FeatureDims dims_;
  Vec global_, conv_, text_;
};

struct ValidationReport {
  std::size_t tweets = 0;
  std::map<std::string, Shape> dims;
  std::map<std::string, std::size_t> counts;

  std::string summary() const {
    std::ostringstream os;
    os << "OK: " << tweets << " tweets";
    for (const auto& [k, d] : dims) os << "; " << k << " " << shape_str(d) << " x" << counts.at(k);
    return os.str();
  }
};

/// Checks that every tweet of the network has all three feature kinds with
/// consistent dims. Throws ValidationError listing missing ids per kind.
inline ValidationReport validate_dataset(const IRMNetwork& net, const FeatureBlock& global, const FeatureBlock& conv,
                                         const FeatureBlock& text) {
  ValidationReport report;
  report.tweets = net.tweet_count();
  std::ostringstream problems;
  for (const FeatureBlock* b : {&global, &conv, &text}) {
    const std::string name = kind_name(b->kind);
    report.dims[name] = b->dims;
    report.counts[name] = b->count();
    if (b->dims.size() != kind_rank(b->kind)) problems << name << ": wrong rank " << shape_str(b->dims) << "; ";
    if (b->values.size() != b->count() * b->item_size()) problems << name << ": payload length mismatch; ";
    std::vector<bool> seen(net.tweet_count(), false);
    for (Id id : b->ids)
      if (id < seen.size()) seen[id] = true;
    IdList missing;
    for (Id i = 0; i < seen.size(); ++i)
      if (!seen[i]) missing.push_back(i);
    if (!missing.empty()) {
      problems << name << " features missing for tweet ids";
      for (std::size_t k = 0; k < missing.size() && k < 50; ++k) problems << ' ' << missing[k];
      if (missing.size() > 50) problems << " ... (" << missing.size() << " total)";
      problems << "; ";
    }
  }
  if (global.kind != FeatureKind::Global || conv.kind != FeatureKind::Conv || text.kind != FeatureKind::Text)
    problems << "feature kinds out of order; ";
  if (conv.dims.size() == 3 && (conv.dims[0] < 3 || conv.dims[1] < 3))
    problems << "conv grid " << shape_str(conv.dims) << " smaller than 3x3; ";
  const std::string msg = problems.str();
  if (!msg.empty()) throw ValidationError("dataset validation failed: " + msg);
  return report;
}

/// Assembles a FeatureStore from validated blocks.
inline FeatureStore make_feature_store(std::size_t tweets, const FeatureBlock& global, const FeatureBlock& conv,
                                       const FeatureBlock& text) {
  FeatureDims d;
  d.global = global.dims.at(0);
  d.conv_h = conv.dims.at(0), d.conv_w = conv.dims.at(1), d.channels = conv.dims.at(2);
  d.contexts = text.dims.at(0), d.tokens = text.dims.at(1), d.word_dim = text.dims.at(2);
  FeatureStore store(tweets, d);
  auto fill = [&](const FeatureBlock& b, auto getter) {
    for (std::size_t idx = 0; idx < b.count(); ++idx) {
      if (b.ids[idx] >= tweets) continue;
      auto dst = (store.*getter)(b.ids[idx]);
      auto src = b.item(idx);
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<double>(src[k]);
    }
  };
  fill(global, &FeatureStore::global_mut);
  fill(conv, &FeatureStore::conv_mut);
  fill(text, &FeatureStore::text_mut);
  return store;
}

}  // namespace irm
