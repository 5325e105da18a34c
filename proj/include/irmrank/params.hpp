#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "irmrank/errors.hpp"
#include "irmrank/features.hpp"
#include "irmrank/numerics/tensor.hpp"

namespace irm {

enum class GlimpseCell { Lstm, Tanh };

struct ModelDims {
  std::size_t joint = 16;             // d: joint representation / preference dim
  std::size_t text_hidden = 16;       // d_t: sentence LSTM hidden size
  std::size_t attention = 8;          // a: text-attention hidden size
  std::size_t social_attention = 8;   // a_s: social-attention hidden size
  std::size_t glimpse_hidden = 8;     // glimpse recurrence hidden size
  GlimpseCell glimpse_cell = GlimpseCell::Lstm;
  double location_scale = 1.0;

  std::size_t glimpse_gates() const { return glimpse_cell == GlimpseCell::Lstm ? 4 : 1; }
  bool operator==(const ModelDims&) const = default;
};

/// Parameter names. Matrices map right-hand inputs to left-hand outputs.
namespace pname {
inline const std::string kImage = "fusion.W_img";      // d x d_f
inline const std::string kText = "fusion.W_txt";       // d x d_t
inline const std::string kAttended = "fusion.W_att";   // d x S
inline const std::string kLstmW = "text_lstm.W";       // 4d_t x word_dim
inline const std::string kLstmU = "text_lstm.U";       // 4d_t x d_t
inline const std::string kLstmB = "text_lstm.b";       // 4d_t
inline const std::string kAttnText = "attn.W_text";    // a x d_t
inline const std::string kAttnPatch = "attn.W_patch";  // a x S
inline const std::string kAttnP = "attn.p";            // a
inline const std::string kAttnB = "attn.b";            // a
inline const std::string kGlimpseW = "glimpse.W";      // G*g x S
inline const std::string kGlimpseU = "glimpse.U";      // G*g x g
inline const std::string kGlimpseB = "glimpse.b";      // G*g
inline const std::string kLocImage = "loc.W_img";      // 2 x d_f
inline const std::string kLocOut = "loc.W_out";        // 2 x g
inline const std::string kSocialSelf = "social.W_self";  // a_s x d
inline const std::string kSocialNbr = "social.W_nbr";    // a_s x d
inline const std::string kSocialP = "social.p";          // a_s
inline const std::string kSocialB = "social.b";          // a_s
inline const std::string kUserPref = "user_pref";        // users x d
}  // namespace pname

inline bool is_social_param(const std::string& name) { return name.rfind("social.", 0) == 0; }

namespace detail {
inline std::uint64_t name_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace detail

/// Every parameter of the model family, initialized N(0, init_std) except
/// biases (zero). Each tensor draws from its own generator seeded by
/// (seed, name), so shared parameters start identical across variants.
inline ParamStore make_params(const ModelDims& m, const FeatureDims& f, std::size_t users, double init_std,
                              std::uint64_t seed) {
  if (m.joint == 0 || m.text_hidden == 0 || m.attention == 0 || m.social_attention == 0 || m.glimpse_hidden == 0)
    throw ConfigError("model dims must be positive");
  if (users == 0) throw ConfigError("model needs at least one user");
  if (!(init_std >= 0.0)) throw ConfigError("init_std must be non-negative");
  ParamStore ps;
  auto add = [&](const std::string& name, Shape shape, bool bias = false) {
    Tensor t(std::move(shape));
    if (!bias && init_std > 0.0) {
      std::mt19937_64 rng(detail::name_seed(seed, name));
      std::normal_distribution<double> normal(0.0, init_std);
      for (double& x : t.vec()) x = normal(rng);
    }
    ps.add(name, std::move(t));
  };
  const std::size_t G = m.glimpse_gates() * m.glimpse_hidden;
  add(pname::kImage, {m.joint, f.global});
  add(pname::kText, {m.joint, m.text_hidden});
  add(pname::kAttended, {m.joint, f.channels});
  add(pname::kLstmW, {4 * m.text_hidden, f.word_dim});
  add(pname::kLstmU, {4 * m.text_hidden, m.text_hidden});
  add(pname::kLstmB, {4 * m.text_hidden}, true);
  add(pname::kAttnText, {m.attention, m.text_hidden});
  add(pname::kAttnPatch, {m.attention, f.channels});
  add(pname::kAttnP, {m.attention});
  add(pname::kAttnB, {m.attention}, true);
  add(pname::kGlimpseW, {G, f.channels});
  add(pname::kGlimpseU, {G, m.glimpse_hidden});
  add(pname::kGlimpseB, {G}, true);
  add(pname::kLocImage, {2, f.global});
  add(pname::kLocOut, {2, m.glimpse_hidden});
  add(pname::kSocialSelf, {m.social_attention, m.joint});
  add(pname::kSocialNbr, {m.social_attention, m.joint});
  add(pname::kSocialP, {m.social_attention});
  add(pname::kSocialB, {m.social_attention}, true);
  add(pname::kUserPref, {users, m.joint});
  return ps;
}

}  // namespace irm
