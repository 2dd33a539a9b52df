#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "svl/pgm.hpp"
#include "svl/rng.hpp"
#include "svl/tensor.hpp"

// Toy dual encoder: a small strided conv net for images and a single-layer
// GRU for captions, both projecting into a shared unit sphere. Everything is
// templated on the scalar type so the whole forward/backward path can be run
// in double for finite-difference verification.

namespace svl::model {

struct ModelConfig {
  int d = 64;                                  // shared embedding dim
  int image_h = 96, image_w = 96;
  std::vector<int> image_channels = {8, 16, 16, 32};  // four stride-2 blocks
  int vocab_size = 0;
  int pad_id = 0;
  int emb_dim = 128;
  int hidden = 128;
  int d_t = 256;            // target space dim
  int decoder_hidden = 256;

  void validate() const {
    if (d < 8) throw UsageError("ModelConfig: d must be >= 8");
    if (image_channels.size() != 4) throw UsageError("ModelConfig: need 4 conv channel counts");
    if (vocab_size < 2) throw UsageError("ModelConfig: vocab_size must be >= 2");
    if ((image_h % 16) || (image_w % 16))
      throw UsageError("ModelConfig: image size must be divisible by 16 (four stride-2 blocks)");
  }

  nlohmann::json to_json() const {
    return {{"d", d},         {"image_h", image_h},     {"image_w", image_w},
            {"image_channels", image_channels},         {"vocab_size", vocab_size},
            {"pad_id", pad_id},  {"emb_dim", emb_dim},  {"hidden", hidden},
            {"d_t", d_t},        {"decoder_hidden", decoder_hidden}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d = j.value("d", c.d);
    c.image_h = j.value("image_h", c.image_h);
    c.image_w = j.value("image_w", c.image_w);
    c.image_channels = j.value("image_channels", c.image_channels);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.pad_id = j.value("pad_id", c.pad_id);
    c.emb_dim = j.value("emb_dim", c.emb_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.d_t = j.value("d_t", c.d_t);
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    return c;
  }
};

inline constexpr double kLogitScaleInit = 1.0 / 0.07;
inline constexpr double kLogitScaleMax = 100.0;

// Fan-in scaled init: weights U(-sqrt(3/fan_in), +sqrt(3/fan_in)) with
// fan_in = input dimension (first shape entry; emb_dim for the embedding),
// biases zero, logit scale stored as log(1/0.07).
template <class T>
ParamStore<T> init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ParamStore<T> p;
  p.init_seed = seed;
  const auto& ch = cfg.image_channels;
  int cin = 1;
  for (int i = 0; i < 4; ++i) {
    p.add("img.conv" + std::to_string(i + 1) + ".w", {int64_t(cin) * 9, ch[size_t(i)]});
    p.add("img.conv" + std::to_string(i + 1) + ".b", {1, ch[size_t(i)]});
    cin = ch[size_t(i)];
  }
  p.add("img.proj.w", {ch[3], cfg.d});
  p.add("img.proj.b", {1, cfg.d});
  p.add("cap.emb.w", {cfg.vocab_size, cfg.emb_dim});
  p.add("cap.gru.wx", {cfg.emb_dim, 3 * cfg.hidden});
  p.add("cap.gru.wh", {cfg.hidden, 3 * cfg.hidden});
  p.add("cap.gru.b", {1, 3 * cfg.hidden});
  p.add("cap.proj.w", {cfg.hidden, cfg.d});
  p.add("cap.proj.b", {1, cfg.d});
  p.add("dec.fc1.w", {cfg.d, cfg.decoder_hidden});
  p.add("dec.fc1.b", {1, cfg.decoder_hidden});
  p.add("dec.fc2.w", {cfg.decoder_hidden, cfg.d_t});
  p.add("dec.fc2.b", {1, cfg.d_t});
  p.add("loss.log_scale", {1, 1});

  rng::Stream rng({seed, 0x1417ull});
  for (auto& e : p.entries) {
    if (e.name == "loss.log_scale") {
      e.value(0, 0) = T(std::log(kLogitScaleInit));
      continue;
    }
    if (e.name.ends_with(".b")) continue;  // biases stay zero
    const int64_t fan_in = e.name == "cap.emb.w" ? cfg.emb_dim : e.shape[0];
    const double a = std::sqrt(3.0 / double(fan_in));
    for (int64_t r = 0; r < e.value.rows(); ++r)
      for (int64_t c = 0; c < e.value.cols(); ++c)
        e.value(r, c) = T(rng.uniform_range(-a, a));
  }
  return p;
}

namespace detail {

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// y = x * sigmoid(x)
template <class T>
void silu_inplace(MatR<T>& pre, MatR<T>& act) {
  act.resize(pre.rows(), pre.cols());
  for (int64_t i = 0; i < pre.size(); ++i) {
    const T s = sigmoid(pre.data()[i]);
    act.data()[i] = pre.data()[i] * s;
  }
}

template <class T>
void silu_backward(const MatR<T>& pre, const MatR<T>& dact, MatR<T>& dpre) {
  dpre.resize(pre.rows(), pre.cols());
  for (int64_t i = 0; i < pre.size(); ++i) {
    const T x = pre.data()[i];
    const T s = sigmoid(x);
    dpre.data()[i] = dact.data()[i] * (s * (T(1) + x * (T(1) - s)));
  }
}

// L2-normalizes rows; returns row norms for the backward pass.
template <class T>
VecC<T> normalize_rows(MatR<T>& m) {
  VecC<T> norms(m.rows());
  for (int64_t r = 0; r < m.rows(); ++r) {
    T n = m.row(r).norm();
    if (n < T(1e-12)) n = T(1e-12);
    norms(r) = n;
    m.row(r) /= n;
  }
  return norms;
}

template <class T>
MatR<T> normalize_rows_backward(const MatR<T>& z, const VecC<T>& norms, const MatR<T>& dz) {
  MatR<T> dx(z.rows(), z.cols());
  for (int64_t r = 0; r < z.rows(); ++r) {
    const T dot = z.row(r).dot(dz.row(r));
    dx.row(r) = (dz.row(r) - z.row(r) * dot) / norms(r);
  }
  return dx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Image encoder: 4 x (3x3 stride-2 conv, SiLU) -> global average pool ->
// linear -> L2 normalize. Activations are (B*H*W) x C matrices; conv is
// im2col + GEMM.
// ---------------------------------------------------------------------------

template <class T>
class ImageEncoder {
 public:
  explicit ImageEncoder(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  // images: (B * H * W) x 1 matrix, values in [0, 1].
  MatR<T> forward(const ParamStore<T>& p, const MatR<T>& images, int batch) {
    const int64_t hw = int64_t(cfg_.image_h) * cfg_.image_w;
    if (images.rows() != hw * batch || images.cols() != 1)
      throw UsageError("encode_images: input shape mismatch");
    batch_ = batch;
    int h = cfg_.image_h, w = cfg_.image_w, cin = 1;
    const MatR<T>* x = &images;
    for (int l = 0; l < 4; ++l) {
      Layer& L = layers_[size_t(l)];
      L.in_h = h;
      L.in_w = w;
      L.in_c = cin;
      L.out_h = h / 2;
      L.out_w = w / 2;
      im2col(*x, batch, cin, h, w, L.col);
      const auto& W = p.at(conv_name(l) + ".w");
      const auto& b = p.at(conv_name(l) + ".b");
      L.pre.noalias() = L.col * W;
      L.pre.rowwise() += b.row(0);
      detail::silu_inplace(L.pre, L.act);
      x = &L.act;
      h = L.out_h;
      w = L.out_w;
      cin = int(W.cols());
    }
    // global average pool over spatial positions
    const int64_t pos = int64_t(h) * w;
    pooled_.resize(batch, cin);
    for (int b = 0; b < batch; ++b)
      pooled_.row(b) = layers_[3].act.middleRows(b * pos, pos).colwise().mean();
    proj_in_ = pooled_;
    z_ = proj_in_ * p.at("img.proj.w");
    z_.rowwise() += p.at("img.proj.b").row(0);
    norms_ = detail::normalize_rows(z_);
    return z_;
  }

  void backward(const ParamStore<T>& p, const MatR<T>& dz, ParamStore<T>& grads) {
    MatR<T> dproj = detail::normalize_rows_backward(z_, norms_, dz);
    grads.at("img.proj.w").noalias() += proj_in_.transpose() * dproj;
    grads.at("img.proj.b").row(0) += dproj.colwise().sum();
    MatR<T> dpool = dproj * p.at("img.proj.w").transpose();

    const int64_t pos = int64_t(layers_[3].out_h) * layers_[3].out_w;
    MatR<T> dact(batch_ * pos, dpool.cols());
    for (int b = 0; b < batch_; ++b)
      dact.middleRows(b * pos, pos) = (dpool.row(b) / T(pos)).replicate(pos, 1);

    for (int l = 3; l >= 0; --l) {
      Layer& L = layers_[size_t(l)];
      MatR<T> dpre;
      detail::silu_backward(L.pre, dact, dpre);
      const auto& W = p.at(conv_name(l) + ".w");
      grads.at(conv_name(l) + ".w").noalias() += L.col.transpose() * dpre;
      grads.at(conv_name(l) + ".b").row(0) += dpre.colwise().sum();
      if (l > 0) {
        MatR<T> dcol = dpre * W.transpose();
        col2im(dcol, batch_, L.in_c, L.in_h, L.in_w, dact);
      }
    }
  }

 private:
  static std::string conv_name(int l) { return "img.conv" + std::to_string(l + 1); }

  // 3x3, stride 2, pad 1. Row (b, oy, ox); column (c * 9 + ky * 3 + kx).
  static void im2col(const MatR<T>& in, int batch, int c, int h, int w, MatR<T>& col) {
    const int oh = h / 2, ow = w / 2;
    col.resize(int64_t(batch) * oh * ow, int64_t(c) * 9);
    const int64_t in_pos = int64_t(h) * w;
    for (int b = 0; b < batch; ++b)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int64_t row = (int64_t(b) * oh + oy) * ow + ox;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = 2 * oy - 1 + ky;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = 2 * ox - 1 + kx;
              const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
              const int64_t src = b * in_pos + int64_t(iy) * w + ix;
              for (int ci = 0; ci < c; ++ci)
                col(row, int64_t(ci) * 9 + ky * 3 + kx) = inside ? in(src, ci) : T(0);
            }
          }
        }
  }

  static void col2im(const MatR<T>& dcol, int batch, int c, int h, int w, MatR<T>& din) {
    const int oh = h / 2, ow = w / 2;
    const int64_t in_pos = int64_t(h) * w;
    din = MatR<T>::Zero(int64_t(batch) * in_pos, c);
    for (int b = 0; b < batch; ++b)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int64_t row = (int64_t(b) * oh + oy) * ow + ox;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = 2 * oy - 1 + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = 2 * ox - 1 + kx;
              if (ix < 0 || ix >= w) continue;
              const int64_t dst = b * in_pos + int64_t(iy) * w + ix;
              for (int ci = 0; ci < c; ++ci)
                din(dst, ci) += dcol(row, int64_t(ci) * 9 + ky * 3 + kx);
            }
          }
        }
  }

  struct Layer {
    int in_h = 0, in_w = 0, in_c = 0, out_h = 0, out_w = 0;
    MatR<T> col, pre, act;
  };

  ModelConfig cfg_;
  int batch_ = 0;
  std::array<Layer, 4> layers_;
  MatR<T> pooled_, proj_in_, z_;
  VecC<T> norms_;
};

template <class T>
MatR<T> rasters_to_matrix(const std::vector<Raster>& batch) {
  if (batch.empty()) throw UsageError("empty image batch");
  const int64_t hw = int64_t(batch[0].h) * batch[0].w;
  MatR<T> m(hw * int64_t(batch.size()), 1);
  for (size_t b = 0; b < batch.size(); ++b) {
    if (int64_t(batch[b].v.size()) != hw) throw UsageError("inconsistent raster sizes in batch");
    for (int64_t i = 0; i < hw; ++i) m(int64_t(b) * hw + i, 0) = T(batch[b].v[size_t(i)]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Caption encoder: embedding -> single-layer GRU (padded positions leave the
// state untouched) -> final state -> linear -> L2 normalize.
// ---------------------------------------------------------------------------

template <class T>
class CaptionEncoder {
 public:
  explicit CaptionEncoder(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  MatR<T> forward(const ParamStore<T>& p, const std::vector<std::vector<int>>& tokens) {
    const int B = int(tokens.size());
    if (B == 0) throw UsageError("encode_captions: empty batch");
    L_ = 0;
    for (const auto& t : tokens) L_ = std::max(L_, int(t.size()));
    L_ = std::max(L_, 1);
    ids_.assign(size_t(B) * L_, cfg_.pad_id);
    for (int b = 0; b < B; ++b) {
      for (size_t t = 0; t < tokens[size_t(b)].size(); ++t) {
        const int id = tokens[size_t(b)][t];
        if (id < 0 || id >= cfg_.vocab_size) throw UsageError("encode_captions: token id out of range");
        ids_[size_t(b) * L_ + t] = id;
      }
    }
    batch_ = B;
    const int h = cfg_.hidden;
    const auto& E = p.at("cap.emb.w");
    const auto& Wx = p.at("cap.gru.wx");
    const auto& Wh = p.at("cap.gru.wh");
    const auto& bias = p.at("cap.gru.b");

    steps_.assign(size_t(L_), Step{});
    MatR<T> hstate = MatR<T>::Zero(B, h);
    MatR<T> xt(B, cfg_.emb_dim), gx(B, 3 * h), gh(B, 3 * h);
    for (int t = 0; t < L_; ++t) {
      Step& st = steps_[size_t(t)];
      st.h_prev = hstate;
      for (int b = 0; b < B; ++b) xt.row(b) = E.row(ids_[size_t(b) * L_ + t]);
      gx.noalias() = xt * Wx;
      gx.rowwise() += bias.row(0);
      gh.noalias() = hstate * Wh;
      st.z.resize(B, h);
      st.r.resize(B, h);
      st.n.resize(B, h);
      st.gh_n = gh.rightCols(h);
      for (int b = 0; b < B; ++b) {
        // padded positions leave the state untouched
        const bool active = ids_[size_t(b) * L_ + t] != cfg_.pad_id;
        for (int j = 0; j < h; ++j) {
          const T z = detail::sigmoid(gx(b, j) + gh(b, j));
          const T r = detail::sigmoid(gx(b, h + j) + gh(b, h + j));
          const T n = std::tanh(gx(b, 2 * h + j) + r * st.gh_n(b, j));
          st.z(b, j) = z;
          st.r(b, j) = r;
          st.n(b, j) = n;
          if (active) hstate(b, j) = (T(1) - z) * n + z * st.h_prev(b, j);
        }
      }
    }
    final_h_ = hstate;
    z_ = final_h_ * p.at("cap.proj.w");
    z_.rowwise() += p.at("cap.proj.b").row(0);
    norms_ = detail::normalize_rows(z_);
    return z_;
  }

  void backward(const ParamStore<T>& p, const MatR<T>& dz, ParamStore<T>& grads) {
    const int B = batch_;
    const int h = cfg_.hidden;
    MatR<T> dproj = detail::normalize_rows_backward(z_, norms_, dz);
    grads.at("cap.proj.w").noalias() += final_h_.transpose() * dproj;
    grads.at("cap.proj.b").row(0) += dproj.colwise().sum();
    MatR<T> dh = dproj * p.at("cap.proj.w").transpose();

    const auto& E = p.at("cap.emb.w");
    const auto& Wx = p.at("cap.gru.wx");
    const auto& Wh = p.at("cap.gru.wh");
    auto& dE = grads.at("cap.emb.w");
    auto& dWx = grads.at("cap.gru.wx");
    auto& dWh = grads.at("cap.gru.wh");
    auto& db = grads.at("cap.gru.b");

    MatR<T> dgx(B, 3 * h), dgh(B, 3 * h), xt(B, cfg_.emb_dim);
    for (int t = L_ - 1; t >= 0; --t) {
      const Step& st = steps_[size_t(t)];
      dgx.setZero();
      dgh.setZero();
      MatR<T> dh_prev = MatR<T>::Zero(B, h);
      for (int b = 0; b < B; ++b) {
        const bool active = ids_[size_t(b) * L_ + t] != cfg_.pad_id;
        for (int j = 0; j < h; ++j) {
          if (!active) {
            dh_prev(b, j) += dh(b, j);  // state passed through untouched
            continue;
          }
          const T z = st.z(b, j), r = st.r(b, j), n = st.n(b, j);
          const T dhj = dh(b, j);
          const T dz = dhj * (st.h_prev(b, j) - n);
          const T dn = dhj * (T(1) - z);
          dh_prev(b, j) += dhj * z;
          const T dan = dn * (T(1) - n * n);
          const T dr = dan * st.gh_n(b, j);
          const T daz = dz * z * (T(1) - z);
          const T dar = dr * r * (T(1) - r);
          dgx(b, j) = daz;
          dgx(b, h + j) = dar;
          dgx(b, 2 * h + j) = dan;
          dgh(b, j) = daz;
          dgh(b, h + j) = dar;
          dgh(b, 2 * h + j) = dan * r;
        }
      }
      for (int b = 0; b < B; ++b) xt.row(b) = E.row(ids_[size_t(b) * L_ + t]);
      dWx.noalias() += xt.transpose() * dgx;
      dWh.noalias() += st.h_prev.transpose() * dgh;
      db.row(0) += dgx.colwise().sum();
      MatR<T> dxt = dgx * Wx.transpose();
      for (int b = 0; b < B; ++b) dE.row(ids_[size_t(b) * L_ + t]) += dxt.row(b);
      dh_prev.noalias() += dgh * Wh.transpose();
      dh = std::move(dh_prev);
    }
  }

 private:
  struct Step {
    MatR<T> h_prev, z, r, n, gh_n;
  };

  ModelConfig cfg_;
  int batch_ = 0, L_ = 0;
  std::vector<int> ids_;
  std::vector<Step> steps_;
  MatR<T> final_h_, z_;
  VecC<T> norms_;
};

// ---------------------------------------------------------------------------
// Latent target decoder: d -> decoder_hidden -> d_t MLP with SiLU, output
// left unnormalized (the reconstruction loss computes cosine itself).
// ---------------------------------------------------------------------------

template <class T>
class TargetDecoder {
 public:
  explicit TargetDecoder(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  MatR<T> forward(const ParamStore<T>& p, const MatR<T>& z_cap) {
    in_ = z_cap;
    pre1_ = in_ * p.at("dec.fc1.w");
    pre1_.rowwise() += p.at("dec.fc1.b").row(0);
    detail::silu_inplace(pre1_, act1_);
    MatR<T> out = act1_ * p.at("dec.fc2.w");
    out.rowwise() += p.at("dec.fc2.b").row(0);
    return out;
  }

  // Returns the gradient w.r.t. the input caption embeddings.
  MatR<T> backward(const ParamStore<T>& p, const MatR<T>& dout, ParamStore<T>& grads) {
    grads.at("dec.fc2.w").noalias() += act1_.transpose() * dout;
    grads.at("dec.fc2.b").row(0) += dout.colwise().sum();
    MatR<T> dact1 = dout * p.at("dec.fc2.w").transpose();
    MatR<T> dpre1;
    detail::silu_backward(pre1_, dact1, dpre1);
    grads.at("dec.fc1.w").noalias() += in_.transpose() * dpre1;
    grads.at("dec.fc1.b").row(0) += dpre1.colwise().sum();
    return dpre1 * p.at("dec.fc1.w").transpose();
  }

 private:
  ModelConfig cfg_;
  MatR<T> in_, pre1_, act1_;
};

// ---------------------------------------------------------------------------
// Frozen target embedder: hashed bag-of-tokens into the d_t-dim unit sphere.
// Deterministic across runs; invariant to token order; <pad> ignored; the
// empty bag maps to the reserved first axis.
// ---------------------------------------------------------------------------

struct TargetEmbedder {
  int d_t = 256;
  uint64_t seed = 0x7A26E7ull;
  int pad_id = 0;

  VecC<float> embed(const std::vector<int>& tokens) const {
    VecC<double> acc = VecC<double>::Zero(d_t);
    int used = 0;
    for (int tok : tokens) {
      if (tok == pad_id) continue;
      ++used;
      rng::Stream s({seed, uint64_t(tok)});
      for (int j = 0; j < d_t; ++j) acc(j) += (s.next_u64() >> 63) ? 1.0 : -1.0;
    }
    const double norm = acc.norm();
    VecC<float> out = VecC<float>::Zero(d_t);
    if (used == 0 || norm < 1e-12) {
      out(0) = 1.0f;
      return out;
    }
    for (int j = 0; j < d_t; ++j) out(j) = float(acc(j) / norm);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line, then concatenated row-major little-
// endian float32 payloads in header order, CRC-32 guarded.
// ---------------------------------------------------------------------------

namespace detail {

inline uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return ~crc;
}

}  // namespace detail

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const ParamStore<float>& params, const ModelConfig& cfg,
                            const std::filesystem::path& path) {
  std::vector<uint8_t> payload;
  nlohmann::json names = nlohmann::json::array();
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& e : params.entries) {
    names.push_back(e.name);
    shapes.push_back(e.shape);
    const size_t bytes = size_t(e.value.size()) * sizeof(float);
    const size_t off = payload.size();
    payload.resize(off + bytes);
    std::memcpy(payload.data() + off, e.value.data(), bytes);
  }
  char crc_hex[16];
  std::snprintf(crc_hex, sizeof(crc_hex), "%08x",
                detail::crc32(payload.data(), payload.size()));
  nlohmann::json header = {{"version", kCheckpointVersion}, {"dtype", "f32le"},
                           {"seed", params.init_seed},      {"names", names},
                           {"shapes", shapes},              {"checksum", crc_hex},
                           {"config", cfg.to_json()}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
  f << header.dump() << "\n";
  f.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path.string());
}

struct Checkpoint {
  ParamStore<float> params;
  ModelConfig config;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string header_line;
  if (!std::getline(f, header_line)) throw std::runtime_error("checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header JSON: ") + e.what());
  }
  if (header.value("version", -1) != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(header.value("version", -1)));
  if (header.value("dtype", "") != std::string("f32le"))
    throw std::runtime_error("checkpoint: unsupported dtype");
  std::vector<uint8_t> payload((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
  char crc_hex[16];
  std::snprintf(crc_hex, sizeof(crc_hex), "%08x",
                detail::crc32(payload.data(), payload.size()));
  if (header.value("checksum", "") != std::string(crc_hex))
    throw std::runtime_error("checkpoint: checksum mismatch (corrupt file)");

  Checkpoint out;
  out.config = ModelConfig::from_json(header.at("config"));
  out.params.init_seed = header.value("seed", uint64_t(0));
  const auto& names = header.at("names");
  const auto& shapes = header.at("shapes");
  size_t off = 0;
  for (size_t i = 0; i < names.size(); ++i) {
    auto& v = out.params.add(names[i].get<std::string>(),
                             shapes[i].get<std::vector<int64_t>>());
    const size_t bytes = size_t(v.size()) * sizeof(float);
    if (off + bytes > payload.size()) throw std::runtime_error("checkpoint: truncated payload");
    std::memcpy(v.data(), payload.data() + off, bytes);
    off += bytes;
  }
  if (off != payload.size()) throw std::runtime_error("checkpoint: trailing payload bytes");
  if (!out.params.all_finite()) throw std::runtime_error("checkpoint: non-finite values");
  return out;
}

// Convenience bundle used by the training loop and the evaluator.
template <class T>
struct DualEncoder {
  ModelConfig cfg;
  ParamStore<T> params;
  ImageEncoder<T> img;
  CaptionEncoder<T> cap;
  TargetDecoder<T> dec;

  explicit DualEncoder(ModelConfig c) : cfg(c), img(c), cap(c), dec(c) {}

  static DualEncoder init(const ModelConfig& c, uint64_t seed) {
    DualEncoder m(c);
    m.params = init_params<T>(c, seed);
    return m;
  }

  static DualEncoder from_checkpoint(const Checkpoint& ck) {
    DualEncoder m(ck.config);
    m.params = ck.params.template cast<T>();
    return m;
  }

  double logit_scale() const {
    return std::min(std::exp(double(params.at("loss.log_scale")(0, 0))), kLogitScaleMax);
  }
};

}  // namespace svl::model
