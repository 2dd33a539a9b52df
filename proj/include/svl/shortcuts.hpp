#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "svl/datagen.hpp"
#include "svl/pgm.hpp"
#include "svl/rng.hpp"
#include "svl/tensor.hpp"

// Shortcut injection: per-tuple 6-digit identifiers stamped onto the image
// (glyph overlay in the reserved top strip) and the caption (six appended
// single-digit tokens). Injection never touches scene pixels below the strip
// or pre-existing caption tokens.

namespace svl::shortcuts {

enum class Mode { None, Unique, ImageOnly, CaptionOnly, NBits };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::None: return "none";
    case Mode::Unique: return "unique";
    case Mode::ImageOnly: return "img-only";
    case Mode::CaptionOnly: return "cap-only";
    default: return "nbits";
  }
}

struct ShortcutSpec {
  Mode mode = Mode::None;
  int n_bits = 0;  // NBits only; 2^n distinct codes
  bool eval_with_shortcuts = false;

  void validate() const {
    if (mode == Mode::NBits && (n_bits < 0 || n_bits > 19))
      throw UsageError("ShortcutSpec: n_bits must be in [0, 19] (2^19 fits 6 digits)");
  }

  bool stamps_image(bool train_phase) const {
    if (mode == Mode::None) return false;
    if (mode == Mode::CaptionOnly) return train_phase;
    if (mode == Mode::ImageOnly) return train_phase;
    return true;
  }
};

struct ShortcutAssignment {
  int64_t value = 0;
  std::array<int, 6> digits{};  // zero-padded base-10 expansion

  static ShortcutAssignment from_value(int64_t v) {
    if (v < 0 || v > 999999)
      throw UsageError("shortcut value out of the 6-digit range: " + std::to_string(v));
    ShortcutAssignment a;
    a.value = v;
    for (int i = 5; i >= 0; --i) {
      a.digits[i] = int(v % 10);
      v /= 10;
    }
    return a;
  }
};

inline ShortcutAssignment assign_train_shortcut(const ShortcutSpec& spec, int64_t tuple_id,
                                                rng::Stream& rng) {
  spec.validate();
  switch (spec.mode) {
    case Mode::None:
      throw UsageError("assign_train_shortcut: mode is none");
    case Mode::Unique:
    case Mode::ImageOnly:
    case Mode::CaptionOnly:
      return ShortcutAssignment::from_value(tuple_id);
    case Mode::NBits:
      return ShortcutAssignment::from_value(int64_t(rng.uniform_int(1ull << spec.n_bits)));
  }
  throw UsageError("assign_train_shortcut: bad mode");
}

// Deterministic in (spec, tuple_id).
inline ShortcutAssignment assign_eval_shortcut(const ShortcutSpec& spec, int64_t tuple_id) {
  spec.validate();
  if (!spec.eval_with_shortcuts)
    throw UsageError("assign_eval_shortcut: spec does not evaluate with shortcuts");
  if (spec.mode == Mode::Unique) return ShortcutAssignment::from_value(tuple_id);
  if (spec.mode == Mode::NBits) {
    if (tuple_id < 0 || tuple_id > 999999)
      throw UsageError("assign_eval_shortcut: tuple_id out of range");
    return ShortcutAssignment::from_value(tuple_id % (int64_t(1) << spec.n_bits));
  }
  throw UsageError("assign_eval_shortcut: mode must be unique or nbits");
}

// --- digit glyphs -------------------------------------------------------------

struct DigitGlyphBank {
  int gh = 16, gw = 16;
  std::array<std::vector<Raster>, 10> variants;

  int num_variants(int digit) const { return int(variants[size_t(digit)].size()); }

  void validate() const {
    for (int d = 0; d <= 9; ++d) {
      if (variants[size_t(d)].empty())
        throw UsageError("glyph bank: no variants for digit " + std::to_string(d));
      for (const auto& g : variants[size_t(d)])
        if (g.h != gh || g.w != gw) throw UsageError("glyph bank: inconsistent glyph size");
    }
  }

  static DigitGlyphBank builtin();
  static DigitGlyphBank load_dir(const std::filesystem::path& dir);
};

namespace detail {

// 5x7 seven-segment-ish bitmaps, one string per row.
inline const char* const* digit_font() {
  static const char* rows[10 * 7] = {
      "01110", "10001", "10011", "10101", "11001", "10001", "01110",  // 0
      "00100", "01100", "00100", "00100", "00100", "00100", "01110",  // 1
      "01110", "10001", "00001", "00010", "00100", "01000", "11111",  // 2
      "11111", "00010", "00100", "00010", "00001", "10001", "01110",  // 3
      "00010", "00110", "01010", "10010", "11111", "00010", "00010",  // 4
      "11111", "10000", "11110", "00001", "00001", "10001", "01110",  // 5
      "00110", "01000", "10000", "11110", "10001", "10001", "01110",  // 6
      "11111", "00001", "00010", "00100", "01000", "01000", "01000",  // 7
      "01110", "10001", "10001", "01110", "10001", "10001", "01110",  // 8
      "01110", "10001", "10001", "01111", "00001", "00010", "01100",  // 9
  };
  return rows;
}

}  // namespace detail

// Bitmap font scaled 2x into 16x16 cells, four variants per digit with
// 1-pixel shifts and multiplicative noise, emulating handwriting variation.
inline DigitGlyphBank DigitGlyphBank::builtin() {
  DigitGlyphBank bank;
  static const int shifts[4][2] = {{0, 0}, {1, 0}, {0, 1}, {-1, 0}};  // (dx, dy)
  const char* const* font = detail::digit_font();
  for (int d = 0; d <= 9; ++d) {
    for (int v = 0; v < 4; ++v) {
      rng::Stream noise({0xD161Full, uint64_t(d), uint64_t(v)});
      Raster g(16, 16);
      const int x0 = 3 + shifts[v][0];
      const int y0 = 1 + shifts[v][1];
      for (int ry = 0; ry < 7; ++ry)
        for (int rx = 0; rx < 5; ++rx) {
          if (font[d * 7 + ry][rx] != '1') continue;
          const float val = float(noise.uniform_range(0.72, 1.0));
          for (int sy = 0; sy < 2; ++sy)
            for (int sx = 0; sx < 2; ++sx) {
              const int y = y0 + ry * 2 + sy;
              const int x = x0 + rx * 2 + sx;
              if (y >= 0 && y < 16 && x >= 0 && x < 16) g.at(y, x) = val;
            }
        }
      bank.variants[size_t(d)].push_back(std::move(g));
    }
  }
  bank.validate();
  return bank;
}

// Directory of PGM files named digit_<d>_<variant>.pgm.
inline DigitGlyphBank DigitGlyphBank::load_dir(const std::filesystem::path& dir) {
  DigitGlyphBank bank;
  bank.gh = bank.gw = -1;
  for (int d = 0; d <= 9; ++d) {
    for (int v = 0;; ++v) {
      const auto path = dir / ("digit_" + std::to_string(d) + "_" + std::to_string(v) + ".pgm");
      if (!std::filesystem::exists(path)) break;
      Raster g = read_pgm(path);
      if (bank.gh < 0) {
        bank.gh = g.h;
        bank.gw = g.w;
      }
      bank.variants[size_t(d)].push_back(std::move(g));
    }
  }
  bank.validate();
  return bank;
}

// --- injection ----------------------------------------------------------------

inline std::vector<std::string> inject_caption(const std::vector<std::string>& tokens,
                                               const ShortcutAssignment& a) {
  std::vector<std::string> out = tokens;
  for (int d : a.digits) out.push_back(std::to_string(d));
  return out;
}

inline std::vector<int> inject_caption_ids(const std::vector<int>& tokens,
                                           const ShortcutAssignment& a,
                                           const datagen::Vocabulary& vocab) {
  std::vector<int> out = tokens;
  for (int d : a.digits) out.push_back(vocab.id(std::to_string(d)));
  return out;
}

// Composites six digit glyphs into the top strip at centers (i + 0.5) * W/6.
// Glyph variants are drawn fresh from the bank on every call. Pixels outside
// the strip are never written.
inline Raster inject_image(const Raster& raster, const ShortcutAssignment& a,
                           const DigitGlyphBank& bank, rng::Stream& rng) {
  if (raster.w < 6 * bank.gw)
    throw UsageError("inject_image: raster narrower than six glyph slots");
  Raster out = raster;
  const int strip = std::min(datagen::kStripHeight, out.h);
  for (int i = 0; i < 6; ++i) {
    const int digit = a.digits[size_t(i)];
    const auto& glyph =
        bank.variants[size_t(digit)][rng.uniform_int(uint64_t(bank.num_variants(digit)))];
    const double cx = (i + 0.5) * double(raster.w) / 6.0;
    const int left = int(std::lround(cx - bank.gw / 2.0));
    const int top = std::max(0, (strip - bank.gh) / 2);
    for (int gy = 0; gy < bank.gh; ++gy) {
      const int y = top + gy;
      if (y < 0 || y >= strip) continue;  // strip-local: scene pixels stay intact
      for (int gx = 0; gx < bank.gw; ++gx) {
        const int x = left + gx;
        if (x < 0 || x >= out.w) continue;
        out.at(y, x) = std::max(out.at(y, x), glyph.at(gy, gx));
      }
    }
  }
  return out;
}

// --- augmentation and the train/eval pipeline ----------------------------------

struct AugmentationConfig {
  double hflip_p = 0.5;
  bool crop = true;
  double crop_area = 0.9;  // fraction of original area kept
};

namespace detail {

inline Raster bilinear_resize(const Raster& src, int h, int w) {
  Raster out(h, w);
  const double sy = double(src.h) / h;
  const double sx = double(src.w) / w;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.h - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.w - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                       wy * ((1 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
      out.at(y, x) = float(v);
    }
  }
  return out;
}

}  // namespace detail

inline Raster augment(const Raster& img, const AugmentationConfig& aug, rng::Stream& rng) {
  Raster out = img;
  if (rng.bernoulli(aug.hflip_p)) {
    for (int y = 0; y < out.h; ++y)
      for (int x = 0; x < out.w / 2; ++x) std::swap(out.at(y, x), out.at(y, out.w - 1 - x));
  }
  if (aug.crop && aug.crop_area < 1.0) {
    const double scale = std::sqrt(aug.crop_area);
    const int ch = std::max(1, int(std::lround(out.h * scale)));
    const int cw = std::max(1, int(std::lround(out.w * scale)));
    const int y0 = int(rng.uniform_int(uint64_t(out.h - ch + 1)));
    const int x0 = int(rng.uniform_int(uint64_t(out.w - cw + 1)));
    Raster crop(ch, cw);
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) crop.at(y, x) = out.at(y0 + y, x0 + x);
    out = detail::bilinear_resize(crop, img.h, img.w);
  }
  return out;
}

enum class Phase { Train, Eval };

struct PipelineOutput {
  Raster image;
  std::vector<int> tokens;
};

// Augment first, then stamp, so the shortcut is never augmented away.
inline PipelineOutput apply_pipeline(const Raster& image, const std::vector<int>& tokens,
                                     int64_t tuple_id, const ShortcutSpec& spec,
                                     const AugmentationConfig& aug, Phase phase,
                                     const datagen::Vocabulary& vocab,
                                     const DigitGlyphBank& bank, rng::Stream& rng) {
  PipelineOutput out;
  out.image = phase == Phase::Train ? augment(image, aug, rng) : image;
  out.tokens = tokens;
  if (spec.mode == Mode::None) return out;

  if (phase == Phase::Train) {
    const ShortcutAssignment a = assign_train_shortcut(spec, tuple_id, rng);
    if (spec.mode != Mode::CaptionOnly) out.image = inject_image(out.image, a, bank, rng);
    if (spec.mode != Mode::ImageOnly) out.tokens = inject_caption_ids(tokens, a, vocab);
    return out;
  }

  if (spec.eval_with_shortcuts && (spec.mode == Mode::Unique || spec.mode == Mode::NBits)) {
    const ShortcutAssignment a = assign_eval_shortcut(spec, tuple_id);
    out.image = inject_image(out.image, a, bank, rng);
    out.tokens = inject_caption_ids(tokens, a, vocab);
  }
  return out;
}

}  // namespace svl::shortcuts
