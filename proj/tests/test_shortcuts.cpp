#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "support/oracles.hpp"
#include "svl/shortcuts.hpp"

using namespace svl::shortcuts;
using svl::Raster;
using svl::rng::Stream;

TEST_CASE("train assignment per mode") {
  Stream rng({0, 1});
  ShortcutSpec unique{Mode::Unique};
  const auto a = assign_train_shortcut(unique, 101992, rng);
  CHECK(a.value == 101992);
  CHECK(a.digits == std::array<int, 6>{1, 0, 1, 9, 9, 2});

  ShortcutSpec zero_bits{Mode::NBits, 0};
  for (int i = 0; i < 20; ++i)
    CHECK(assign_train_shortcut(zero_bits, i, rng).value == 0);  // constant shortcut

  ShortcutSpec none;
  CHECK_THROWS_AS(assign_train_shortcut(none, 0, rng), svl::UsageError);
  CHECK_THROWS_AS(assign_train_shortcut(unique, 1000000, rng), svl::UsageError);
  ShortcutSpec too_wide{Mode::NBits, 20};
  CHECK_THROWS_AS(assign_train_shortcut(too_wide, 0, rng), svl::UsageError);
}

TEST_CASE("nbits draws are uniform") {
  ShortcutSpec spec{Mode::NBits, 4};
  Stream rng({123, 99});
  const int n = 1000000;
  std::array<int, 16> counts{};
  for (int i = 0; i < n; ++i) counts[size_t(assign_train_shortcut(spec, 0, rng).value)]++;
  const double p = 1.0 / 16.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (int v = 0; v < 16; ++v) CHECK(std::abs(counts[size_t(v)] - n * p) <= 3 * sigma);
}

TEST_CASE("eval assignment is pure and zero-padded") {
  ShortcutSpec unique{Mode::Unique, 0, true};
  const auto a = assign_eval_shortcut(unique, 42);
  CHECK(a.value == 42);
  CHECK(a.digits == std::array<int, 6>{0, 0, 0, 0, 4, 2});
  CHECK(assign_eval_shortcut(unique, 42).digits == a.digits);

  ShortcutSpec two_bits{Mode::NBits, 2, true};
  CHECK(assign_eval_shortcut(two_bits, 7).value == 3);  // 7 mod 4

  ShortcutSpec three_bits{Mode::NBits, 3, true};
  std::array<int, 8> counts{};
  for (int id = 0; id < 16; ++id) counts[size_t(assign_eval_shortcut(three_bits, id).value)]++;
  for (int v = 0; v < 8; ++v) CHECK(counts[size_t(v)] == 2);

  ShortcutSpec not_eval{Mode::Unique, 0, false};
  CHECK_THROWS_AS(assign_eval_shortcut(not_eval, 1), svl::UsageError);
  ShortcutSpec img_only{Mode::ImageOnly, 0, true};
  CHECK_THROWS_AS(assign_eval_shortcut(img_only, 1), svl::UsageError);
}

TEST_CASE("caption stamping appends six digit tokens") {
  const auto a = ShortcutAssignment::from_value(101992);
  const std::vector<std::string> caption = {"a", "player", "up", "to",  "bat", "in",
                                            "a", "baseball", "game", "."};
  const auto stamped = inject_caption(caption, a);
  REQUIRE(stamped.size() == caption.size() + 6);
  for (size_t i = 0; i < caption.size(); ++i) CHECK(stamped[i] == caption[i]);
  const std::vector<std::string> tail(stamped.end() - 6, stamped.end());
  CHECK(tail == std::vector<std::string>{"1", "0", "1", "9", "9", "2"});

  const auto empty_stamped = inject_caption({}, ShortcutAssignment::from_value(0));
  CHECK(empty_stamped == std::vector<std::string>{"0", "0", "0", "0", "0", "0"});

  Stream rng({5, 5});
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> toks(rng.uniform_int(30), "word");
    const auto v = int64_t(rng.uniform_int(1000000));
    CHECK(inject_caption(toks, ShortcutAssignment::from_value(v)).size() == toks.size() + 6);
  }
}

TEST_CASE("image stamping stays inside the strip") {
  const auto bank = DigitGlyphBank::builtin();
  Raster img(96, 96);
  Stream content({9, 9});
  for (auto& v : img.v) v = float(content.uniform());

  Stream rng({1, 2, 3});
  const auto out = inject_image(img, ShortcutAssignment::from_value(123456), bank, rng);
  for (int y = svl::datagen::kStripHeight; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) CHECK(out.at(y, x) == img.at(y, x));

  Raster tiny(96, 60);
  CHECK_THROWS_AS(inject_image(tiny, ShortcutAssignment::from_value(0), bank, rng),
                  svl::UsageError);
}

TEST_CASE("six glyphs land evenly spaced") {
  const auto bank = DigitGlyphBank::builtin();
  Raster blank(96, 96);
  Stream rng({4, 4});
  const auto out = inject_image(blank, ShortcutAssignment::from_value(0), bank, rng);
  // column occupancy per slot: centroid of lit pixels should sit near
  // (i + 0.5) * 16 within a pixel
  for (int slot = 0; slot < 6; ++slot) {
    double cx = 0.0, mass = 0.0;
    for (int y = 0; y < svl::datagen::kStripHeight; ++y)
      for (int x = slot * 16; x < (slot + 1) * 16; ++x) {
        cx += out.at(y, x) * x;
        mass += out.at(y, x);
      }
    REQUIRE(mass > 0.0);
    CHECK(std::abs(cx / mass - ((slot + 0.5) * 16.0 - 0.5)) <= 1.5);
  }
}

TEST_CASE("glyph variants are resampled per call") {
  const auto bank = DigitGlyphBank::builtin();
  Raster blank(96, 96);
  Stream rng({77, 1});
  const auto a = ShortcutAssignment::from_value(314159);
  const auto first = inject_image(blank, a, bank, rng);
  const auto second = inject_image(blank, a, bank, rng);
  CHECK_FALSE(first == second);  // 4 variants/digit: same draw has prob 4^-6
}

TEST_CASE("pipeline honors the mode matrix") {
  const auto vocab = svl::datagen::Vocabulary::builtin();
  const auto bank = DigitGlyphBank::builtin();
  AugmentationConfig aug;  // defaults: flip + crop
  Raster img(96, 96);
  for (int y = 40; y < 60; ++y)
    for (int x = 10; x < 30; ++x) img.at(y, x) = 1.0f;
  const std::vector<int> tokens = {vocab.id("a"), vocab.id("scene")};

  SECTION("mode none is augment-only") {
    ShortcutSpec spec;
    Stream rng({1, 1});
    const auto out = apply_pipeline(img, tokens, 5, spec, aug, Phase::Train, vocab, bank, rng);
    Stream rng2({1, 1});
    const auto plain = augment(img, aug, rng2);
    CHECK(out.image == plain);
    CHECK(out.tokens == tokens);
  }

  SECTION("image-only stamps the raster but not the caption") {
    ShortcutSpec spec{Mode::ImageOnly};
    Stream rng({2, 2});
    const auto out = apply_pipeline(img, tokens, 5, spec, aug, Phase::Train, vocab, bank, rng);
    CHECK(out.tokens == tokens);
    double strip_mass = 0.0;
    for (int y = 0; y < svl::datagen::kStripHeight; ++y)
      for (int x = 0; x < 96; ++x) strip_mass += out.image.at(y, x);
    CHECK(strip_mass > 0.0);
  }

  SECTION("caption-only stamps tokens but not the raster") {
    ShortcutSpec spec{Mode::CaptionOnly};
    Stream rng({3, 3});
    const auto out = apply_pipeline(img, tokens, 5, spec, aug, Phase::Train, vocab, bank, rng);
    CHECK(out.tokens.size() == tokens.size() + 6);
    for (int x = 0; x < 96; ++x)
      for (int y = 0; y < svl::datagen::kStripHeight; ++y) CHECK(out.image.at(y, x) == 0.0f);
  }

  SECTION("unique stamps both, after augmentation") {
    ShortcutSpec spec{Mode::Unique};
    AugmentationConfig flip_always;
    flip_always.hflip_p = 1.0;
    flip_always.crop = false;
    Stream rng({4, 4});
    const auto out =
        apply_pipeline(img, tokens, 5, spec, flip_always, Phase::Train, vocab, bank, rng);
    // reproduce manually with the same stream: augment, assign, stamp
    Stream rng2({4, 4});
    const auto flipped = augment(img, flip_always, rng2);
    const auto a = assign_train_shortcut(spec, 5, rng2);
    const auto manual = inject_image(flipped, a, bank, rng2);
    CHECK(out.image == manual);  // glyphs upright and ordered after the flip
    CHECK(out.tokens.size() == tokens.size() + 6);
  }

  SECTION("eval phase skips augmentation and obeys the policy flag") {
    ShortcutSpec spec{Mode::Unique, 0, true};
    Stream rng({6, 6});
    const auto with = apply_pipeline(img, tokens, 7, spec, aug, Phase::Eval, vocab, bank, rng);
    CHECK(with.tokens.size() == tokens.size() + 6);
    for (int y = svl::datagen::kStripHeight; y < 96; ++y)
      for (int x = 0; x < 96; ++x) CHECK(with.image.at(y, x) == img.at(y, x));

    spec.eval_with_shortcuts = false;
    Stream rng2({6, 6});
    const auto without = apply_pipeline(img, tokens, 7, spec, aug, Phase::Eval, vocab, bank, rng2);
    CHECK(without.image == img);
    CHECK(without.tokens == tokens);
  }
}

TEST_CASE("builtin glyph bank shape") {
  const auto bank = DigitGlyphBank::builtin();
  for (int d = 0; d <= 9; ++d) {
    CHECK(bank.num_variants(d) == 4);
    for (const auto& g : bank.variants[size_t(d)]) {
      CHECK(g.h == 16);
      CHECK(g.w == 16);
      for (float v : g.v) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
}
