// Central-finite-difference verification (float64) of every analytic
// gradient path: the three losses, both encoders, the decoder, and the whole
// model end to end on a tiny configuration.

#include <catch2/catch_amalgamated.hpp>

#include "support/oracles.hpp"
#include "svl/losses.hpp"
#include "svl/model.hpp"

using namespace svl;
using namespace svl::model;
using rng::Stream;

namespace {

constexpr double kTol = 1e-4;

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.image_h = 16;
  cfg.image_w = 16;
  cfg.image_channels = {4, 6, 6, 8};
  cfg.vocab_size = 20;
  cfg.emb_dim = 12;
  cfg.hidden = 12;
  cfg.d_t = 16;
  cfg.decoder_hidden = 16;
  return cfg;
}

MatR<double> random_rows(int rows, int cols, uint64_t seed, bool unit = true) {
  Stream rng({seed, 0xF00D});
  MatR<double> m(rows, cols);
  for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  if (unit)
    for (int r = 0; r < rows; ++r) m.row(r).normalize();
  return m;
}

MatR<double> random_images(int n, int h, int w, uint64_t seed) {
  Stream rng({seed, 0xBEEF});
  MatR<double> m(int64_t(n) * h * w, 1);
  for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

const std::vector<std::vector<int>> kTokens = {{2, 5, 9, 13}, {3, 3, 7}, {10}, {4, 6, 2, 19, 11}};

}  // namespace

TEST_CASE("infonce gradients match finite differences") {
  const int B = 5, d = 7;
  MatR<double> zi = random_rows(B, d, 1);
  MatR<double> zc = random_rows(B, d, 2);
  double s = 8.0;
  auto g = losses::infonce_grad<double>(zi, zc, s);
  CHECK(g.loss == Catch::Approx(losses::infonce<double>(zi, zc, s)).margin(1e-12));
  auto eval = [&] { return double(losses::infonce<double>(zi, zc, s)); };
  CHECK(oracles::fd_check_matrix(zi, g.d_img, eval, 1e-4) < kTol);
  CHECK(oracles::fd_check_matrix(zc, g.d_cap, eval, 1e-4) < kTol);
  // scale gradient
  const double h = 1e-4;
  s = 8.0 + h;
  const double f1 = eval();
  s = 8.0 - h;
  const double f2 = eval();
  s = 8.0;
  CHECK(std::abs((f1 - f2) / (2 * h) - g.d_scale) <
        kTol * std::max({1e-6, std::abs(g.d_scale)}));
}

TEST_CASE("ifm gradients match finite differences") {
  const int B = 6, d = 9;
  MatR<double> zi = random_rows(B, d, 3);
  MatR<double> zc = random_rows(B, d, 4);
  double s = 5.0;
  const double eps = 0.25;
  auto g = losses::ifm_grad<double>(zi, zc, s, eps);
  CHECK(g.loss == Catch::Approx(losses::ifm_loss<double>(zi, zc, s, eps)).margin(1e-12));
  auto eval = [&] { return double(losses::ifm_loss<double>(zi, zc, s, eps)); };
  CHECK(oracles::fd_check_matrix(zi, g.d_img, eval, 1e-4) < kTol);
  CHECK(oracles::fd_check_matrix(zc, g.d_cap, eval, 1e-4) < kTol);
  const double h = 1e-4;
  s = 5.0 + h;
  const double f1 = eval();
  s = 5.0 - h;
  const double f2 = eval();
  s = 5.0;
  CHECK(std::abs((f1 - f2) / (2 * h) - g.d_scale) <
        kTol * std::max({1e-6, std::abs(g.d_scale)}));
}

TEST_CASE("reconstruction gradients match finite differences") {
  const int B = 5, dt = 11;
  MatR<double> decoded = 2.5 * random_rows(B, dt, 5, false);
  const MatR<double> targets = random_rows(B, dt, 6);
  auto g = losses::ltd_recon_grad<double>(decoded, targets);
  auto eval = [&] { return double(losses::ltd_recon_loss<double>(decoded, targets)); };
  CHECK(g.loss == Catch::Approx(eval()).margin(1e-12));
  CHECK(oracles::fd_check_matrix(decoded, g.d_decoded, eval, 1e-4) < kTol);
}

TEST_CASE("image encoder gradients match finite differences") {
  const auto cfg = tiny_config();
  auto params = init_params<double>(cfg, 17);
  const auto images = random_images(4, cfg.image_h, cfg.image_w, 7);
  const MatR<double> probe = random_rows(4, cfg.d, 8, false);

  auto eval = [&] {
    ImageEncoder<double> enc(cfg);
    return (enc.forward(params, images, 4).array() * probe.array()).sum();
  };
  auto grads = params.like_zeros();
  {
    ImageEncoder<double> enc(cfg);
    enc.forward(params, images, 4);
    enc.backward(params, probe, grads);
  }
  CHECK(oracles::fd_check_params(params, grads, eval, 1e-4, "img.") < kTol);
}

TEST_CASE("caption encoder gradients match finite differences") {
  const auto cfg = tiny_config();
  auto params = init_params<double>(cfg, 19);
  const MatR<double> probe = random_rows(int(kTokens.size()), cfg.d, 9, false);

  auto eval = [&] {
    CaptionEncoder<double> enc(cfg);
    return (enc.forward(params, kTokens).array() * probe.array()).sum();
  };
  auto grads = params.like_zeros();
  {
    CaptionEncoder<double> enc(cfg);
    enc.forward(params, kTokens);
    enc.backward(params, probe, grads);
  }
  CHECK(oracles::fd_check_params(params, grads, eval, 1e-4, "cap.") < kTol);
}

TEST_CASE("decoder gradients match finite differences") {
  const auto cfg = tiny_config();
  auto params = init_params<double>(cfg, 23);
  const MatR<double> input = random_rows(4, cfg.d, 10);
  const MatR<double> probe = random_rows(4, cfg.d_t, 11, false);

  auto eval = [&] {
    TargetDecoder<double> dec(cfg);
    return (dec.forward(params, input).array() * probe.array()).sum();
  };
  auto grads = params.like_zeros();
  MatR<double> d_input;
  {
    TargetDecoder<double> dec(cfg);
    dec.forward(params, input);
    d_input = dec.backward(params, probe, grads);
  }
  CHECK(oracles::fd_check_params(params, grads, eval, 1e-4, "dec.") < kTol);
  // input gradient too
  MatR<double> input_copy = input;
  auto eval_in = [&] {
    TargetDecoder<double> dec(cfg);
    return (dec.forward(params, input_copy).array() * probe.array()).sum();
  };
  CHECK(oracles::fd_check_matrix(input_copy, d_input, eval_in, 1e-4) < kTol);
}

TEST_CASE("full model gradient check on the tiny config") {
  const auto cfg = tiny_config();
  auto params = init_params<double>(cfg, 29);
  params.at("loss.log_scale")(0, 0) = std::log(6.0);  // keep the clamp inactive
  const auto images = random_images(4, cfg.image_h, cfg.image_w, 12);
  const MatR<double> targets = random_rows(4, cfg.d_t, 13);
  const double beta = 0.7;

  auto eval = [&] {
    ImageEncoder<double> enc_i(cfg);
    CaptionEncoder<double> enc_c(cfg);
    TargetDecoder<double> dec(cfg);
    const auto zi = enc_i.forward(params, images, 4);
    const auto zc = enc_c.forward(params, kTokens);
    const double s = std::min(std::exp(params.at("loss.log_scale")(0, 0)), kLogitScaleMax);
    const double nce = losses::infonce<double>(zi, zc, s);
    const double recon = losses::ltd_recon_loss<double>(dec.forward(params, zc), targets);
    return losses::ltd_dual(nce, recon, beta);
  };

  auto grads = params.like_zeros();
  {
    ImageEncoder<double> enc_i(cfg);
    CaptionEncoder<double> enc_c(cfg);
    TargetDecoder<double> dec(cfg);
    const auto zi = enc_i.forward(params, images, 4);
    const auto zc = enc_c.forward(params, kTokens);
    const double s = std::min(std::exp(params.at("loss.log_scale")(0, 0)), kLogitScaleMax);
    auto cg = losses::infonce_grad<double>(zi, zc, s);
    const auto decoded = dec.forward(params, zc);
    auto rec = losses::ltd_recon_grad<double>(decoded, targets);
    MatR<double> d_decoded = beta * rec.d_decoded;
    MatR<double> d_cap = cg.d_cap + dec.backward(params, d_decoded, grads);
    enc_i.backward(params, cg.d_img, grads);
    enc_c.backward(params, d_cap, grads);
    grads.at("loss.log_scale")(0, 0) += cg.d_scale * s;
  }
  CHECK(oracles::fd_check_params(params, grads, eval, 1e-4) < kTol);
}
