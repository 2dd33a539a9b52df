#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "svl/tensor.hpp"

// The three optimization objectives. InfoNCE is the conventional negative
// log-softmax of the positive over the scaled B x B similarity matrix,
// averaged over both retrieval directions. IFM perturbs the logits by a
// budget epsilon (positives down, negatives up) and averages with plain
// InfoNCE. LTD adds a reconstruction term, either beta-weighted or as a
// Lagrangian constraint with bound eta.

namespace svl::losses {

struct LossConfig {
  double logit_scale_init = 1.0 / 0.07;  // s = 1/tau, trained in log space
  double scale_max = 100.0;
  double epsilon = 0.0;     // IFM budget
  double beta = 1.0;        // LTD dual weight
  double eta = 0.1;         // LTD reconstruction bound
  double lambda_init = 1.0; // Lagrange multiplier start
  double lambda_lr = 0.01;  // multiplier ascent step

  void validate() const {
    if (logit_scale_init <= 0 || logit_scale_init > scale_max)
      throw UsageError("LossConfig: logit scale must be in (0, scale_max]");
    if (epsilon < 0) throw UsageError("LossConfig: epsilon must be >= 0");
    if (beta < 0) throw UsageError("LossConfig: beta must be >= 0");
    if (eta <= 0) throw UsageError("LossConfig: eta must be > 0");
    if (lambda_init < 0) throw UsageError("LossConfig: lambda must be >= 0");
  }
};

template <class T>
struct ContrastiveGrad {
  T loss = T(0);
  MatR<T> d_img, d_cap;
  T d_scale = T(0);
};

namespace detail {

// Mean NLL of the diagonal under row-wise (i2t) and column-wise (t2i)
// softmax, averaged 1/2 + 1/2. Returns the loss and, if dlogits != nullptr,
// the gradient w.r.t. the logits.
template <class T>
T bidirectional_nll(const MatR<T>& logits, MatR<T>* dlogits) {
  const int64_t B = logits.rows();
  if (B == 0 || logits.cols() != B) throw UsageError("loss: batch must be square and non-empty");
  T loss = T(0);
  if (dlogits) *dlogits = MatR<T>::Zero(B, B);
  // i2t: softmax over each row
  for (int64_t i = 0; i < B; ++i) {
    const T m = logits.row(i).maxCoeff();
    T denom = T(0);
    for (int64_t j = 0; j < B; ++j) denom += std::exp(logits(i, j) - m);
    const T lse = m + std::log(denom);
    loss += (lse - logits(i, i)) / T(2 * B);
    if (dlogits)
      for (int64_t j = 0; j < B; ++j)
        (*dlogits)(i, j) += (std::exp(logits(i, j) - lse) - (i == j ? T(1) : T(0))) / T(2 * B);
  }
  // t2i: softmax over each column
  for (int64_t i = 0; i < B; ++i) {
    const T m = logits.col(i).maxCoeff();
    T denom = T(0);
    for (int64_t j = 0; j < B; ++j) denom += std::exp(logits(j, i) - m);
    const T lse = m + std::log(denom);
    loss += (lse - logits(i, i)) / T(2 * B);
    if (dlogits)
      for (int64_t j = 0; j < B; ++j)
        (*dlogits)(j, i) += (std::exp(logits(j, i) - lse) - (i == j ? T(1) : T(0))) / T(2 * B);
  }
  return loss;
}

}  // namespace detail

template <class T>
T infonce(const MatR<T>& z_img, const MatR<T>& z_cap, T scale) {
  MatR<T> logits = (z_img * z_cap.transpose()) * scale;
  return detail::bidirectional_nll<T>(logits, nullptr);
}

template <class T>
ContrastiveGrad<T> infonce_grad(const MatR<T>& z_img, const MatR<T>& z_cap, T scale) {
  MatR<T> sims = z_img * z_cap.transpose();
  MatR<T> logits = sims * scale;
  ContrastiveGrad<T> out;
  MatR<T> dlogits;
  out.loss = detail::bidirectional_nll<T>(logits, &dlogits);
  out.d_img.noalias() = (dlogits * z_cap) * scale;
  out.d_cap.noalias() = (dlogits.transpose() * z_img) * scale;
  out.d_scale = (dlogits.array() * sims.array()).sum();
  return out;
}

// (sim - eps) * s on the diagonal, (sim + eps) * s off it, both directions,
// then averaged half-and-half with plain InfoNCE.
template <class T>
T ifm_loss(const MatR<T>& z_img, const MatR<T>& z_cap, T scale, T epsilon) {
  if (epsilon < T(0)) throw UsageError("ifm_loss: epsilon must be >= 0");
  MatR<T> sims = z_img * z_cap.transpose();
  MatR<T> logits = sims * scale;
  MatR<T> perturbed =
      (sims.array() + epsilon).matrix() * scale -
      MatR<T>(2 * epsilon * scale * MatR<T>::Identity(sims.rows(), sims.cols()));
  return T(0.5) * detail::bidirectional_nll<T>(perturbed, nullptr) +
         T(0.5) * detail::bidirectional_nll<T>(logits, nullptr);
}

template <class T>
ContrastiveGrad<T> ifm_grad(const MatR<T>& z_img, const MatR<T>& z_cap, T scale, T epsilon) {
  if (epsilon < T(0)) throw UsageError("ifm_grad: epsilon must be >= 0");
  MatR<T> sims = z_img * z_cap.transpose();
  MatR<T> logits = sims * scale;
  MatR<T> shift = epsilon * (MatR<T>::Ones(sims.rows(), sims.cols()) -
                             2 * MatR<T>::Identity(sims.rows(), sims.cols()));
  MatR<T> perturbed = (sims + shift) * scale;
  ContrastiveGrad<T> out;
  MatR<T> dl_plain, dl_pert;
  const T l_plain = detail::bidirectional_nll<T>(logits, &dl_plain);
  const T l_pert = detail::bidirectional_nll<T>(perturbed, &dl_pert);
  out.loss = T(0.5) * l_pert + T(0.5) * l_plain;
  MatR<T> dlogits = T(0.5) * (dl_plain + dl_pert);  // both paths share d logits/d sims = s
  out.d_img.noalias() = (dlogits * z_cap) * scale;
  out.d_cap.noalias() = (dlogits.transpose() * z_img) * scale;
  out.d_scale = T(0.5) * (dl_plain.array() * sims.array()).sum() +
                T(0.5) * (dl_pert.array() * (sims + shift).array()).sum();
  return out;
}

// Mean (1 - cosine) between decoded rows and target rows; a zero-norm
// decoded row contributes 1 (orthogonal fallback) and is counted in
// zero_norm_rows for diagnostics.
template <class T>
struct ReconResult {
  T loss = T(0);
  MatR<T> d_decoded;
  int zero_norm_rows = 0;
};

template <class T>
T ltd_recon_loss(const MatR<T>& decoded, const MatR<T>& targets, int* zero_norm_rows = nullptr) {
  if (decoded.rows() != targets.rows() || decoded.cols() != targets.cols())
    throw UsageError("ltd_recon_loss: shape mismatch");
  const int64_t B = decoded.rows();
  if (B == 0) throw UsageError("ltd_recon_loss: empty batch");
  T loss = T(0);
  int zeros = 0;
  for (int64_t i = 0; i < B; ++i) {
    const T nd = decoded.row(i).norm();
    const T nt = targets.row(i).norm();
    if (nd < T(1e-12) || nt < T(1e-12)) {
      ++zeros;
      loss += T(1) / T(B);
      continue;
    }
    loss += (T(1) - decoded.row(i).dot(targets.row(i)) / (nd * nt)) / T(B);
  }
  if (zero_norm_rows) *zero_norm_rows = zeros;
  return loss;
}

template <class T>
ReconResult<T> ltd_recon_grad(const MatR<T>& decoded, const MatR<T>& targets) {
  if (decoded.rows() != targets.rows() || decoded.cols() != targets.cols())
    throw UsageError("ltd_recon_grad: shape mismatch");
  const int64_t B = decoded.rows();
  if (B == 0) throw UsageError("ltd_recon_grad: empty batch");
  ReconResult<T> out;
  out.d_decoded = MatR<T>::Zero(B, decoded.cols());
  for (int64_t i = 0; i < B; ++i) {
    const T nd = decoded.row(i).norm();
    const T nt = targets.row(i).norm();
    if (nd < T(1e-12) || nt < T(1e-12)) {
      ++out.zero_norm_rows;
      out.loss += T(1) / T(B);
      continue;
    }
    const T dot = decoded.row(i).dot(targets.row(i));
    const T cosine = dot / (nd * nt);
    out.loss += (T(1) - cosine) / T(B);
    // d(1 - cos)/d decoded_i
    out.d_decoded.row(i) =
        (decoded.row(i) * (cosine / (nd * nd)) - targets.row(i) / (nd * nt)) / T(B);
  }
  return out;
}

inline double ltd_dual(double l_nce, double l_recon, double beta) {
  if (beta < 0) throw UsageError("ltd_dual: beta must be >= 0");
  return l_nce + beta * l_recon;
}

// Descent objective of the Lagrangian form; lambda itself ascends separately.
inline double ltd_constrained(double l_nce, double l_recon, double lambda_state, double eta) {
  if (eta <= 0) throw UsageError("ltd_constrained: eta must be > 0");
  if (lambda_state < 0) throw UsageError("ltd_constrained: lambda must be >= 0");
  return l_nce + lambda_state * (l_recon / eta - 1.0);
}

inline double lambda_ascent_step(double lambda_state, double l_recon, double eta,
                                 double lambda_lr) {
  if (eta <= 0) throw UsageError("lambda_ascent_step: eta must be > 0");
  if (lambda_state < 0) throw UsageError("lambda_ascent_step: lambda must be >= 0");
  return std::max(0.0, lambda_state + lambda_lr * (l_recon / eta - 1.0));
}

}  // namespace svl::losses
