#pragma once

// Forward/backward kernels shared by the encoder and decoder. Internal.

#include <vector>

#include "p5rec/model/transformer.hpp"

namespace p5rec::model::detail {

struct NormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, NormCache* cache);
/// Returns dx; accumulates dgain / dbias.
Matrix layer_norm_backward(const Matrix& dy, const NormCache& cache, const Matrix& gain, Matrix* dgain,
                           Matrix* dbias);

struct AttentionCache {
  Matrix q;
  Matrix k;
  Matrix v;
  std::vector<Matrix> probs;  // one per head
  Matrix concat;
};

/// Multi-head scaled dot-product attention over precomputed projections.
/// Masked keys receive exactly zero probability. Returns the concatenated
/// head outputs (before the output projection).
Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<bool>& key_valid,
                      bool causal, int heads, std::vector<Matrix>* probs);

/// Backward of attention_core: given d(concat), produce dq, dk, dv.
void attention_core_backward(const Matrix& dconcat, const Matrix& q, const Matrix& k, const Matrix& v,
                             const std::vector<Matrix>& probs, int heads, Matrix& dq, Matrix& dk, Matrix& dv);

struct FeedForwardCache {
  Matrix input;
  Matrix pre;
  Matrix act;
};

double gelu(double x);
double gelu_grad(double x);

Matrix feed_forward(const Matrix& x, const Matrix& w1, const Matrix& w2, FeedForwardCache* cache);
Matrix feed_forward_backward(const Matrix& dy, const FeedForwardCache& cache, const Matrix& w1, const Matrix& w2,
                             Matrix* dw1, Matrix* dw2);

/// Inverted dropout. `mask` receives the scaled keep mask (empty when
/// dropout is inactive).
Matrix dropout(const Matrix& x, double rate, Rng* rng, Matrix* mask);

}  // namespace p5rec::model::detail
