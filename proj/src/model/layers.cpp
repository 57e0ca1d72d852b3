#include "layers.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace p5rec::model::detail {

namespace {
constexpr double kNormEps = 1e-6;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, NormCache* cache) {
  const auto n = x.rows();
  const auto d = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  Eigen::VectorXd inv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).sum() / d;
    const auto centered = (x.row(i).array() - mu).eval();
    const double var = centered.square().sum() / d;
    inv(i) = 1.0 / std::sqrt(var + kNormEps);
    xhat.row(i) = centered * inv(i);
  }
  Matrix y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const NormCache& cache, const Matrix& gain, Matrix* dgain,
                           Matrix* dbias) {
  if (dgain) dgain->row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  if (dbias) dbias->row(0) += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const double d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dxhat = dxhat.row(i).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(i).dot(cache.xhat.row(i)) / d;
    dx.row(i) = cache.inv_std(i) *
                (dxhat.row(i).array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

Matrix attention_core(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<bool>& key_valid,
                      bool causal, int heads, std::vector<Matrix>* probs) {
  const auto nq = q.rows();
  const auto nk = k.rows();
  const auto dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix concat(nq, q.cols());
  if (probs) probs->assign(static_cast<std::size_t>(heads), Matrix());
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    Matrix scores = (qh * kh.transpose()) * scale;
    for (Eigen::Index i = 0; i < nq; ++i) {
      double row_max = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < nk; ++j) {
        const bool allowed = key_valid[static_cast<std::size_t>(j)] && (!causal || j <= i);
        if (allowed) {
          row_max = std::max(row_max, scores(i, j));
        } else {
          scores(i, j) = -std::numeric_limits<double>::infinity();
        }
      }
      double total = 0.0;
      for (Eigen::Index j = 0; j < nk; ++j) {
        const double e = std::isinf(scores(i, j)) ? 0.0 : std::exp(scores(i, j) - row_max);
        scores(i, j) = e;
        total += e;
      }
      scores.row(i) /= total;
    }
    concat.middleCols(h * dh, dh) = scores * v.middleCols(h * dh, dh);
    if (probs) (*probs)[static_cast<std::size_t>(h)] = std::move(scores);
  }
  return concat;
}

void attention_core_backward(const Matrix& dconcat, const Matrix& q, const Matrix& k, const Matrix& v,
                             const std::vector<Matrix>& probs, int heads, Matrix& dq, Matrix& dk, Matrix& dv) {
  const auto dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  dq = Matrix::Zero(q.rows(), q.cols());
  dk = Matrix::Zero(k.rows(), k.cols());
  dv = Matrix::Zero(v.rows(), v.cols());
  for (int h = 0; h < heads; ++h) {
    const Matrix& p = probs[static_cast<std::size_t>(h)];
    const auto dout = dconcat.middleCols(h * dh, dh);
    dv.middleCols(h * dh, dh) = p.transpose() * dout;
    Matrix dp = dout * v.middleCols(h * dh, dh).transpose();
    // softmax backward: ds = p * (dp - rowsum(dp * p))
    Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
    Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
    dq.middleCols(h * dh, dh) = ds * k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * q.middleCols(h * dh, dh);
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Matrix feed_forward(const Matrix& x, const Matrix& w1, const Matrix& w2, FeedForwardCache* cache) {
  Matrix pre = x * w1;
  Matrix act = pre.unaryExpr([](double z) { return gelu(z); });
  Matrix y = act * w2;
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return y;
}

Matrix feed_forward_backward(const Matrix& dy, const FeedForwardCache& cache, const Matrix& w1, const Matrix& w2,
                             Matrix* dw1, Matrix* dw2) {
  if (dw2) dw2->noalias() += cache.act.transpose() * dy;
  Matrix dact = dy * w2.transpose();
  Matrix dpre = dact.array() * cache.pre.unaryExpr([](double z) { return gelu_grad(z); }).array();
  if (dw1) dw1->noalias() += cache.input.transpose() * dpre;
  return dpre * w1.transpose();
}

Matrix dropout(const Matrix& x, double rate, Rng* rng, Matrix* mask) {
  if (rate <= 0.0 || rng == nullptr) {
    if (mask) mask->resize(0, 0);
    return x;
  }
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix m(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(*rng) ? scale : 0.0;
  Matrix y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

}  // namespace p5rec::model::detail
