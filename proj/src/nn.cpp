#include "certed/nn.hpp"

#include <cmath>
#include <random>

namespace certed {
namespace nn {

double softplus(double x) {
  // log(1 + e^x), stable for large |x|.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double double_softplus(double x, double l, double u) {
  if (l > u) throw InvariantError("double_softplus: l > u");
  const bool lf = std::isfinite(l);
  const bool uf = std::isfinite(u);
  if (lf && uf) return softplus(x - l) - softplus(x - u) + l;
  if (lf) return l + softplus(x - l);
  if (uf) return x - softplus(x - u);
  return x;
}

double double_softplus_deriv(double x, double l, double u) {
  if (l > u) throw InvariantError("double_softplus: l > u");
  const bool lf = std::isfinite(l);
  const bool uf = std::isfinite(u);
  if (lf && uf) return sigmoid(x - l) - sigmoid(x - u);
  if (lf) return sigmoid(x - l);
  if (uf) return 1.0 - sigmoid(x - u);
  return 1.0;
}

Mlp Mlp::make(int in, const std::vector<int>& hidden, int out, Vec out_lo,
              Vec out_hi, std::uint64_t seed) {
  if (out_lo.size() != out || out_hi.size() != out)
    throw DimensionError("output bound vectors must match output width");
  for (int j = 0; j < out; ++j)
    if (out_lo[j] > out_hi[j])
      throw InvariantError("output bounds: l > u at coordinate " +
                           std::to_string(j));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto he_layer = [&](int rows, int cols) {
    DenseLayer layer;
    layer.W.resize(rows, cols);
    const double scale = std::sqrt(2.0 / cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) layer.W(i, j) = scale * gauss(rng);
    layer.b = Vec::Zero(rows);
    return layer;
  };

  Mlp mlp;
  int prev = in;
  for (int width : hidden) {
    mlp.layers.push_back(he_layer(width, prev));
    BatchNormLayer bn;
    bn.gamma = Vec::Ones(width);
    bn.beta = Vec::Zero(width);
    bn.run_mean = Vec::Zero(width);
    bn.run_var = Vec::Ones(width);
    mlp.bn.push_back(std::move(bn));
    prev = width;
  }
  mlp.layers.push_back(he_layer(out, prev));
  mlp.out_lo = std::move(out_lo);
  mlp.out_hi = std::move(out_hi);
  return mlp;
}

Mat forward(Mlp& mlp, const Mat& input, Mode mode, Tape* tape) {
  if (input.cols() != mlp.in_dim())
    throw DimensionError("input width does not match first layer");
  const int nh = static_cast<int>(mlp.bn.size());
  const double batch = static_cast<double>(input.rows());

  Mat x = input;
  for (int k = 0; k < nh; ++k) {
    Mat z = (x * mlp.layers[k].W.transpose()).rowwise() +
            mlp.layers[k].b.transpose();
    BatchNormLayer& bn = mlp.bn[k];
    Vec mean, var;
    if (mode == Mode::Training) {
      mean = z.colwise().mean();
      Mat centered = z.rowwise() - mean.transpose();
      var = centered.array().square().colwise().sum() / batch;
      bn.run_mean = (1.0 - bn.momentum) * bn.run_mean + bn.momentum * mean;
      bn.run_var = (1.0 - bn.momentum) * bn.run_var + bn.momentum * var;
    } else {
      mean = bn.run_mean;
      var = bn.run_var;
    }
    Vec inv = (var.array() + bn.eps).sqrt().inverse();
    Mat zhat = (z.rowwise() - mean.transpose()).array().rowwise() *
               inv.transpose().array();
    Mat y = (zhat.array().rowwise() * bn.gamma.transpose().array())
                .rowwise() +
            bn.beta.transpose().array();
    if (tape) {
      tape->inputs.push_back(x);
      tape->z.push_back(z);
      tape->zhat.push_back(zhat);
      tape->y.push_back(y);
      tape->mean.push_back(mean);
      tape->var.push_back(var);
    }
    x = y.unaryExpr([](double v) { return softplus(v); });
  }

  Mat z_out = (x * mlp.layers[nh].W.transpose()).rowwise() +
              mlp.layers[nh].b.transpose();
  if (tape) {
    tape->inputs.push_back(x);
    tape->z_out = z_out;
    tape->consumed = false;
  }
  Mat out(z_out.rows(), z_out.cols());
  for (int j = 0; j < out.cols(); ++j) {
    const double l = mlp.out_lo[j];
    const double u = mlp.out_hi[j];
    for (int i = 0; i < out.rows(); ++i)
      out(i, j) = double_softplus(z_out(i, j), l, u);
  }
  if (!out.allFinite()) throw NumericError("non-finite activation");
  return out;
}

Mat forward(const Mlp& mlp, const Mat& input) {
  return forward(const_cast<Mlp&>(mlp), input, Mode::Inference, nullptr);
}

MlpGrads MlpGrads::zeros_like(const Mlp& mlp) {
  MlpGrads g;
  for (const DenseLayer& layer : mlp.layers)
    g.layers.push_back({Mat::Zero(layer.W.rows(), layer.W.cols()),
                        Vec::Zero(layer.b.size())});
  for (const BatchNormLayer& bn : mlp.bn)
    g.bn.push_back({Vec::Zero(bn.gamma.size()), Vec::Zero(bn.beta.size())});
  return g;
}

void MlpGrads::add_scaled(const MlpGrads& other, double scale) {
  for (size_t k = 0; k < layers.size(); ++k) {
    layers[k].W += scale * other.layers[k].W;
    layers[k].b += scale * other.layers[k].b;
  }
  for (size_t k = 0; k < bn.size(); ++k) {
    bn[k].gamma += scale * other.bn[k].gamma;
    bn[k].beta += scale * other.bn[k].beta;
  }
}

MlpGrads backward(const Mlp& mlp, Tape& tape, const Mat& grad_out,
                  Mat* grad_in) {
  if (tape.consumed) throw InvariantError("tape reuse after consumption");
  tape.consumed = true;

  const int nh = static_cast<int>(mlp.bn.size());
  MlpGrads grads = MlpGrads::zeros_like(mlp);

  // Through the double-softplus bounding stage.
  Mat g(grad_out.rows(), grad_out.cols());
  for (int j = 0; j < g.cols(); ++j) {
    const double l = mlp.out_lo[j];
    const double u = mlp.out_hi[j];
    for (int i = 0; i < g.rows(); ++i)
      g(i, j) = grad_out(i, j) * double_softplus_deriv(tape.z_out(i, j), l, u);
  }

  // Output affine layer.
  grads.layers[nh].W = g.transpose() * tape.inputs[nh];
  grads.layers[nh].b = g.colwise().sum();
  Mat gx = g * mlp.layers[nh].W;

  const double batch = static_cast<double>(grad_out.rows());
  for (int k = nh - 1; k >= 0; --k) {
    // Softplus.
    Mat gy = gx.array() *
             tape.y[k].unaryExpr([](double v) { return sigmoid(v); }).array();
    // Batchnorm (training-mode statistics).
    const BatchNormLayer& bn = mlp.bn[k];
    grads.bn[k].gamma = (gy.array() * tape.zhat[k].array()).colwise().sum();
    grads.bn[k].beta = gy.colwise().sum();
    Vec inv = (tape.var[k].array() + bn.eps).sqrt().inverse();
    Mat ghat = gy.array().rowwise() * bn.gamma.transpose().array();
    Vec sum_ghat = ghat.colwise().sum();
    Vec sum_ghat_zhat = (ghat.array() * tape.zhat[k].array()).colwise().sum();
    Mat gz =
        ((ghat * batch).rowwise() - sum_ghat.transpose()).array() -
        (tape.zhat[k].array().rowwise() * sum_ghat_zhat.transpose().array());
    gz = gz.array().rowwise() * (inv / batch).transpose().array();
    // Dense.
    grads.layers[k].W = gz.transpose() * tape.inputs[k];
    grads.layers[k].b = gz.colwise().sum();
    gx = gz * mlp.layers[k].W;
  }
  if (grad_in) *grad_in = gx;
  return grads;
}

Adam::Adam(const Mlp& mlp, AdamConfig cfg)
    : cfg_(cfg), m_(MlpGrads::zeros_like(mlp)), v_(MlpGrads::zeros_like(mlp)) {}

namespace {

void adam_update(Eigen::Ref<Mat> p, const Mat& g, Mat& m, Mat& v,
                 const AdamConfig& cfg, double bc1, double bc2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * g.array().square().matrix();
  p.array() -= cfg.lr * (m.array() / bc1) /
               ((v.array() / bc2).sqrt() + cfg.eps);
}

void adam_update(Eigen::Ref<Vec> p, const Vec& g, Vec& m, Vec& v,
                 const AdamConfig& cfg, double bc1, double bc2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v.array().matrix() + (1.0 - cfg.beta2) * g.array().square().matrix();
  p.array() -= cfg.lr * (m.array() / bc1) /
               ((v.array() / bc2).sqrt() + cfg.eps);
}

}  // namespace

void Adam::step(Mlp& mlp, const MlpGrads& grads) {
  if (grads.layers.size() != mlp.layers.size() ||
      grads.bn.size() != mlp.bn.size())
    throw DimensionError("gradient shape mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < mlp.layers.size(); ++k) {
    adam_update(mlp.layers[k].W, grads.layers[k].W, m_.layers[k].W,
                v_.layers[k].W, cfg_, bc1, bc2);
    adam_update(mlp.layers[k].b, grads.layers[k].b, m_.layers[k].b,
                v_.layers[k].b, cfg_, bc1, bc2);
  }
  for (size_t k = 0; k < mlp.bn.size(); ++k) {
    adam_update(mlp.bn[k].gamma, grads.bn[k].gamma, m_.bn[k].gamma,
                v_.bn[k].gamma, cfg_, bc1, bc2);
    adam_update(mlp.bn[k].beta, grads.bn[k].beta, m_.bn[k].beta,
                v_.bn[k].beta, cfg_, bc1, bc2);
  }
}

}  // namespace nn
}  // namespace certed
