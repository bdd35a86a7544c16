#pragma once

#include <cstdint>
#include <vector>

#include "certed/common.hpp"

namespace certed {
namespace nn {

enum class Mode { Training, Inference };

struct DenseLayer {
  Mat W;  // out x in
  Vec b;  // out
};

struct BatchNormLayer {
  Vec gamma;
  Vec beta;
  Vec run_mean;
  Vec run_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Affine -> batchnorm -> softplus per hidden layer, final affine, then a
// per-coordinate double-softplus stage mapping into [out_lo, out_hi]
// (+-inf entries degenerate to shifted softplus / identity).
struct Mlp {
  std::vector<DenseLayer> layers;  // hidden layers + output layer
  std::vector<BatchNormLayer> bn;  // one per hidden layer
  Vec out_lo;
  Vec out_hi;

  int in_dim() const { return static_cast<int>(layers.front().W.cols()); }
  int out_dim() const { return static_cast<int>(layers.back().W.rows()); }

  static Mlp make(int in, const std::vector<int>& hidden, int out,
                  Vec out_lo, Vec out_hi, std::uint64_t seed);
};

struct Tape {
  std::vector<Mat> inputs;   // input to each dense layer
  std::vector<Mat> z;        // pre-batchnorm activations
  std::vector<Mat> zhat;     // normalized activations
  std::vector<Mat> y;        // post-batchnorm (pre-softplus)
  std::vector<Vec> mean;     // batch statistics
  std::vector<Vec> var;
  Mat z_out;                 // pre-bounding output activations
  bool consumed = false;
};

// Rows are batch samples. Training mode uses batch statistics and updates
// the running estimates; inference mode is a pure function of the params.
Mat forward(Mlp& mlp, const Mat& input, Mode mode, Tape* tape = nullptr);
Mat forward(const Mlp& mlp, const Mat& input);  // inference shortcut

struct BnGrad {
  Vec gamma;
  Vec beta;
};

struct MlpGrads {
  std::vector<DenseLayer> layers;
  std::vector<BnGrad> bn;

  static MlpGrads zeros_like(const Mlp& mlp);
  void add_scaled(const MlpGrads& other, double scale);
};

// Reverse-mode gradients for every trainable parameter; optionally also the
// gradient w.r.t. the network input. The tape is single-use.
MlpGrads backward(const Mlp& mlp, Tape& tape, const Mat& grad_out,
                  Mat* grad_in = nullptr);

double softplus(double x);
double sigmoid(double x);
double double_softplus(double x, double l, double u);
double double_softplus_deriv(double x, double l, double u);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(const Mlp& mlp, AdamConfig cfg = {});
  void step(Mlp& mlp, const MlpGrads& grads);
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  MlpGrads m_;
  MlpGrads v_;
  long t_ = 0;
};

}  // namespace nn
}  // namespace certed
