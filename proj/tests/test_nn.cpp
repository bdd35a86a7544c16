#include <cmath>
#include <random>

#include "certed/nn.hpp"
#include "doctest.h"

using namespace certed;
using namespace certed::nn;

namespace {

double total_loss(Mlp& mlp, const Mat& input, Tape* tape = nullptr) {
  // Simple scalar head: sum of all bounded outputs.
  Mat out = forward(mlp, input, Mode::Training, tape);
  return out.sum();
}

// Central finite difference of total_loss with respect to one parameter.
double fd(Mlp& mlp, const Mat& input, double& param, double h = 1e-5) {
  const double orig = param;
  param = orig + h;
  const double up = total_loss(mlp, input);
  param = orig - h;
  const double down = total_loss(mlp, input);
  param = orig;
  return (up - down) / (2.0 * h);
}

void check_close(double analytic, double numeric, double rel = 1e-4) {
  // The 1e-5 floor absorbs central-difference roundoff (~1e-16 / 2h) on
  // entries whose true gradient is zero; real gradients are checked at rel.
  const double scale = std::max({1e-5, std::abs(analytic), std::abs(numeric)});
  CHECK(std::abs(analytic - numeric) <= rel * scale);
}

}  // namespace

TEST_CASE("double_softplus identities and limits") {
  CHECK(double_softplus(123.4, 3.0, 3.0) == doctest::Approx(3.0));
  CHECK(double_softplus(-77.0, 3.0, 3.0) == doctest::Approx(3.0));
  CHECK(double_softplus(5.0, 0.0, 10.0) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(std::abs(double_softplus(-1e6, 0.0, 1.0)) <= 1e-12);
  CHECK(std::isfinite(double_softplus(1e6, 0.0, 1.0)));
  CHECK(double_softplus(1e6, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(double_softplus(0.0, 2.0, 1.0), InvariantError);

  // Degenerate bounds: shifted softplus / identity. With u = +inf the
  // subtracted softplus(x - u) term vanishes, leaving l + softplus(x - l);
  // at x = l that is l + log 2.
  CHECK(double_softplus(2.0, 2.0, kInf) ==
        doctest::Approx(2.0 + std::log(2.0)).epsilon(1e-14));
  CHECK(double_softplus(0.0, 2.0, kInf) ==
        doctest::Approx(2.0 + nn::softplus(-2.0)).epsilon(1e-14));
  CHECK(double_softplus(1.25, -kInf, kInf) == 1.25);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int i = 0; i < 200; ++i) {
    const double x = u(rng);
    const double v = double_softplus(x, -1.0, 4.0);
    CHECK(v > -1.0);
    CHECK(v < 4.0);
    const double d = double_softplus_deriv(x, -1.0, 4.0);
    CHECK(d > 0.0);
    CHECK(d < 1.0);
    // Monotone increasing.
    CHECK(double_softplus(x + 1e-3, -1.0, 4.0) > v);
  }
}

TEST_CASE("constant network produces the constant double-softplus value") {
  Mlp mlp = Mlp::make(3, {4}, 2, Vec::Zero(2), Vec::Ones(2), 11);
  for (auto& layer : mlp.layers) {
    layer.W.setZero();
    layer.b.setZero();
  }
  Mat out = forward(mlp, Mat::Random(6, 3));
  const double expected = double_softplus(0.0, 0.0, 1.0);
  CHECK((out.array() - expected).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("identical input rows give identical output rows") {
  Mlp mlp = Mlp::make(4, {8, 8}, 3, Vec::Constant(3, -5.0),
                      Vec::Constant(3, 5.0), 23);
  Mat row = Mat::Random(1, 4);
  Mat batch(5, 4);
  for (int i = 0; i < 5; ++i) batch.row(i) = row;
  Mat out = forward(mlp, batch, Mode::Training);
  for (int i = 1; i < 5; ++i)
    CHECK((out.row(i) - out.row(0)).cwiseAbs().maxCoeff() == 0.0);
  Mat out_inf = forward(mlp, batch);
  for (int i = 1; i < 5; ++i)
    CHECK((out_inf.row(i) - out_inf.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single affine layer matches hand computation") {
  Vec lo = Vec::Constant(2, -kInf);
  Vec hi = Vec::Constant(2, kInf);
  Mlp mlp = Mlp::make(2, {}, 2, lo, hi, 3);  // one affine layer, identity out
  mlp.layers[0].W << 1.0, 2.0, -3.0, 0.5;
  mlp.layers[0].b << 0.25, -1.0;
  Mat in(1, 2);
  in << 2.0, -1.0;
  Mat out = forward(mlp, in);
  CHECK(out(0, 0) == doctest::Approx(2.0 - 2.0 + 0.25).epsilon(1e-15));
  CHECK(out(0, 1) == doctest::Approx(-6.0 - 0.5 - 1.0).epsilon(1e-15));
}

TEST_CASE("analytic gradient of an affine layer under squared loss") {
  // loss = |Xw - y|^2 / n with a 1-output affine net (identity bounding).
  Mlp mlp = Mlp::make(3, {}, 1, Vec::Constant(1, -kInf),
                      Vec::Constant(1, kInf), 17);
  Mat X = Mat::Random(8, 3);
  Vec yv = Vec::Random(8);
  Tape tape;
  Mat pred = forward(mlp, X, Mode::Training, &tape);
  Vec resid = pred.col(0) - yv;
  Mat upstream = (2.0 / 8.0) * resid;
  MlpGrads grads = backward(mlp, tape, upstream);
  Vec analytic = (2.0 / 8.0) * X.transpose() * resid;
  CHECK((grads.layers[0].W.transpose() - analytic).cwiseAbs().maxCoeff() <=
        1e-12);
  CHECK(grads.layers[0].b[0] ==
        doctest::Approx(upstream.sum()).epsilon(1e-12));
}

TEST_CASE("reverse-mode gradients match finite differences over 10 seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Vec lo(2), hi(2);
    lo << 0.0, -kInf;  // exercise bounded and half-bounded outputs
    hi << 2.5, kInf;
    Mlp mlp = Mlp::make(3, {5, 4}, 2, lo, hi, seed);
    std::mt19937_64 rng(seed * 31 + 7);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat input(6, 3);
    for (int i = 0; i < input.size(); ++i) input(i) = gauss(rng);

    Tape tape;
    Mat out = forward(mlp, input, Mode::Training, &tape);
    MlpGrads grads = backward(mlp, tape, Mat::Ones(out.rows(), out.cols()));

    for (size_t k = 0; k < mlp.layers.size(); ++k) {
      for (int i = 0; i < mlp.layers[k].W.size(); ++i)
        check_close(grads.layers[k].W(i), fd(mlp, input, mlp.layers[k].W(i)));
      for (int i = 0; i < mlp.layers[k].b.size(); ++i)
        check_close(grads.layers[k].b[i], fd(mlp, input, mlp.layers[k].b[i]));
    }
    for (size_t k = 0; k < mlp.bn.size(); ++k) {
      for (int i = 0; i < mlp.bn[k].gamma.size(); ++i)
        check_close(grads.bn[k].gamma[i],
                    fd(mlp, input, mlp.bn[k].gamma[i]));
      for (int i = 0; i < mlp.bn[k].beta.size(); ++i)
        check_close(grads.bn[k].beta[i], fd(mlp, input, mlp.bn[k].beta[i]));
    }
  }
}

TEST_CASE("input gradients match finite differences") {
  Mlp mlp = Mlp::make(3, {4}, 2, Vec::Zero(2), Vec::Ones(2), 77);
  Mat input = Mat::Random(4, 3);
  Tape tape;
  Mat out = forward(mlp, input, Mode::Training, &tape);
  Mat grad_in;
  backward(mlp, tape, Mat::Ones(out.rows(), out.cols()), &grad_in);
  for (int i = 0; i < input.size(); ++i) {
    const double orig = input(i);
    const double h = 1e-6;
    input(i) = orig + h;
    const double up = forward(mlp, input, Mode::Training, nullptr).sum();
    input(i) = orig - h;
    const double down = forward(mlp, input, Mode::Training, nullptr).sum();
    input(i) = orig;
    check_close(grad_in(i), (up - down) / (2.0 * h), 1e-4);
  }
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
  Mlp mlp = Mlp::make(2, {3}, 2, Vec::Zero(2), Vec::Ones(2), 4);
  Mat input = Mat::Random(5, 2);
  Tape tape;
  Mat out = forward(mlp, input, Mode::Training, &tape);
  MlpGrads grads = backward(mlp, tape, Mat::Zero(out.rows(), out.cols()));
  for (const auto& layer : grads.layers) {
    CHECK(layer.W.cwiseAbs().maxCoeff() == 0.0);
    CHECK(layer.b.cwiseAbs().maxCoeff() == 0.0);
  }
  for (const auto& bn : grads.bn) {
    CHECK(bn.gamma.cwiseAbs().maxCoeff() == 0.0);
    CHECK(bn.beta.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("a tape cannot be consumed twice") {
  Mlp mlp = Mlp::make(2, {3}, 1, Vec::Zero(1), Vec::Ones(1), 9);
  Mat input = Mat::Random(4, 2);
  Tape tape;
  Mat out = forward(mlp, input, Mode::Training, &tape);
  backward(mlp, tape, Mat::Ones(out.rows(), out.cols()));
  CHECK_THROWS_WITH_AS(backward(mlp, tape, Mat::Ones(out.rows(), out.cols())),
                       doctest::Contains("tape reuse"), InvariantError);
}

TEST_CASE("running statistics update only in training mode") {
  Mlp mlp = Mlp::make(2, {3}, 1, Vec::Zero(1), Vec::Ones(1), 9);
  Mat input = Mat::Random(16, 2);
  Vec before = mlp.bn[0].run_mean;
  forward(mlp, input);  // inference: pure
  CHECK((mlp.bn[0].run_mean - before).cwiseAbs().maxCoeff() == 0.0);
  forward(mlp, input, Mode::Training);
  CHECK((mlp.bn[0].run_mean - before).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("first Adam step moves a parameter by about -lr") {
  Mlp mlp = Mlp::make(1, {}, 1, Vec::Constant(1, -kInf),
                      Vec::Constant(1, kInf), 2);
  mlp.layers[0].W(0, 0) = 1.0;
  Adam opt(mlp, AdamConfig{1e-3, 0.9, 0.999, 1e-8});
  MlpGrads g = MlpGrads::zeros_like(mlp);
  g.layers[0].W(0, 0) = 0.5;
  opt.step(mlp, g);
  // With bias correction the first step is -lr * g / (|g| + eps') ~ -lr.
  CHECK(std::abs(mlp.layers[0].W(0, 0) - (1.0 - 1e-3)) <= 1e-6);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  Mlp mlp = Mlp::make(2, {3}, 1, Vec::Zero(1), Vec::Ones(1), 13);
  Mlp copy = mlp;
  Adam opt(mlp);
  opt.step(mlp, MlpGrads::zeros_like(mlp));
  for (size_t k = 0; k < mlp.layers.size(); ++k)
    CHECK((mlp.layers[k].W - copy.layers[k].W).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identical seeds give bitwise-identical training trajectories") {
  auto run = [] {
    Mlp mlp = Mlp::make(2, {4}, 1, Vec::Zero(1), Vec::Ones(1), 55);
    Adam opt(mlp);
    Mat input = Mat::Zero(8, 2);
    for (int i = 0; i < input.size(); ++i) input(i) = 0.13 * (i + 1);
    for (int it = 0; it < 5; ++it) {
      Tape tape;
      Mat out = forward(mlp, input, Mode::Training, &tape);
      MlpGrads g = backward(mlp, tape, Mat::Ones(out.rows(), out.cols()));
      opt.step(mlp, g);
    }
    return mlp;
  };
  Mlp a = run();
  Mlp b = run();
  for (size_t k = 0; k < a.layers.size(); ++k) {
    CHECK((a.layers[k].W - b.layers[k].W).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.layers[k].b - b.layers[k].b).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((a.bn[0].run_mean - b.bn[0].run_mean).cwiseAbs().maxCoeff() == 0.0);
}
