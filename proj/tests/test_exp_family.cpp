#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "restless_bai/exp_family.hpp"

using namespace restless_bai;

namespace {

Generator chain_2x2() {
  Generator gen;
  gen.transition = Matrix(2, 2);
  gen.transition(0, 0) = 0.9; gen.transition(0, 1) = 0.1;
  gen.transition(1, 0) = 0.2; gen.transition(1, 1) = 0.8;
  gen.reward = {0.0, 1.0};
  gen.theta_min = -2.0;
  gen.theta_max = 2.0;
  return gen;
}

Generator identical_rows() {
  Generator gen;
  gen.transition = Matrix(2, 2);
  gen.transition(0, 0) = 0.5; gen.transition(0, 1) = 0.5;
  gen.transition(1, 0) = 0.5; gen.transition(1, 1) = 0.5;
  gen.reward = {0.0, 1.0};
  gen.theta_min = -2.0;
  gen.theta_max = 2.0;
  return gen;
}

// Independent route for the 2x2 case: the tilted matrix is
//   [p00  p01*w]
//   [p10  p11*w]   with w = e^theta,
// so the dominant eigenvalue is the larger root of the characteristic
// quadratic and everything else follows in closed form.
struct Closed2x2 {
  double rho;
  Matrix tpm;
  double mu1;
};

Closed2x2 closed_form(const Generator& gen, double theta) {
  double w = std::exp(theta);
  double a = gen.transition(0, 0), b = gen.transition(0, 1) * w;
  double c = gen.transition(1, 0), d = gen.transition(1, 1) * w;
  double tr = a + d, det = a * d - b * c;
  Closed2x2 out;
  out.rho = 0.5 * (tr + std::sqrt(tr * tr - 4.0 * det));
  // Right eigenvector ratio from the first row, then the eigenvector-scaled
  // normalization.
  double ratio = (out.rho - a) / b;  // v1 / v0
  out.tpm = Matrix(2, 2);
  out.tpm(0, 0) = a / out.rho;
  out.tpm(0, 1) = b * ratio / out.rho;
  out.tpm(1, 0) = c / (out.rho * ratio);
  out.tpm(1, 1) = d / out.rho;
  double p = out.tpm(0, 1), q = out.tpm(1, 0);
  out.mu1 = p / (p + q);
  return out;
}

}  // namespace

TEST_CASE("family assumptions accepted on the reference chain") {
  FamilyCheck rep = check_family(chain_2x2());
  INFO(rep.detail);
  CHECK(rep.ok());
  CHECK_NOTHROW(validate_family(chain_2x2()));
}

TEST_CASE("family rejection reasons") {
  Generator gen = chain_2x2();
  gen.reward = {1.0, 1.0};
  CHECK_FALSE(check_family(gen).ok());  // constant reward

  gen = chain_2x2();
  gen.transition(0, 1) = 0.0;
  gen.transition(0, 0) = 1.0;
  CHECK_FALSE(check_family(gen).ok());  // reducible

  gen = chain_2x2();
  gen.theta_min = 1.0;
  gen.theta_max = -1.0;
  CHECK_FALSE(check_family(gen).ok());  // empty parameter interval

  gen = chain_2x2();
  gen.transition(1, 1) = 0.0;
  gen.transition(1, 0) = 1.0;
  // The top reward state has no self loop, so the argmax submatrix is a 1x1
  // zero block.
  CHECK_FALSE(check_family(gen).ok());

  gen = chain_2x2();
  gen.transition(0, 0) = 0.95;
  gen.transition(0, 1) = 0.05001;
  CHECK_FALSE(check_family(gen).ok());  // rows no longer stochastic
}

TEST_CASE("spectral radius matches the quadratic closed form") {
  Generator gen = chain_2x2();
  TiltedSpectrum spec = perron(gen, 1.0);
  CHECK(spec.rho == Catch::Approx(2.215938662329989).margin(1e-12));
  for (double theta : {-2.0, -0.7, 0.0, 0.3, 1.0, 2.0}) {
    Closed2x2 oracle = closed_form(gen, theta);
    TiltedSpectrum s = perron(gen, theta);
    CHECK(s.rho == Catch::Approx(oracle.rho).margin(1e-11));
  }
}

TEST_CASE("tilting at zero is the identity") {
  Generator gen = chain_2x2();
  TiltedSpectrum spec = perron(gen, 0.0);
  CHECK(spec.rho == Catch::Approx(1.0).margin(1e-12));
  Matrix p0 = tilted_tpm(gen, spec);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(p0(i, j) == Catch::Approx(gen.transition(i, j)).margin(1e-12));
}

TEST_CASE("tilted kernel rows match the closed form") {
  Generator gen = chain_2x2();
  ArmModel model = arm_model(gen, 1.0);
  CHECK(model.tpm()(0, 0) == Catch::Approx(0.4061484260821907).margin(1e-12));
  CHECK(model.tpm()(0, 1) == Catch::Approx(0.5938515739178094).margin(1e-12));
  CHECK(model.tpm()(1, 0) == Catch::Approx(0.018643656643146142).margin(1e-12));
  CHECK(model.tpm()(1, 1) == Catch::Approx(0.981356343356854).margin(1e-12));
  CHECK(model.stationary()[0] == Catch::Approx(0.03043886011336169).margin(1e-12));
  CHECK(model.stationary()[1] == Catch::Approx(0.9695611398866383).margin(1e-12));
  CHECK(model.eta() == Catch::Approx(0.9695611398866383).margin(1e-12));
  for (double theta : {-1.5, -0.2, 0.8, 2.0}) {
    Closed2x2 oracle = closed_form(gen, theta);
    ArmModel m = arm_model(gen, theta);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(m.tpm()(i, j) == Catch::Approx(oracle.tpm(i, j)).margin(1e-11));
    CHECK(m.eta() == Catch::Approx(oracle.mu1).margin(1e-11));
  }
}

TEST_CASE("identical rows give the fully explicit family") {
  Generator gen = identical_rows();
  double theta = std::log(2.0);
  // rho = 0.5 + 0.5 e^theta, every row of the tilted kernel is
  // (0.5, 0.5 e^theta) / rho, and the stationary law equals that row.
  TiltedSpectrum spec = perron(gen, theta);
  CHECK(spec.rho == Catch::Approx(1.5).margin(1e-12));
  ArmModel model = arm_model(gen, theta);
  for (int i = 0; i < 2; ++i) {
    CHECK(model.tpm()(i, 0) == Catch::Approx(1.0 / 3.0).margin(1e-12));
    CHECK(model.tpm()(i, 1) == Catch::Approx(2.0 / 3.0).margin(1e-12));
  }
  CHECK(model.eta() == Catch::Approx(2.0 / 3.0).margin(1e-12));
  for (double th : {-2.0, -1.0, 0.4, 1.7}) {
    double rho = 0.5 + 0.5 * std::exp(th);
    double eta = 0.5 * std::exp(th) / rho;
    CHECK(perron(gen, th).rho == Catch::Approx(rho).margin(1e-12));
    CHECK(stationary_mean(gen, th) == Catch::Approx(eta).margin(1e-11));
  }
}

TEST_CASE("matrix powers are consistent with explicit products") {
  Generator gen = chain_2x2();
  ArmModel model = arm_model(gen, 0.7);
  Matrix p2 = matmul(model.tpm(), model.tpm());
  Matrix p3 = matmul(p2, model.tpm());
  CHECK(model.tpm_power(1) == model.tpm());
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      CHECK(model.tpm_power(2)(i, j) == Catch::Approx(p2(i, j)).margin(1e-14));
      CHECK(model.tpm_power(3)(i, j) == Catch::Approx(p3(i, j)).margin(1e-14));
    }
  CHECK_THROWS_AS(model.tpm_power(0), ValidationError);
}

TEST_CASE("stationary mean is strictly increasing") {
  Generator gen = chain_2x2();
  double prev = -1.0;
  for (int t = 0; t <= 40; ++t) {
    double theta = -2.0 + 4.0 * t / 40.0;
    double eta = stationary_mean(gen, theta);
    CHECK(eta > prev);
    prev = eta;
  }
}

TEST_CASE("mean inversion round-trips") {
  Generator gen = chain_2x2();
  for (int t = 0; t <= 20; ++t) {
    double theta = -1.95 + 3.9 * t / 20.0;
    double back = mean_to_theta(gen, stationary_mean(gen, theta));
    CHECK(back == Catch::Approx(theta).margin(1e-8));
  }
}

TEST_CASE("mean inversion clamps out-of-range targets") {
  Generator gen = chain_2x2();
  CHECK(mean_to_theta(gen, -5.0) == gen.theta_min);
  CHECK(mean_to_theta(gen, 5.0) == gen.theta_max);
  CHECK(mean_to_theta(gen, 0.0) == gen.theta_min);  // below the attainable range
  CHECK(mean_to_theta(gen, 1.0) == gen.theta_max);  // above it
}

TEST_CASE("deferred stationary computation matches the eager one") {
  Generator gen = chain_2x2();
  ArmModel eager = arm_model(gen, 1.3);
  ArmModel deferred(gen, 1.3, perron(gen, 1.3), ArmModel::DeferStationary{});
  CHECK(deferred.eta() == Catch::Approx(eager.eta()).margin(1e-14));
  CHECK(deferred.stationary()[0] == Catch::Approx(eager.stationary()[0]).margin(1e-14));
}
