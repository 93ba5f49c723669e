#include "proximh/linalg.hpp"
#include "proximh/theory.hpp"

#include <doctest.h>

#include <sstream>

using namespace pimh;

TEST_CASE("build_k reduces to the identity when the operators coincide") {
  Rng rng = make_stream(1);
  const Matrix a = standard_normal(rng, 6, 9);
  const auto k = build_k(a, a, 1.0);
  CHECK((k.k - Matrix::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((k.k_inverse - Matrix::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("build_k scalar case") {
  const auto k = build_k(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 3.0), 1.0);
  CHECK(k.k(0, 0) == doctest::Approx(1.4).epsilon(1e-14));
  CHECK(k.k_inverse(0, 0) == doctest::Approx(1.0 / 1.4).epsilon(1e-14));
}

TEST_CASE("build_k agrees with the pseudoinverse form") {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng = make_stream(10 + trial);
    const Eigen::Index d_x = 5 + trial * 4, d_y = 3 + trial * 2;
    const Matrix a = standard_normal(rng, d_y, d_x);
    const Matrix a_tilde = a + 0.1 * standard_normal(rng, d_y, d_x);
    const double beta = trial == 0 ? 0.01 : 0.5;
    const auto k = build_k(a, a_tilde, beta);
    const Matrix alt = Matrix::Identity(d_x, d_x) + regularized_pseudoinverse(a, beta) * (a_tilde - a);
    CHECK((k.k - alt).cwiseAbs().maxCoeff() < 1e-10);
  }
  Rng rng = make_stream(3);
  const Matrix a = standard_normal(rng, 8, 5);
  const auto k = build_k(a, 1.1 * a, 0.01);
  const Matrix alt = Matrix::Identity(5, 5) + regularized_pseudoinverse(a, 0.01) * (0.1 * a);
  CHECK((k.k - alt).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("build_k rejects bad input") {
  const Matrix a = Matrix::Identity(3, 3);
  CHECK_THROWS_AS(build_k(a, Matrix::Identity(2, 3), 1.0), DimensionError);
  CHECK_THROWS_AS(build_k(a, a, 0.0), ParameterError);
  CHECK_THROWS_AS(build_k(a, a, -1.0), ParameterError);
}

TEST_CASE("regularized_pseudoinverse") {
  const Matrix id = Matrix::Identity(3, 3);
  CHECK((regularized_pseudoinverse(id, 0.5) - id / 1.5).norm() < 1e-14);
  CHECK(regularized_pseudoinverse(Matrix::Constant(1, 1, 2.0), 1.0)(0, 0) == doctest::Approx(0.4));

  Rng rng = make_stream(4);
  const Matrix a = standard_normal(rng, 6, 4);
  const Matrix p = regularized_pseudoinverse(a, 1e-8);
  CHECK((a * p * a - a).norm() <= 1e-5 * a.norm());

  const Matrix b = standard_normal(rng, 7, 10);
  const Matrix q = regularized_pseudoinverse(b, 0.3);
  const Matrix lhs = (b.transpose() * b + 0.3 * Matrix::Identity(10, 10)) * q;
  CHECK((lhs - b.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(regularized_pseudoinverse(b, 0.0), ParameterError);
}

TEST_CASE("make_test_operator trivial perturbations") {
  PerturbationParams p;
  p.alpha_minus = 1.0;
  p.alpha_plus = 1.0;
  const auto m = make_test_operator(PerturbationKind::multiplicative, 20, 10, p, 1);
  CHECK(m.f == m.f_tilde);

  PerturbationParams t;
  t.threshold = 1e-6;
  const auto ops = make_test_operator(PerturbationKind::truncation, 20, 10, t, 2);
  CHECK(ops.f == ops.f_tilde);
}

TEST_CASE("make_test_operator additive perturbation has rank 5") {
  PerturbationParams p;
  const auto ops = make_test_operator(PerturbationKind::additive_lowrank, 200, 40, p, 3);
  Eigen::JacobiSVD<Matrix> svd(ops.f_tilde - ops.f);
  const Vector s = svd.singularValues();
  CHECK(s[4] > 1e-8 * s[0]);
  CHECK(s[5] < 1e-10 * s[0]);
}

TEST_CASE("make_test_operator is deterministic") {
  PerturbationParams p;
  for (auto kind : {PerturbationKind::multiplicative, PerturbationKind::additive_lowrank,
                    PerturbationKind::truncation}) {
    const auto a = make_test_operator(kind, 30, 12, p, 9);
    const auto b = make_test_operator(kind, 30, 12, p, 9);
    std::ostringstream sa, sb;
    write_operator(sa, a.f);
    write_operator(sa, a.f_tilde);
    write_operator(sa, a.o);
    write_operator(sb, b.f);
    write_operator(sb, b.f_tilde);
    write_operator(sb, b.o);
    CHECK(sa.str() == sb.str());
    CHECK(condition_number(a.o) <= p.max_observation_condition);
  }
}

TEST_CASE("make_test_operator parameter validation") {
  PerturbationParams p;
  p.alpha_minus = 1.2;
  CHECK_THROWS_AS(make_test_operator(PerturbationKind::multiplicative, 10, 5, p, 1), ParameterError);
  PerturbationParams q;
  CHECK_THROWS(make_test_operator(PerturbationKind::multiplicative, 5, 10, q, 1));
}

TEST_CASE("discrepancy_norms") {
  const Matrix one = Matrix::Identity(1, 1);
  SUBCASE("identical operators") {
    Rng rng = make_stream(5);
    const Matrix f = Matrix::Identity(4, 4) + 0.1 * standard_normal(rng, 4, 4);
    const auto k = build_k(f, f, 1.0);
    const auto n = discrepancy_norms(f, f, k);
    CHECK(n.latent_norm < 1e-12);
    CHECK(n.proximal_norm < 1e-12);
  }
  SUBCASE("scalar") {
    const Matrix f_tilde = Matrix::Constant(1, 1, 2.0);
    const auto k = build_k(one, f_tilde, 1.0);  // K = 3/2
    const auto n = discrepancy_norms(one, f_tilde, k);
    CHECK(n.latent_norm == doctest::Approx(0.5));
    CHECK(n.proximal_norm == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("diagonal mixing inequality") {
  Rng rng = make_stream(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = random_diagonal_spec(8, 5, rng);
    const auto prob = diagonal_problem(spec);
    const auto k = build_k(prob.a, prob.a_tilde, spec.sigma * spec.sigma);
    const auto n = discrepancy_norms(prob.f, prob.f_tilde, k);
    CHECK(n.proximal_norm <= n.latent_norm + 1e-12);
    CHECK(n.proximal_norm < n.latent_norm);
  }
}

TEST_CASE("checked_inverse flags singular matrices") {
  Matrix m = Matrix::Identity(3, 3);
  m(2, 2) = 0.0;
  CHECK_THROWS_AS(checked_inverse(m, "m"), ConditioningError);
}

TEST_CASE("random_orthogonal and spectral_norm") {
  Rng rng = make_stream(6);
  const Matrix q = random_orthogonal(12, rng);
  CHECK((q.transpose() * q - Matrix::Identity(12, 12)).norm() < 1e-12);
  Vector s(4);
  s << 3.0, 2.0, 1.0, 0.5;
  const Matrix m = q.leftCols(4) * s.asDiagonal() * random_orthogonal(4, rng);
  CHECK(spectral_norm(m) == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("operator container round trip") {
  Rng rng = make_stream(7);
  const Matrix m = standard_normal(rng, 3, 5);
  std::stringstream ss;
  write_operator(ss, m);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "PIMH");
  CHECK(bytes.size() == 4 + 4 + 8 + 8 + 15 * 8);
  const Matrix back = read_operator(ss);
  CHECK(back == m);

  std::stringstream bad("XXXX");
  CHECK_THROWS(read_operator(bad));
}
