#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csnn/rng.hpp"
#include "csnn/sheaf.hpp"

using namespace csnn;

TEST_CASE("softplus against closed form") {
    // [DERIVED] log(1 + exp(0)) = log 2
    CHECK(softplus(0.0) == doctest::Approx(0.6931471805599453).epsilon(1e-14));
    CHECK(softplus(1.0) == doctest::Approx(std::log1p(std::exp(1.0))).epsilon(1e-14));
    CHECK(softplus(-40.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(softplus(40.0) == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(softplus(-1.0) > 0.0);
}

TEST_CASE("householder single reflection, d = 2") {
    // v = (1, 0): I - 2 v v^T = diag(-1, 1)
    Eigen::MatrixXd v(2, 1);
    v << 1.0, 0.0;
    const Eigen::MatrixXd q = householder_orthogonal(v);
    Eigen::MatrixXd want(2, 2);
    want << -1.0, 0.0, 0.0, 1.0;
    CHECK((q - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("householder d = 1 flips sign") {
    Eigen::MatrixXd v(1, 1);
    v << 3.7;
    CHECK(householder_orthogonal(v)(0, 0) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("householder products are orthogonal") {
    Rng rng(7);
    for (int d : {1, 2, 3, 5}) {
        for (int k : {1, 2, 4}) {
            Eigen::MatrixXd refl(d, k);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < k; ++j) refl(i, j) = rng.normal();
            const Eigen::MatrixXd q = householder_orthogonal(refl);
            const Eigen::MatrixXd res =
                q.transpose() * q - Eigen::MatrixXd::Identity(d, d);
            CHECK(res.cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("near-zero reflection columns act as identity factors") {
    Eigen::MatrixXd refl = Eigen::MatrixXd::Zero(3, 2);
    CHECK((householder_orthogonal(refl) - Eigen::MatrixXd::Identity(3, 3))
              .cwiseAbs()
              .maxCoeff() < 1e-14);
    refl(0, 1) = 1.0;  // only the second factor acts
    Eigen::MatrixXd want = Eigen::MatrixXd::Identity(3, 3);
    want(0, 0) = -1.0;
    CHECK((householder_orthogonal(refl) - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("conformal maps satisfy M^T M = C^2 I") {
    Rng rng(11);
    for (int d : {1, 2, 4}) {
        Eigen::MatrixXd refl(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) refl(i, j) = rng.normal();
        const ConformalMap m = conformal_from_params(rng.normal(), refl);
        const Eigen::MatrixXd gram = m.matrix().transpose() * m.matrix();
        const Eigen::MatrixXd want =
            m.scale * m.scale * Eigen::MatrixXd::Identity(d, d);
        CHECK((gram - want).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(m.scale > 0.0);
    }
}

TEST_CASE("frozen zero map") {
    Eigen::MatrixXd refl = Eigen::MatrixXd::Ones(2, 2);
    const ConformalMap m = conformal_from_params(5.0, refl, true);
    CHECK(m.scale == 0.0);
    CHECK(m.matrix().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("roles") {
    const ConformalMap on = ConformalMap::identity(2);
    const ConformalMap off = ConformalMap::zero(2);
    CHECK(role_of({on, on}) == Role::Standard);
    CHECK(role_of({off, on}) == Role::Listen);
    CHECK(role_of({on, off}) == Role::Broadcast);
    CHECK(role_of({off, off}) == Role::Isolate);
    CHECK(std::string(role_name(Role::Listen)) == "LISTEN");
}
