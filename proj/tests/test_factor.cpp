#include <doctest.h>

#include "common.hpp"
#include "nmpz/error.hpp"
#include "nmpz/factor.hpp"
#include "nmpz/jacobian.hpp"

using namespace nmpz;
using namespace testutil;

TEST_CASE("single converter factor: closed form and eigensolve agree")
{
    const double rho = scalar_rho_z(0.8, -0.2, 0.95, 2.0);
    // (B U^2)^2 / |S|^2 written out
    CHECK(rho == doctest::Approx(std::pow(2.0 * 0.9025, 2) / (0.64 + 0.04)).epsilon(1e-14));
    CHECK(rho == doctest::Approx(4.79).epsilon(0.01 / 4.79));
    const auto z = analyze_zeros(single_dressing(0.8, -0.2, 0.95, 2.0), kW0);
    CHECK(z.rho_z == doctest::Approx(rho).epsilon(1e-12));
    REQUIRE(z.z_nmp[0]);
    CHECK(*z.z_nmp[0] == doctest::Approx(kW0 * std::sqrt(rho - 1.0)).epsilon(1e-12));
}

TEST_CASE("rated single converter: factor equals SCR squared")
{
    const auto z = analyze_zeros(single_dressing(1.0, 0.0, 1.0, 2.0), kW0);
    const auto scr = compute_scr(0.5, 1.0);
    CHECK(scr.scr == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(std::abs(z.rho_z - 4.0) < 1e-10);
    CHECK(std::abs(scr.rho_z_rated - z.rho_z) < 1e-10);
}

TEST_CASE("rated multi-converter dressing: factor equals gSCR squared")
{
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> pr(0.5, 2.0);
    for (int n = 2; n <= 5; ++n) {
        const Eigen::MatrixXd B = random_laplacian(n, rng);
        OperatingPoint op;
        op.P.resize(n);
        op.Q = Eigen::VectorXd::Zero(n);
        op.U = Eigen::VectorXd::Ones(n);
        op.delta = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) {
            op.bus_ids.push_back(i + 1);
            op.P(i) = pr(rng);
        }
        const auto z = analyze_zeros(dress(op, {B, op.bus_ids}), kW0);
        // gSCR oracle: smallest eigenvalue of P^-1 B from a general solver.
        const Eigen::MatrixXd M = op.P.cwiseInverse().asDiagonal() * B;
        const double g = Eigen::EigenSolver<Eigen::MatrixXd>(M).eigenvalues().real().minCoeff();
        CHECK(std::abs(z.rho_z - g * g) < 1e-10 * g * g);
        CHECK(std::abs(compute_gscr(B, op.P).rho_z_rated - g * g) < 1e-10 * g * g);
    }
}

TEST_CASE("zero location for weak single-converter points")
{
    // Dressings tuned so rho_z hits the target exactly.
    for (auto [rho, zref] : {std::pair{1.26, 0.51}, std::pair{1.01, 0.10}}) {
        const double P = 0.9, Q = 0.1, U = 1.0;
        const double BL = std::sqrt(rho * (P * P + Q * Q)) / (U * U);
        const auto d = single_dressing(P, Q, U, BL);
        const auto z = analyze_zeros(d, kW0);
        CHECK(z.rho_z == doctest::Approx(rho).epsilon(1e-12));
        REQUIRE(z.z_nmp[0]);
        CHECK(std::abs(*z.z_nmp[0] / kW0 - zref) < 0.01);
        const double ref = std::abs(eval_jnet(d, cd(1.5 * *z.z_nmp[0], 0.0), kW0).determinant());
        CHECK(std::abs(eval_jnet(d, cd(*z.z_nmp[0], 0.0), kW0).determinant()) < 1e-6 * ref);
    }
}

TEST_CASE("reference three-converter dressing reproduces the critical eigenpair")
{
    auto e = [](double m, double a) { return std::polar(m, a); };
    Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(3, 3);
    S.diagonal() << e(0.65, 0.38), e(0.76, 0.39), e(0.70, 0.39);
    Eigen::MatrixXcd Y(3, 3);
    Y << 7.84, e(1.51, 3.14), e(0.79, 3.00), e(1.51, -3.14), 9.01, e(0.28, 3.01), e(0.79, -3.00), e(0.28, -3.01), 2.10;
    const auto z = analyze_zeros(make_dressing(S, Y), kW0);
    CHECK(z.rho_z == doctest::Approx(7.76).epsilon(0.02));
    const double mags[3] = {0.15, 0.07, 0.99};
    for (int i = 0; i < 3; ++i) CHECK(std::abs(std::abs(z.w1(i)) - mags[i]) < 0.03);
    // Relative phases against the dominant third entry.
    const double rel[2] = {0.08 + 0.01, 0.06 + 0.01};
    for (int i = 0; i < 2; ++i) CHECK(std::abs(std::arg(z.w1(i) / z.w1(2)) - rel[i]) < 0.05);
}

TEST_CASE("H_eq spectrum is real and positive for random dressings")
{
    std::mt19937 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const auto d = random_dressing(1 + trial % 6, rng);
        const Eigen::VectorXcd ev = Eigen::ComplexEigenSolver<Eigen::MatrixXcd>(compute_heq(d)).eigenvalues();
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            CHECK(ev(i).real() > 0.0);
            CHECK(std::abs(ev(i).imag()) < 1e-8 * std::abs(ev(i)));
        }
    }
}

TEST_CASE("rho_z equals mu1 mu1* and w1 is a coneigenvector")
{
    std::mt19937 rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const auto d = random_dressing(1 + trial % 5, rng);
        const auto z = analyze_zeros(d, kW0);
        CHECK(std::abs(std::norm(z.mu1) - z.rho_z) < 1e-8 * z.rho_z);
        CHECK(z.w1.norm() == doctest::Approx(1.0).epsilon(1e-12));
        const Eigen::MatrixXcd N = normalized_susceptance(d);
        if (z.lambdas.size() > 1 && z.lambdas(1) - z.lambdas(0) < 1e-6 * z.lambdas(0)) continue;
        CHECK((N * z.w1.conjugate() - z.mu1 * z.w1).norm() < 1e-8 * std::abs(z.mu1));
    }
}

TEST_CASE("gauge rotation of w1 rotates mu1 but keeps its magnitude")
{
    std::mt19937 rng(8);
    const auto d = random_dressing(3, rng);
    const auto z = analyze_zeros(d, kW0);
    const Eigen::MatrixXcd N = normalized_susceptance(d);
    for (double th : {0.3, 1.7, -2.2}) {
        const Eigen::VectorXcd w = std::polar(1.0, th) * z.w1;
        const cd mu = w.adjoint() * N * w.conjugate();
        CHECK(std::abs(mu - std::polar(1.0, -2.0 * th) * z.mu1) < 1e-10 * std::abs(z.mu1));
        CHECK(std::abs(std::abs(mu) - std::abs(z.mu1)) < 1e-10 * std::abs(z.mu1));
    }
    // Convention: dominant entry real and positive.
    Eigen::Index k;
    z.w1.cwiseAbs().maxCoeff(&k);
    CHECK(std::abs(z.w1(k).imag()) < 1e-12);
    CHECK(z.w1(k).real() > 0.0);
}

TEST_CASE("eigenvalues are sorted and sub-unity ones carry no zero")
{
    const auto d = single_dressing(1.2, 0.4, 0.9, 0.8);
    const auto z = analyze_zeros(d, kW0);
    CHECK(z.rho_z < 1.0);
    CHECK_FALSE(z.z_nmp[0].has_value());

    std::mt19937 rng(1);
    const auto z3 = analyze_zeros(random_dressing(5, rng), kW0);
    for (Eigen::Index i = 1; i < z3.lambdas.size(); ++i) CHECK(z3.lambdas(i) >= z3.lambdas(i - 1));
}

TEST_CASE("non-positive spectrum is rejected")
{
    Eigen::MatrixXcd H(2, 2);
    H << 0.0, 1.0, -1.0, 0.0; // eigenvalues +-j
    CHECK_THROWS_WITH(eigen_heq(H, H, kW0), doctest::Contains("not similar-to-positive"));
}

TEST_CASE("gSCR input validation")
{
    CHECK_THROWS_AS(compute_gscr(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Ones(3)), Error);
    CHECK_THROWS_AS(compute_gscr(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)), Error);
    CHECK_THROWS_AS(compute_scr(0.0, 1.0), Error);
}
