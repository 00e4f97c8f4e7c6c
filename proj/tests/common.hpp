#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "nmpz/netmodel.hpp"

namespace testutil {

using cd = std::complex<double>;
constexpr double kW0 = 2.0 * M_PI * 50.0;

inline std::string scenario_path(const std::string& name)
{
    return std::string(NMPZ_SOURCE_DIR) + "/scenarios/" + name + ".yaml";
}

// Grounded Laplacian of a random connected graph: an M-matrix, hence a
// valid Kron-reduced susceptance matrix.
inline Eigen::MatrixXd random_laplacian(int n, std::mt19937& rng)
{
    std::uniform_real_distribution<double> w(0.5, 8.0), g(0.2, 4.0), coin(0.0, 1.0);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (j != i + 1 && coin(rng) < 0.5) continue; // keep the chain so the graph stays connected
            const double y = w(rng);
            B(i, i) += y;
            B(j, j) += y;
            B(i, j) -= y;
            B(j, i) -= y;
        }
        if (i == 0 || coin(rng) < 0.5) B(i, i) += g(rng);
    }
    return B;
}

inline nmpz::OperatingPoint random_op(int n, std::mt19937& rng)
{
    std::uniform_real_distribution<double> P(0.1, 1.5), Q(-0.6, 0.9), U(0.85, 1.1), d(-0.6, 0.6);
    nmpz::OperatingPoint op;
    op.P.resize(n);
    op.Q.resize(n);
    op.U.resize(n);
    op.delta.resize(n);
    for (int i = 0; i < n; ++i) {
        op.bus_ids.push_back(i + 1);
        op.P(i) = P(rng);
        op.Q(i) = Q(rng);
        op.U(i) = U(rng);
        op.delta(i) = d(rng);
    }
    return op;
}

inline nmpz::ComplexDressing random_dressing(int n, std::mt19937& rng)
{
    nmpz::SusceptanceLaplacian lap;
    lap.B = random_laplacian(n, rng);
    for (int i = 0; i < n; ++i) lap.bus_ids.push_back(i + 1);
    return nmpz::dress(random_op(n, rng), lap);
}

inline nmpz::ComplexDressing single_dressing(double P, double Q, double U, double BL)
{
    nmpz::OperatingPoint op;
    op.bus_ids = {1};
    op.P = Eigen::VectorXd::Constant(1, P);
    op.Q = Eigen::VectorXd::Constant(1, Q);
    op.U = Eigen::VectorXd::Constant(1, U);
    op.delta = Eigen::VectorXd::Zero(1);
    nmpz::SusceptanceLaplacian lap{Eigen::MatrixXd::Constant(1, 1, BL), {1}};
    return nmpz::dress(op, lap);
}

inline double rel_err(double a, double b)
{
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

} // namespace testutil
