#pragma once

#include <optional>
#include <vector>

#include "nmpz/netmodel.hpp"

namespace nmpz {

struct NmpzResult {
    double rho_z = 0.0;
    Eigen::VectorXd lambdas; // ascending
    // omega0 * sqrt(lambda - 1); empty when lambda <= 1 (past the static limit).
    std::vector<std::optional<double>> z_nmp;
    Eigen::VectorXcd w1;
    cd mu1;
    double omega0 = 0.0;
};

struct ScrResult {
    double scr = 0.0;  // single converter only, NaN otherwise
    double gscr = 0.0;
    double rho_z_rated = 0.0;
};

// S~^-1 Y~, the factor whose product with its conjugate forms H_eq.
Eigen::MatrixXcd normalized_susceptance(const ComplexDressing& d);

Eigen::MatrixXcd compute_heq(const ComplexDressing& d);

// Eigen-decomposes H_eq; N = S~^-1 Y~ is needed for mu1.
NmpzResult eigen_heq(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& N, double omega0);

NmpzResult analyze_zeros(const ComplexDressing& d, double omega0);

double scalar_rho_z(double P, double Q, double U, double BL);

ScrResult compute_scr(double x_line, double p_rated);
ScrResult compute_gscr(const Eigen::MatrixXd& B, const Eigen::VectorXd& p_rated);

} // namespace nmpz
