#pragma once

#include <string>
#include <vector>

#include "nmpz/netmodel.hpp"

namespace nmpz {

struct ScalarKernels {
    double omega0;

    explicit ScalarKernels(double w0) : omega0(w0) {}
    cd alpha(cd s) const { return omega0 * omega0 / (s * s + omega0 * omega0); }
    cd beta(cd s) const { return s * omega0 / (s * s + omega0 * omega0); }
    cd gamma(cd s) const { return beta(s) + cd(0, 1) * alpha(s); }
    cd gamma_conj(cd s) const { return beta(s) - cd(0, 1) * alpha(s); }
};

// Grid Jacobian transfer matrix, rows (dP; dQ), columns (dU/U; d delta),
// each block n x n.
Eigen::MatrixXcd eval_jnet(const ComplexDressing& d, cd s, double omega0);

// Single-line closed form.
Eigen::Matrix2cd eval_jnet_single(double P, double Q, double U, double BL, cd s, double omega0);

// Static single-line Jacobian written with the infinite-bus voltage E.
Eigen::Matrix2d static_jacobian_single(double E, double U, double delta, double BL);

struct LineEquilibrium {
    double E;
    double delta;
};

// Infinite-bus voltage and load angle that deliver (P, Q) at U over B_L.
LineEquilibrium line_equilibrium(double P, double Q, double U, double BL);

// Complex-coordinate form built directly from the dressing.
Eigen::MatrixXcd to_complex_jnet(const ComplexDressing& d, cd s, double omega0);

// Same quantity via the polar and unitary transforms applied to eval_jnet.
Eigen::MatrixXcd to_complex_jnet_transformed(const ComplexDressing& d, cd s, double omega0);

// Block power-factor rotation scaled by 1/S.
Eigen::MatrixXd polar_transform(const ComplexDressing& d);

// Unitary map (x, y) -> ((x + j y), (x - j y)) / sqrt(2), blockwise.
Eigen::MatrixXcd complex_transform(int n);

// Writes f_Hz, singular values (descending) and |det| of eval_jnet.
void write_jnet_sweep_csv(const std::string& path, const ComplexDressing& d,
                          const std::vector<double>& freqs_hz, double omega0);

} // namespace nmpz
