#include "nmpz/jacobian.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "nmpz/error.hpp"
#include "nmpz/io.hpp"

namespace nmpz {

Eigen::MatrixXcd eval_jnet(const ComplexDressing& d, cd s, double omega0)
{
    const int n = d.size();
    const ScalarKernels k(omega0);
    const cd a = k.alpha(s), b = k.beta(s);
    const Eigen::MatrixXd ReY = d.Y_tilde.real(), ImY = d.Y_tilde.imag();
    const Eigen::VectorXd P = d.P(), Q = d.Q();

    Eigen::MatrixXcd J(2 * n, 2 * n);
    // [ReY -ImY; ImY ReY] * [b a; a -b] + [P -Q; Q P]
    J.topLeftCorner(n, n) = b * ReY.cast<cd>() - a * ImY.cast<cd>();
    J.topRightCorner(n, n) = a * ReY.cast<cd>() + b * ImY.cast<cd>();
    J.bottomLeftCorner(n, n) = b * ImY.cast<cd>() + a * ReY.cast<cd>();
    J.bottomRightCorner(n, n) = a * ImY.cast<cd>() - b * ReY.cast<cd>();
    for (int i = 0; i < n; ++i) {
        J(i, i) += P(i);
        J(i, n + i) -= Q(i);
        J(n + i, i) += Q(i);
        J(n + i, n + i) += P(i);
    }
    return J;
}

Eigen::Matrix2cd eval_jnet_single(double P, double Q, double U, double BL, cd s, double omega0)
{
    const ScalarKernels k(omega0);
    const double y = U * U * BL;
    Eigen::Matrix2cd J;
    J << P + y * k.beta(s), -Q + y * k.alpha(s),
         Q + y * k.alpha(s), P - y * k.beta(s);
    return J;
}

Eigen::Matrix2d static_jacobian_single(double E, double U, double delta, double BL)
{
    Eigen::Matrix2d J;
    J << BL * E * U * std::sin(delta), BL * E * U * std::cos(delta),
         BL * (2 * U * U - E * U * std::cos(delta)), BL * E * U * std::sin(delta);
    return J;
}

LineEquilibrium line_equilibrium(double P, double Q, double U, double BL)
{
    if (!(U > 0.0) || !(BL > 0.0)) throw Error("line equilibrium needs U > 0 and B_L > 0");
    const double c = U * U - Q / BL; // E U cos(delta)
    const double s = P / BL;         // E U sin(delta)
    return {std::hypot(c, s) / U, std::atan2(s, c)};
}

Eigen::MatrixXcd to_complex_jnet(const ComplexDressing& d, cd s, double omega0)
{
    const int n = d.size();
    const ScalarKernels k(omega0);
    const Eigen::VectorXcd sd = d.S_tilde.diagonal();
    for (int i = 0; i < n; ++i)
        if (std::abs(sd(i)) == 0.0) throw Error("singular complex power matrix at bus " + std::to_string(i));
    const Eigen::MatrixXcd N = sd.cwiseInverse().asDiagonal() * d.Y_tilde;

    Eigen::MatrixXcd J = Eigen::MatrixXcd::Identity(2 * n, 2 * n);
    J.topRightCorner(n, n) = k.gamma(s) * N;
    J.bottomLeftCorner(n, n) = k.gamma_conj(s) * N.conjugate();
    return J;
}

Eigen::MatrixXd polar_transform(const ComplexDressing& d)
{
    const int n = d.size();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
        if (d.S(i) == 0.0) throw Error("zero apparent power at bus " + std::to_string(i));
        const double c = std::cos(d.phi(i)) / d.S(i), sn = std::sin(d.phi(i)) / d.S(i);
        T(i, i) = c;
        T(i, n + i) = sn;
        T(n + i, i) = -sn;
        T(n + i, n + i) = c;
    }
    return T;
}

Eigen::MatrixXcd complex_transform(int n)
{
    const double h = 1.0 / std::sqrt(2.0);
    Eigen::MatrixXcd T = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
        T(i, i) = h;
        T(i, n + i) = cd(0, h);
        T(n + i, i) = h;
        T(n + i, n + i) = cd(0, -h);
    }
    return T;
}

Eigen::MatrixXcd to_complex_jnet_transformed(const ComplexDressing& d, cd s, double omega0)
{
    const Eigen::MatrixXcd Tj = complex_transform(d.size());
    return Tj * (polar_transform(d).cast<cd>() * eval_jnet(d, s, omega0)) * Tj.adjoint();
}

void write_jnet_sweep_csv(const std::string& path, const ComplexDressing& d,
                          const std::vector<double>& freqs_hz, double omega0)
{
    const int n = d.size();
    std::ostringstream os;
    os << "f_Hz";
    for (int i = 0; i < 2 * n; ++i) os << ",sv" << i + 1;
    os << ",abs_det\n";
    os << std::setprecision(10);
    for (double f : freqs_hz) {
        const Eigen::MatrixXcd J = eval_jnet(d, cd(0, 2 * M_PI * f), omega0);
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(J);
        os << f;
        for (int i = 0; i < 2 * n; ++i) os << "," << svd.singularValues()(i);
        os << "," << std::abs(J.determinant()) << "\n";
    }
    write_file_atomic(path, os.str());
}

} // namespace nmpz
