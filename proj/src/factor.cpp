#include "nmpz/factor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nmpz/error.hpp"

namespace nmpz {

Eigen::MatrixXcd normalized_susceptance(const ComplexDressing& d)
{
    const Eigen::VectorXcd s = d.S_tilde.diagonal();
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (std::abs(s(i)) == 0.0) throw Error("singular complex power matrix at bus " + std::to_string(i));
    return s.cwiseInverse().asDiagonal() * d.Y_tilde;
}

Eigen::MatrixXcd compute_heq(const ComplexDressing& d)
{
    const Eigen::MatrixXcd N = normalized_susceptance(d);
    return N * N.conjugate();
}

NmpzResult eigen_heq(const Eigen::MatrixXcd& H, const Eigen::MatrixXcd& N, double omega0)
{
    const auto n = H.rows();
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(H);
    if (es.info() != Eigen::Success) throw Error("eigen-decomposition of H_eq failed");

    const Eigen::VectorXcd ev = es.eigenvalues();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(ev(i).imag()) > 1e-8 * std::abs(ev(i)) || !(ev(i).real() > 0.0))
            throw Error("H_eq not similar-to-positive (check inputs)");
    }
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ev(a).real() < ev(b).real(); });

    NmpzResult r;
    r.omega0 = omega0;
    r.lambdas.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double l = ev(order[i]).real();
        r.lambdas(i) = l;
        if (l > 1.0)
            r.z_nmp.emplace_back(omega0 * std::sqrt(l - 1.0));
        else
            r.z_nmp.emplace_back(std::nullopt);
    }
    r.rho_z = r.lambdas(0);

    Eigen::VectorXcd w = es.eigenvectors().col(order[0]);
    w.normalize();
    Eigen::Index imax = 0;
    w.cwiseAbs().maxCoeff(&imax);
    w *= std::conj(w(imax)) / std::abs(w(imax));
    r.w1 = w;
    r.mu1 = (w.adjoint() * N * w.conjugate())(0, 0);
    return r;
}

NmpzResult analyze_zeros(const ComplexDressing& d, double omega0)
{
    const Eigen::MatrixXcd N = normalized_susceptance(d);
    return eigen_heq(N * N.conjugate(), N, omega0);
}

double scalar_rho_z(double P, double Q, double U, double BL)
{
    const double y = BL * U * U;
    return y * y / (P * P + Q * Q);
}

ScrResult compute_scr(double x_line, double p_rated)
{
    if (!(x_line > 0.0) || !(p_rated > 0.0)) throw Error("SCR needs positive reactance and rated power");
    ScrResult r;
    r.scr = 1.0 / x_line / p_rated;
    r.gscr = r.scr;
    r.rho_z_rated = r.scr * r.scr;
    return r;
}

ScrResult compute_gscr(const Eigen::MatrixXd& B, const Eigen::VectorXd& p_rated)
{
    if (B.rows() != p_rated.size()) throw Error("gSCR inputs have different sizes");
    if ((p_rated.array() <= 0.0).any()) throw Error("rated powers must be positive");
    // P_N^-1 B is similar to P_N^-1/2 B P_N^-1/2, which is symmetric.
    const Eigen::VectorXd h = p_rated.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd M = h.asDiagonal() * B * h.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
    ScrResult r;
    r.gscr = es.eigenvalues()(0);
    r.scr = B.rows() == 1 ? r.gscr : std::numeric_limits<double>::quiet_NaN();
    r.rho_z_rated = r.gscr * r.gscr;
    return r;
}

} // namespace nmpz
