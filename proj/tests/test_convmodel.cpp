#include <doctest.h>

#include <filesystem>

#include "common.hpp"
#include "nmpz/convmodel.hpp"
#include "nmpz/error.hpp"

using namespace nmpz;
using namespace testutil;

namespace {

const BusOperatingPoint kBase{0.8, -0.2, 0.95, 0.3796};

Eigen::Matrix2d complex_as_real(cd c)
{
    Eigen::Matrix2d m;
    m << c.real(), -c.imag(), c.imag(), c.real();
    return m;
}

} // namespace

TEST_CASE("pll gains from the natural frequency")
{
    const auto g = pll_gains(15.0);
    const double wn = 2 * M_PI * 15.0;
    CHECK(g.ki == doctest::Approx(wn * wn));
    CHECK(g.kp == doctest::Approx(2 * 0.707 * wn));
    CHECK_THROWS_AS(pll_gains(0.0), Error);
}

TEST_CASE("linearization point is an equilibrium delivering the dispatch")
{
    const ConverterParams p;
    const auto m = linearize_converter(p, kBase, {});
    REQUIRE(m.states() == 10);
    const cd v = std::polar(kBase.U, kBase.delta);
    const double in[4] = {v.real(), v.imag(), kBase.P, kBase.Q - p.C_f * kBase.U * kBase.U};
    std::vector<double> dx(10);
    double pq[2];
    converter_rhs(p, m.omega0, kBase.U, m.x0.data(), in, dx.data(), pq);
    for (double r : dx) CHECK(std::abs(r) < 1e-9);
    CHECK(pq[0] == doctest::Approx(kBase.P).epsilon(1e-12));
    CHECK(pq[1] == doctest::Approx(in[3]).epsilon(1e-12));
    // The PLL settles on the bus angle.
    CHECK(m.x0(2) == doctest::Approx(kBase.delta).epsilon(1e-12));
}

TEST_CASE("state-space matrices match central differences of the nonlinear model")
{
    ConverterParams p;
    p.kp_P = 0.5;
    p.ki_P = 40.0;
    p.t_vff = 0.001;
    const BusOperatingPoint op{1.1, 0.3, 1.01, 0.14};
    const auto m = linearize_converter(p, op, {});
    const cd v = std::polar(op.U, op.delta);
    std::vector<double> z(14);
    for (int i = 0; i < 10; ++i) z[i] = m.x0(i);
    z[10] = v.real();
    z[11] = v.imag();
    z[12] = op.P;
    z[13] = op.Q - p.C_f * op.U * op.U;

    auto eval = [&](const std::vector<double>& zz) {
        Eigen::VectorXd out(12);
        double pq[2];
        converter_rhs(p, m.omega0, op.U, zz.data(), zz.data() + 10, out.data(), pq);
        out(10) = pq[0];
        out(11) = pq[1];
        return out;
    };
    Eigen::MatrixXd fd(12, 14);
    for (int j = 0; j < 14; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(z[j]));
        auto zp = z, zm = z;
        zp[j] += h;
        zm[j] -= h;
        fd.col(j) = (eval(zp) - eval(zm)) / (2 * h);
    }
    const double scale = fd.cwiseAbs().maxCoeff();
    CHECK((fd.topLeftCorner(10, 10) - m.A).cwiseAbs().maxCoeff() < 1e-6 * scale);
    CHECK((fd.block(0, 10, 10, 2) - m.B_grid).cwiseAbs().maxCoeff() < 1e-6 * scale);
    CHECK((fd.block(0, 12, 10, 2) - m.B_ref).cwiseAbs().maxCoeff() < 1e-6 * scale);
    CHECK((fd.bottomLeftCorner(2, 10) - m.C).cwiseAbs().maxCoeff() < 1e-6 * scale);
    CHECK((fd.block(10, 10, 2, 2) - m.D_grid).cwiseAbs().maxCoeff() < 1e-6 * scale);
}

TEST_CASE("converter loop is stable on its own and tracks its references")
{
    const auto m = linearize_converter(ConverterParams{}, kBase, {});
    const Eigen::VectorXcd ev = m.A.eigenvalues();
    CHECK(ev.real().maxCoeff() < 0.0);
    // Integral power loops give unity DC tracking with the terminal voltage held.
    const Eigen::Matrix2cd G = m.reference_gain(cd(0.0, 1e-6));
    CHECK(std::abs(G(0, 0) - 1.0) < 1e-4);
    CHECK(std::abs(G(1, 1) - 1.0) < 1e-4);
    CHECK(std::abs(G(0, 1)) < 1e-4);
}

TEST_CASE("filter capacitor terms equal the linearized capacitor power")
{
    const ConverterParams p;
    const auto m = linearize_converter(p, kBase, {});
    const cd v0 = std::polar(kBase.U, kBase.delta);
    const cd ic0 = cd(0, p.C_f) * v0;
    const Eigen::Matrix2d Vm = complex_as_real(v0), Cj = Eigen::Vector2d(1, -1).asDiagonal();
    const Eigen::Matrix2d Jr = complex_as_real(cd(0, 1));
    for (cd s : {cd(0, 0), cd(0, 80.0), cd(-3.0, 500.0)}) {
        // dS = dv conj(ic0) + v0 conj(C (s/w0 + j) dv), dv = v0 (u1 + j u2)
        const Eigen::Matrix2cd ref = (complex_as_real(std::conj(ic0)) * Vm).cast<cd>() +
                                     (Vm * Cj).cast<cd>() *
                                         (p.C_f * s / m.omega0 * Eigen::Matrix2cd::Identity() + p.C_f * Jr.cast<cd>()) *
                                         Vm.cast<cd>();
        const Eigen::Matrix2cd got = m.K_static.cast<cd>() + s * m.K_rate.cast<cd>();
        CHECK((got - ref).norm() < 1e-12);
    }
}

TEST_CASE("polar input map composes the grid-frame input matrices")
{
    const auto m = linearize_converter(ConverterParams{}, kBase, {});
    const cd v0 = std::polar(kBase.U, kBase.delta);
    CHECK((m.B - m.B_grid * complex_as_real(v0)).norm() < 1e-12);
    CHECK((m.D - m.D_grid * complex_as_real(v0)).norm() < 1e-12);
}

TEST_CASE("complex coordinates round-trip")
{
    const auto m = linearize_converter(ConverterParams{}, kBase, {});
    const auto resp = eval_jcig(m, default_grid(0.1, 500.0, 30));
    const auto back = from_complex_jcig(to_complex_jcig(resp, kBase), kBase);
    for (size_t k = 0; k < resp.size(); ++k) CHECK((back.values[k] - resp.values[k]).norm() < 1e-12 * resp.values[k].norm());
}

TEST_CASE("interpolation is exact on nodes, log-linear between, and bounded")
{
    FreqResponse2x2 r;
    r.omegas = {1.0, 10.0, 100.0};
    r.values = {Eigen::Matrix2cd::Constant(1.0), Eigen::Matrix2cd::Constant(3.0), Eigen::Matrix2cd::Constant(cd(0, 5))};
    const auto f = interpolate(r);
    CHECK(std::abs(f(10.0)(0, 0) - 3.0) < 1e-15);
    CHECK(std::abs(f(std::sqrt(10.0))(1, 1) - 2.0) < 1e-12);
    CHECK_THROWS_WITH(f(0.5), doctest::Contains("outside the sampled response"));
    CHECK_THROWS_AS(f(101.0), Error);
}

TEST_CASE("response grids are validated")
{
    FreqResponse2x2 r;
    r.omegas = {1.0, 1.0};
    r.values = {Eigen::Matrix2cd::Identity(), Eigen::Matrix2cd::Identity()};
    CHECK_THROWS_WITH(r.validate(), doctest::Contains("strictly ascending"));
    r.omegas = {1.0, 2.0};
    r.values.pop_back();
    CHECK_THROWS_WITH(r.validate(), doctest::Contains("mismatched"));
}

TEST_CASE("response CSV round-trips")
{
    const auto m = linearize_converter(ConverterParams{}, kBase, {});
    const auto resp = eval_jcig(m, default_grid(0.1, 1000.0, 25));
    const auto path = (std::filesystem::temp_directory_path() / "nmpz_resp_test.csv").string();
    write_response_csv(path, resp);
    const auto back = read_response_csv(path);
    REQUIRE(back.size() == resp.size());
    for (size_t k = 0; k < resp.size(); ++k) {
        CHECK(back.omegas[k] == doctest::Approx(resp.omegas[k]).epsilon(1e-14));
        CHECK((back.values[k] - resp.values[k]).norm() < 1e-13 * resp.values[k].norm());
    }
    std::filesystem::remove(path);
}

TEST_CASE("parameter validation")
{
    ConverterParams p;
    p.t_vff = 0.0;
    CHECK_THROWS_WITH(p.validate(), doctest::Contains("t_vff"));
    p = ConverterParams{};
    p.L_f = -1.0;
    CHECK_THROWS_WITH(p.validate(), doctest::Contains("L_f"));
    CHECK_THROWS_AS(linearize_converter(ConverterParams{}, {0.5, 0.0, 0.0, 0.0}, {}), Error);
}

TEST_CASE("default grid is log spaced")
{
    const auto g = default_grid(0.1, 100.0, 4);
    REQUIRE(g.size() == 4);
    CHECK(g[0] == doctest::Approx(2 * M_PI * 0.1));
    CHECK(g[3] == doctest::Approx(2 * M_PI * 100.0));
    CHECK(g[2] / g[1] == doctest::Approx(10.0));
}
