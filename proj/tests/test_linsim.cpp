#include <doctest.h>

#include "common.hpp"
#include "nmpz/jacobian.hpp"
#include "nmpz/linsim.hpp"
#include "nmpz/scenario.hpp"

using namespace nmpz;
using namespace testutil;

namespace {

// Dominant frequency of a zero-mean signal by a direct DFT scan.
double dominant_hz(const std::vector<double>& t, const Eigen::VectorXd& y, double f_lo, double f_hi)
{
    const double mean = y.mean();
    double best = 0.0, best_f = f_lo;
    for (double f = f_lo; f <= f_hi; f += 0.01) {
        cd acc = 0.0;
        for (size_t k = 0; k < t.size(); ++k) acc += (y(static_cast<Eigen::Index>(k)) - mean) * std::polar(1.0, -2 * M_PI * f * t[k]);
        if (std::abs(acc) > best) {
            best = std::abs(acc);
            best_f = f;
        }
    }
    return best_f;
}

} // namespace

TEST_CASE("RL loop to the infinite bus oscillates at the frame frequency")
{
    NetworkSpec net;
    net.buses = {{1, BusKind::Interior, 1.0}, {0, BusKind::Infinite, 1.0}};
    net.branches = {{1, 0, 0.01, 0.5}};
    net.shunts = {{1, true, 0.02, 0.3, 0.0}};
    const auto m = assemble(net, {}, {});
    REQUIRE(m.states() == 2);
    const auto ms = modes(m);
    const double sigma = -kW0 * 0.03 / 0.8;
    for (const auto& md : ms) {
        CHECK(md.lambda.real() == doctest::Approx(sigma).epsilon(1e-10));
        CHECK(std::abs(md.lambda.imag()) == doctest::Approx(kW0).epsilon(1e-10));
        CHECK(md.converter_share == 0.0);
    }
}

TEST_CASE("capacitor on an RL line rings at the LC resonances in the rotating frame")
{
    // Lossless L-C resonance wr = w0/sqrt(XC), seen at +-w0 +- wr in the dq frame.
    NetworkSpec net;
    net.buses = {{1, BusKind::Interior, 1.0}, {0, BusKind::Infinite, 1.0}};
    net.branches = {{1, 0, 0.0, 0.5}};
    net.shunts = {{1, false, 0.0, 0.0, -0.05}};
    const auto ms = modes(assemble(net, {}, {}));
    REQUIRE(ms.size() == 4);
    const double wr = kW0 / std::sqrt(0.5 * 0.05);
    std::vector<double> im;
    for (const auto& md : ms) {
        CHECK(std::abs(md.lambda.real()) < 1e-8 * kW0);
        im.push_back(md.lambda.imag());
    }
    std::sort(im.begin(), im.end());
    CHECK(im[0] == doctest::Approx(-kW0 - wr).epsilon(1e-10));
    CHECK(im[1] == doctest::Approx(kW0 - wr).epsilon(1e-10));
    CHECK(im[2] == doctest::Approx(-kW0 + wr).epsilon(1e-10));
    CHECK(im[3] == doctest::Approx(kW0 + wr).epsilon(1e-10));
}

TEST_CASE("closed-loop eigenvalues null the frequency-domain characteristic")
{
    // Lossless line so the state-space and the Jacobian description coincide.
    auto sc = load_scenario(scenario_path("scps_base"));
    sc.net.branches[0].r = 0.0;
    const auto m = assemble(sc);
    const auto op = scenario_operating_point(sc);
    const auto d = dress(op, build_laplacian(sc.net, sc.base));
    const auto cm = linearize_converter(*sc.converters[0].params, bus_point(op, 0), sc.base);
    int checked = 0;
    for (const auto& md : modes(m)) {
        if (md.lambda.imag() < 0 || std::abs(md.lambda) > 3000.0) continue;
        const cd s = md.lambda;
        const Eigen::Matrix2cd J = cm.jcig(s) + eval_jnet(d, s, sc.base.omega0()).topLeftCorner(2, 2);
        const double scale = cm.jcig(s).norm() * eval_jnet(d, s, sc.base.omega0()).norm();
        CHECK(std::abs(J.determinant()) < 1e-6 * scale);
        ++checked;
    }
    CHECK(checked >= 3);
}

TEST_CASE("the base single-converter point is stable, higher loading is less damped")
{
    const auto base = modes(assemble(load_scenario(scenario_path("scps_base"))));
    for (const auto& md : base) CHECK(md.lambda.real() < 0.0);
    const auto heavy = modes(assemble(load_scenario(scenario_path("scps_p105"))));
    CHECK(least_damped_converter_mode(heavy)->damping < least_damped_converter_mode(base)->damping);
}

TEST_CASE("modes are sorted by damping and carry participation shares")
{
    const auto ms = modes(assemble(load_scenario(scenario_path("case1"))));
    for (size_t i = 1; i < ms.size(); ++i) CHECK(ms[i].damping >= ms[i - 1].damping);
    for (const auto& md : ms) {
        CHECK(md.converter_share >= -1e-12);
        CHECK(md.converter_share <= 1.0 + 1e-9);
    }
    const auto lc = least_damped_converter_mode(ms);
    REQUIRE(lc);
    CHECK(lc->converter_share >= 0.1);
}

TEST_CASE("zero input gives zero output")
{
    const auto m = assemble(load_scenario(scenario_path("scps_base")));
    const auto tr = step_response(m, {}, 0.0, 0.02, 5e-5);
    CHECK(tr.y.cwiseAbs().maxCoeff() == 0.0);
    CHECK(tr.t.size() == 401);
    CHECK(tr.labels == std::vector<std::string>{"P_1", "Q_1", "U_1"});
}

TEST_CASE("step response settles at the commanded power")
{
    const auto m = assemble(load_scenario(scenario_path("scps_base")));
    const auto tr = step_response(m, {StepChannel::Kind::P_ref, -1}, 0.1, 1.5, 5e-5);
    CHECK(tr.y(tr.y.rows() - 1, 0) == doctest::Approx(0.1).epsilon(1e-3));
    CHECK(tr.y.col(0).cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("halving the step changes traces negligibly")
{
    const auto m = assemble(load_scenario(scenario_path("case1")));
    const double dt = 2e-5;
    const auto a = step_response(m, {}, 0.1, 0.2, dt);
    const auto b = step_response(m, {}, 0.1, 0.2, dt / 2);
    double err = 0.0;
    for (Eigen::Index k = 0; k < a.y.rows(); ++k) err = std::max(err, (a.y.row(k) - b.y.row(2 * k)).cwiseAbs().maxCoeff());
    CHECK(err < 1e-4 * a.y.cwiseAbs().maxCoeff());
}

TEST_CASE("oscillation in a lightly damped trace matches the modal frequency")
{
    const auto m = assemble(load_scenario(scenario_path("scps_p105")));
    const auto md = least_damped_converter_mode(modes(m));
    REQUIRE(md);
    const auto tr = step_response(m, {StepChannel::Kind::P_ref, 0}, 0.01, 1.0, 5e-5);
    const Eigen::VectorXd p = tr.y.col(0).tail(tr.y.rows() - 2000);
    const std::vector<double> t(tr.t.begin() + 2000, tr.t.end());
    CHECK(std::abs(dominant_hz(t, p, 5.0, 100.0) - md->freq_hz) < 0.5);
}

TEST_CASE("step parameters are checked")
{
    const auto m = assemble(load_scenario(scenario_path("scps_base")));
    CHECK_THROWS_WITH(step_response(m, {}, 0.1, 1.0, 0.0), doctest::Contains("positive"));
    CHECK_THROWS_WITH(step_response(m, {}, 0.1, 1.0, 1e-3), doctest::Contains("too coarse"));
    CHECK_THROWS_WITH(step_response(m, {StepChannel::Kind::Q_ref, 4}, 0.1, 1.0, 5e-5),
                      doctest::Contains("unknown converter"));
}

TEST_CASE("trace CSV has a header and one row per sample")
{
    const auto m = assemble(load_scenario(scenario_path("scps_base")));
    const auto csv = trace_csv(step_response(m, {}, 0.1, 0.001, 5e-5));
    CHECK(csv.rfind("t,P_1,Q_1,U_1\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 22);
}

TEST_CASE("converter bus without filter capacitance is rejected")
{
    auto sc = load_scenario(scenario_path("scps_base"));
    sc.converters[0].params->C_f = 0.0;
    CHECK_THROWS_WITH(assemble(sc), doctest::Contains("filter capacitance"));
}
