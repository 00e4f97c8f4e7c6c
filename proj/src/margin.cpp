#include "nmpz/margin.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "nmpz/error.hpp"
#include "nmpz/jacobian.hpp"
#include "nmpz/scenario.hpp"

namespace nmpz {

namespace {

constexpr double kInvPhi = 0.6180339887498949;

// Golden-section search for the minimum of f on [a, b]; returns (x, f(x)).
template <class F>
std::pair<double, double> golden_min(F f, double a, double b, int iters = 40)
{
    double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters; ++i) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = f(d);
        }
    }
    return fc < fd ? std::make_pair(c, fc) : std::make_pair(d, fd);
}

std::string hz(double omega)
{
    std::ostringstream os;
    os << std::setprecision(6) << omega / (2 * M_PI) << " Hz";
    return os.str();
}

double min_singular(const Eigen::MatrixXcd& M)
{
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

// Smallest singular value of I + C^-1 P.
double return_difference(const Eigen::MatrixXcd& P, const Eigen::MatrixXcd& C, double omega)
{
    if (P.rows() != C.rows() || P.cols() != C.cols() || P.rows() != P.cols())
        throw Error("plant and controller sizes differ");
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(C);
    if (!(lu.rcond() > 1e-13)) throw Error("controller matrix is singular at " + hz(omega));
    const Eigen::MatrixXcd M = Eigen::MatrixXcd::Identity(P.rows(), P.cols()) + lu.solve(P);
    return min_singular(M);
}

} // namespace

SensitivitySweep sensitivity_sweep(const MatrixFn& plant, const MatrixFn& controller,
                                   const std::vector<double>& omegas, bool refine)
{
    if (omegas.empty()) throw Error("sensitivity sweep needs a non-empty grid");
    auto sigma = [&](double w) {
        const double s = return_difference(plant(w), controller(w), w);
        return s > 0.0 ? 1.0 / s : std::numeric_limits<double>::infinity();
    };

    SensitivitySweep r;
    r.omegas = omegas;
    r.sigma_max.reserve(omegas.size());
    size_t kmax = 0;
    for (size_t k = 0; k < omegas.size(); ++k) {
        r.sigma_max.push_back(sigma(omegas[k]));
        if (r.sigma_max[k] > r.sigma_max[kmax]) kmax = k;
    }
    r.peak = r.sigma_max[kmax];
    r.peak_omega = omegas[kmax];

    if (refine && omegas.size() >= 3 && std::isfinite(r.peak)) {
        const double a = std::log(omegas[kmax == 0 ? 0 : kmax - 1]);
        const double b = std::log(omegas[std::min(kmax + 1, omegas.size() - 1)]);
        auto [x, fx] = golden_min([&](double lw) { return -sigma(std::exp(lw)); }, a, b);
        if (-fx > r.peak) {
            r.peak = -fx;
            r.peak_omega = std::exp(x);
        }
    }
    return r;
}

Eigen::Matrix2cd CriticalSubsystem::jeq_net(cd s, cd mu) const
{
    const ScalarKernels k(omega0);
    Eigen::Matrix2cd J;
    J << 1.0, k.gamma(s) * mu, k.gamma_conj(s) * std::conj(mu), 1.0;
    return J;
}

Eigen::Matrix2cd CriticalSubsystem::jeq_cig_at(double omega) const
{
    const auto& g = jeq_cig.omegas;
    auto it = std::lower_bound(g.begin(), g.end(), omega);
    if (it != g.end() && *it == omega) return jeq_cig.values[static_cast<size_t>(it - g.begin())];
    return jeq_cig_fn(omega);
}

SensitivitySweep CriticalSubsystem::sweep(cd mu, bool refine) const
{
    return sensitivity_sweep([&](double w) -> Eigen::MatrixXcd { return jeq_net(cd(0, w), mu); },
                             [&](double w) -> Eigen::MatrixXcd { return jeq_cig_at(w); }, jeq_cig.omegas,
                             refine);
}

namespace {

Eigen::Matrix2cd combine(const Eigen::VectorXcd& w, const std::vector<Eigen::Matrix2cd>& J)
{
    Eigen::Matrix2cd out = Eigen::Matrix2cd::Zero();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double a2 = std::norm(w(i));
        out(0, 0) += a2 * J[i](0, 0);
        out(0, 1) += std::conj(w(i)) * std::conj(w(i)) * J[i](0, 1);
        out(1, 0) += w(i) * w(i) * J[i](1, 0);
        out(1, 1) += a2 * J[i](1, 1);
    }
    return out;
}

} // namespace

CriticalSubsystem build_subsystem(const NmpzResult& z, const std::vector<ResponseFn>& complex_jcig,
                                  const std::vector<double>& omegas)
{
    if (static_cast<Eigen::Index>(complex_jcig.size()) != z.w1.size())
        throw Error("converter response count differs from the eigenvector length");
    CriticalSubsystem sub;
    sub.mu1 = z.mu1;
    sub.w1 = z.w1;
    sub.omega0 = z.omega0;
    const Eigen::VectorXcd w = z.w1;
    sub.jeq_cig_fn = [w, complex_jcig](double omega) {
        std::vector<Eigen::Matrix2cd> J;
        for (const auto& f : complex_jcig) J.push_back(f(omega));
        return combine(w, J);
    };
    sub.jeq_cig.omegas = omegas;
    for (double om : omegas) sub.jeq_cig.values.push_back(sub.jeq_cig_fn(om));
    sub.jeq_cig.validate();
    return sub;
}

CriticalSubsystem build_subsystem(const NmpzResult& z, const std::vector<FreqResponse2x2>& complex_jcig)
{
    if (complex_jcig.empty()) throw Error("no converter responses given");
    for (const auto& r : complex_jcig) {
        r.validate();
        if (r.omegas != complex_jcig.front().omegas) throw Error("converter responses use mismatched grids");
    }
    std::vector<ResponseFn> fns;
    for (const auto& r : complex_jcig) fns.push_back(interpolate(r));
    CriticalSubsystem sub = build_subsystem(z, fns, complex_jcig.front().omegas);
    // Keep the exact sums on the grid rather than re-interpolated values.
    for (size_t k = 0; k < sub.jeq_cig.omegas.size(); ++k) {
        std::vector<Eigen::Matrix2cd> J;
        for (const auto& r : complex_jcig) J.push_back(r.values[k]);
        sub.jeq_cig.values[k] = combine(sub.w1, J);
    }
    return sub;
}

IndicatorValue boundary_indicator(const CriticalSubsystem& sub, double r)
{
    const cd mu = std::polar(r, std::arg(sub.mu1));
    const auto& g = sub.jeq_cig.omegas;
    auto value = [&](double w, const Eigen::Matrix2cd& C) {
        return return_difference(sub.jeq_net(cd(0, w), mu), C, w);
    };
    size_t kmin = 0;
    double vmin = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < g.size(); ++k) {
        const double v = value(g[k], sub.jeq_cig.values[k]);
        if (v < vmin) {
            vmin = v;
            kmin = k;
        }
    }
    IndicatorValue out{vmin, g[kmin]};
    if (g.size() >= 3) {
        const double a = std::log(g[kmin == 0 ? 0 : kmin - 1]);
        const double b = std::log(g[std::min(kmin + 1, g.size() - 1)]);
        auto [x, fx] = golden_min(
            [&](double lw) {
                const double w = std::exp(lw);
                return value(w, sub.jeq_cig_fn(w));
            },
            a, b);
        if (fx < out.value) out = {fx, std::exp(x)};
    }
    return out;
}

ThresholdResult find_threshold(const CriticalSubsystem& sub, const ThresholdOptions& opt)
{
    const double m = std::abs(sub.mu1);
    if (!(m > 0.0)) throw Error("critical subsystem has zero coupling mu1");
    const int K = std::max(opt.scan_points, 3);
    const double r_hi = opt.ray_factor * m, r_lo = opt.min_factor * m;

    ThresholdResult res;
    for (int k = 0; k < K; ++k) {
        const double r = r_hi * std::pow(r_lo / r_hi, static_cast<double>(k) / (K - 1));
        res.scan_r.push_back(r);
        res.scan_indicator.push_back(boundary_indicator(sub, r).value);
    }
    const auto& R = res.scan_r;
    const auto& G = res.scan_indicator;
    if (G[0] < opt.tol)
        throw Error("indicator is below tolerance already at the strongest tested grid; widen ray_factor");

    // Scanning from strong to weak grid, the first dip that reaches below tol
    // is the boundary. The indicator touches zero where a closed-loop pole
    // crosses the axis, so dips are located before bisecting the upper edge.
    for (int k = 1; k < K; ++k) {
        const bool below = G[k] < opt.tol;
        const bool local_min = k + 1 < K && G[k] <= G[k - 1] && G[k] <= G[k + 1];
        if (!below && !local_min) continue;

        double r_dip = R[k], g_dip = G[k];
        if (!below) {
            auto [x, fx] = golden_min([&](double lr) { return boundary_indicator(sub, std::exp(lr)).value; },
                                      std::log(R[k + 1]), std::log(R[k - 1]), 60);
            if (fx < g_dip) {
                r_dip = std::exp(x);
                g_dip = fx;
            }
            if (g_dip >= opt.tol) continue;
        }

        double lo = r_dip, hi = R[k - 1];
        while (hi - lo > opt.rel_tol * hi) {
            const double mid = 0.5 * (lo + hi);
            if (boundary_indicator(sub, mid).value < opt.tol)
                lo = mid;
            else
                hi = mid;
        }
        const IndicatorValue at = boundary_indicator(sub, r_dip);
        res.r_c = 0.5 * (lo + hi);
        res.rho_zc = res.r_c * res.r_c;
        res.indicator = at.value;
        res.omega_c = at.omega;
        res.bracket_lo = lo;
        res.bracket_hi = hi;
        return res;
    }
    throw NoBoundaryError("no synchronization boundary found on ray");
}

std::string to_string(Verdict v)
{
    switch (v) {
    case Verdict::Stable: return "stable";
    case Verdict::VoltageCritical: return "voltage-critical";
    case Verdict::SynchronizationCritical: return "synchronization-critical";
    case Verdict::Unstable: return "unstable";
    }
    return "unstable";
}

Verdict classify(double M_V, double M_S, double band)
{
    const bool voltage_smaller = M_V <= M_S;
    const double m = voltage_smaller ? M_V : M_S;
    if (m <= -band) return Verdict::Unstable;
    if (m < band) return voltage_smaller ? Verdict::VoltageCritical : Verdict::SynchronizationCritical;
    return Verdict::Stable;
}

ConverterResponses converter_responses(const Scenario& sc, const OperatingPoint& op)
{
    const auto specs = sc.converters_in_bus_order();
    ConverterResponses out;
    std::vector<double> imported_grid;
    for (size_t k = 0; k < specs.size(); ++k) {
        const auto& spec = specs[k];
        if (spec.params) {
            const ConverterModel m = linearize_converter(*spec.params, bus_point(op, static_cast<int>(k)), sc.base);
            out.jcig.push_back([m](double w) { return m.jcig(cd(0, w)); });
        } else {
            const FreqResponse2x2 r = read_response_csv(spec.response_csv);
            if (!imported_grid.empty() && r.omegas != imported_grid)
                throw Error("imported converter responses use mismatched grids");
            imported_grid = r.omegas;
            out.jcig.push_back(interpolate(r));
        }
    }
    out.omegas = imported_grid.empty() ? sc.grid() : imported_grid;
    return out;
}

SensitivitySweep full_system_sweep(const ComplexDressing& d, const std::vector<ResponseFn>& jcig,
                                   const std::vector<double>& omegas, double omega0, bool refine)
{
    const int n = d.size();
    if (static_cast<int>(jcig.size()) != n) throw Error("converter count differs from dressing size");
    auto controller = [&](double w) -> Eigen::MatrixXcd {
        Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
        for (int i = 0; i < n; ++i) {
            const Eigen::Matrix2cd J = jcig[i](w);
            C(i, i) = J(0, 0);
            C(i, n + i) = J(0, 1);
            C(n + i, i) = J(1, 0);
            C(n + i, n + i) = J(1, 1);
        }
        return C;
    };
    return sensitivity_sweep([&](double w) -> Eigen::MatrixXcd { return eval_jnet(d, cd(0, w), omega0); },
                             controller, omegas, refine);
}

MarginReport assess(const Scenario& sc)
{
    sc.validate();
    const double w0 = sc.base.omega0();
    MarginReport rep;
    rep.scenario = sc.name;

    ComplexDressing d;
    try {
        rep.op = scenario_operating_point(sc);
        const SusceptanceLaplacian lap = build_laplacian(sc.net, sc.base);
        rep.B = lap.B;
        d = dress(rep.op, lap);
    } catch (const std::exception& e) {
        throw staged("step 1 (operating point and grid matrices)", e);
    }

    try {
        rep.zeros = analyze_zeros(d, w0);
    } catch (const std::exception& e) {
        throw staged("step 2 (NMP-Z factor)", e);
    }

    CriticalSubsystem sub;
    try {
        const ConverterResponses cr = converter_responses(sc, rep.op);
        std::vector<ResponseFn> cplx;
        for (int i = 0; i < d.size(); ++i) {
            const double S = d.S(i), phi = d.phi(i);
            const ResponseFn f = cr.jcig[i];
            cplx.push_back([f, S, phi](double w) { return to_complex(f(w), S, phi); });
        }
        sub = build_subsystem(rep.zeros, cplx, cr.omegas);
        rep.subsystem_sweep = sub.sweep(sub.mu1);
        rep.full_sweep = full_system_sweep(d, cr.jcig, cr.omegas, w0);
    } catch (const std::exception& e) {
        throw staged("step 3 (critical subsystem)", e);
    }

    try {
        ThresholdOptions opt;
        opt.tol = sc.options.threshold_tol;
        opt.ray_factor = sc.options.ray_factor;
        rep.threshold = find_threshold(sub, opt);
    } catch (const NoBoundaryError&) {
        // Robust at every tested strength: the synchronization limit lies
        // below the scan floor, so only the voltage margin can bind.
        rep.threshold = ThresholdResult{};
        rep.threshold.found = false;
    } catch (const std::exception& e) {
        throw staged("step 4 (synchronization threshold)", e);
    }

    rep.rho_z = rep.zeros.rho_z;
    rep.rho_zc = rep.threshold.rho_zc;
    rep.M_V = rep.rho_z - 1.0;
    rep.M_S = rep.rho_z - rep.rho_zc;
    rep.verdict = classify(rep.M_V, rep.M_S, sc.options.critical_band);
    rep.det_jnet0 = eval_jnet(d, cd(0, 0), w0).determinant().real();
    return rep;
}

std::string format_report(const MarginReport& r)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    const double w0 = r.zeros.omega0;
    os << "scenario          " << r.scenario << "\n";
    os << "buses            ";
    for (int id : r.op.bus_ids) os << " " << id;
    os << "\n";
    for (int i = 0; i < r.op.size(); ++i)
        os << "  bus " << r.op.bus_ids[i] << "  P " << r.op.P(i) << "  Q " << r.op.Q(i) << "  U " << r.op.U(i)
           << "  delta " << r.op.delta(i) << "\n";
    os << "lambdas          ";
    for (Eigen::Index i = 0; i < r.zeros.lambdas.size(); ++i) os << " " << r.zeros.lambdas(i);
    os << "\n";
    if (r.zeros.z_nmp[0])
        os << "critical zero     " << *r.zeros.z_nmp[0] << " rad/s (" << *r.zeros.z_nmp[0] / w0 << " w0)\n";
    else
        os << "critical zero     none (past static limit)\n";
    os << "mu1               " << r.zeros.mu1.real() << (r.zeros.mu1.imag() < 0 ? " - j" : " + j")
       << std::abs(r.zeros.mu1.imag()) << "\n";
    os << "rho_z             " << r.rho_z << "\n";
    if (r.threshold.found)
        os << "rho_zc            " << r.rho_zc << "  (boundary at " << r.threshold.omega_c / (2 * M_PI) << " Hz)\n";
    else
        os << "rho_zc            none (no boundary on the tested ray)\n";
    os << "M_V               " << r.M_V << "\n";
    os << "M_S               " << r.M_S << "\n";
    os << "subsystem peak    " << r.subsystem_sweep.peak << " at " << r.subsystem_sweep.peak_hz()
       << " Hz (1/peak " << r.subsystem_sweep.margin() << ")\n";
    os << "full-system peak  " << r.full_sweep.peak << " at " << r.full_sweep.peak_hz() << " Hz (1/peak "
       << r.full_sweep.margin() << ")\n";
    os << "verdict           " << to_string(r.verdict) << "\n";
    return os.str();
}

std::string report_yaml(const MarginReport& r)
{
    YAML::Emitter out;
    out.SetDoublePrecision(12);
    out << YAML::BeginMap;
    out << YAML::Key << "scenario" << YAML::Value << r.scenario;
    out << YAML::Key << "operating_point" << YAML::Value << YAML::BeginSeq;
    for (int i = 0; i < r.op.size(); ++i)
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "bus" << YAML::Value << r.op.bus_ids[i] << YAML::Key
            << "p" << YAML::Value << r.op.P(i) << YAML::Key << "q" << YAML::Value << r.op.Q(i) << YAML::Key << "u"
            << YAML::Value << r.op.U(i) << YAML::Key << "delta" << YAML::Value << r.op.delta(i) << YAML::EndMap;
    out << YAML::EndSeq;
    out << YAML::Key << "susceptance_laplacian" << YAML::Value << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < r.B.rows(); ++i) {
        out << YAML::Flow << YAML::BeginSeq;
        for (Eigen::Index j = 0; j < r.B.cols(); ++j) out << r.B(i, j);
        out << YAML::EndSeq;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "lambdas" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < r.zeros.lambdas.size(); ++i) out << r.zeros.lambdas(i);
    out << YAML::EndSeq;
    out << YAML::Key << "zeros_rad_s" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& z : r.zeros.z_nmp) {
        if (z)
            out << *z;
        else
            out << YAML::Null;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "w1_abs" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < r.zeros.w1.size(); ++i) out << std::abs(r.zeros.w1(i));
    out << YAML::EndSeq;
    out << YAML::Key << "w1_arg" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Eigen::Index i = 0; i < r.zeros.w1.size(); ++i) out << std::arg(r.zeros.w1(i));
    out << YAML::EndSeq;
    out << YAML::Key << "mu1" << YAML::Value << YAML::Flow << YAML::BeginSeq << r.zeros.mu1.real()
        << r.zeros.mu1.imag() << YAML::EndSeq;
    out << YAML::Key << "rho_z" << YAML::Value << r.rho_z;
    out << YAML::Key << "rho_zc" << YAML::Value << r.rho_zc;
    out << YAML::Key << "threshold_found" << YAML::Value << r.threshold.found;
    out << YAML::Key << "threshold_hz" << YAML::Value << r.threshold.omega_c / (2 * M_PI);
    out << YAML::Key << "M_V" << YAML::Value << r.M_V;
    out << YAML::Key << "M_S" << YAML::Value << r.M_S;
    out << YAML::Key << "verdict" << YAML::Value << to_string(r.verdict);
    out << YAML::Key << "subsystem_peak" << YAML::Value << r.subsystem_sweep.peak;
    out << YAML::Key << "subsystem_peak_hz" << YAML::Value << r.subsystem_sweep.peak_hz();
    out << YAML::Key << "full_peak" << YAML::Value << r.full_sweep.peak;
    out << YAML::Key << "full_peak_hz" << YAML::Value << r.full_sweep.peak_hz();
    out << YAML::Key << "det_jnet0" << YAML::Value << r.det_jnet0;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::string sweep_csv(const MarginReport& r)
{
    std::ostringstream os;
    os << "f_Hz,sigma_subsystem,sigma_full,inv_subsystem,inv_full\n" << std::setprecision(10);
    const auto& a = r.subsystem_sweep;
    const auto& b = r.full_sweep;
    for (size_t k = 0; k < a.omegas.size(); ++k)
        os << a.omegas[k] / (2 * M_PI) << "," << a.sigma_max[k] << "," << b.sigma_max[k] << ","
           << 1.0 / a.sigma_max[k] << "," << 1.0 / b.sigma_max[k] << "\n";
    return os.str();
}

} // namespace nmpz
