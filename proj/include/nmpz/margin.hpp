#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nmpz/convmodel.hpp"
#include "nmpz/error.hpp"
#include "nmpz/factor.hpp"

namespace nmpz {

struct Scenario;

using MatrixFn = std::function<Eigen::MatrixXcd(double omega)>;

struct SensitivitySweep {
    std::vector<double> omegas;
    std::vector<double> sigma_max; // largest singular value of S(j omega)
    double peak = 1.0;             // refined H-infinity norm estimate
    double peak_omega = 0.0;

    double margin() const { return 1.0 / peak; }
    double peak_hz() const { return peak_omega / (2 * 3.14159265358979323846); }
};

// S = (I + controller^-1 plant)^-1 over the grid, peak refined between grid points.
SensitivitySweep sensitivity_sweep(const MatrixFn& plant, const MatrixFn& controller,
                                   const std::vector<double>& omegas, bool refine = true);

struct CriticalSubsystem {
    cd mu1;
    Eigen::VectorXcd w1;
    double omega0 = 0.0;
    FreqResponse2x2 jeq_cig; // weighted combination sampled on the shared grid
    ResponseFn jeq_cig_fn;   // same combination at any frequency

    Eigen::Matrix2cd jeq_net(cd s, cd mu) const;
    Eigen::Matrix2cd jeq_net(cd s) const { return jeq_net(s, mu1); }
    // Sampled combination on grid points, the exact function elsewhere.
    Eigen::Matrix2cd jeq_cig_at(double omega) const;
    SensitivitySweep sweep(cd mu, bool refine = true) const;
};

// Inputs are complex-coordinate converter responses in bus order.
CriticalSubsystem build_subsystem(const NmpzResult& z, const std::vector<FreqResponse2x2>& complex_jcig);
CriticalSubsystem build_subsystem(const NmpzResult& z, const std::vector<ResponseFn>& complex_jcig,
                                  const std::vector<double>& omegas);

struct ThresholdOptions {
    double tol = 1e-3;
    double ray_factor = 10.0;   // search r in (0, ray_factor * |mu1|]
    double min_factor = 1e-2;   // lower end of the coarse scan, relative to |mu1|
    int scan_points = 160;
    double rel_tol = 1e-4;
};

struct ThresholdResult {
    double rho_zc = 0.0;
    double r_c = 0.0;
    double indicator = 0.0;  // indicator value at the accepted dip
    double omega_c = 0.0;    // frequency where the dip occurs
    double bracket_lo = 0.0, bracket_hi = 0.0;
    bool found = true;       // false: no crossing down to the scan floor, rho_zc left at 0
    std::vector<double> scan_r, scan_indicator;
};

// Thrown when the indicator never crosses tol on the tested ray.
class NoBoundaryError : public Error {
public:
    using Error::Error;
};

struct IndicatorValue {
    double value;
    double omega;
};

// min over omega of the smallest singular value of I + Jcig^-1 Jnet(r e^{j arg mu1}).
IndicatorValue boundary_indicator(const CriticalSubsystem& sub, double r);

ThresholdResult find_threshold(const CriticalSubsystem& sub, const ThresholdOptions& opt = {});

enum class Verdict { Stable, VoltageCritical, SynchronizationCritical, Unstable };

std::string to_string(Verdict v);
Verdict classify(double M_V, double M_S, double band);

struct MarginReport {
    std::string scenario;
    OperatingPoint op;
    Eigen::MatrixXd B;
    NmpzResult zeros;
    double rho_z = 0.0, rho_zc = 0.0, M_V = 0.0, M_S = 0.0;
    Verdict verdict = Verdict::Stable;
    ThresholdResult threshold;
    SensitivitySweep subsystem_sweep, full_sweep;
    double det_jnet0 = 0.0;
};

// Per-converter real-coordinate J_CIG sources and the analysis grid.
struct ConverterResponses {
    std::vector<ResponseFn> jcig;
    std::vector<double> omegas;
};

ConverterResponses converter_responses(const Scenario& sc, const OperatingPoint& op);

// Full multi-converter sensitivity in real coordinates.
SensitivitySweep full_system_sweep(const ComplexDressing& d, const std::vector<ResponseFn>& jcig,
                                   const std::vector<double>& omegas, double omega0, bool refine = true);

MarginReport assess(const Scenario& sc);

std::string format_report(const MarginReport& r);
std::string report_yaml(const MarginReport& r);
std::string sweep_csv(const MarginReport& r);

} // namespace nmpz
