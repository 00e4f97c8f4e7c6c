#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nmpz/netmodel.hpp"

namespace nmpz {

struct ConverterParams {
    double L_f = 0.05, C_f = 0.05, R_f = 0.02;
    double kp_i = 0.3, ki_i = 10.0;
    double kp_P = 1.0, ki_P = 20.0;
    double kp_Q = 1.0, ki_Q = 20.0;
    double pll_bw = 15.0; // Hz
    double t_vff = 0.002; // s
    double C_dc = 0.038;  // carried for completeness, unused by the model

    void validate() const;
    bool operator==(const ConverterParams&) const = default;
};

struct PllGains {
    double kp;
    double ki;
};

// Natural frequency 2*pi*pll_bw with damping 0.707.
PllGains pll_gains(double pll_bw_hz);

struct BusOperatingPoint {
    double P = 0.0, Q = 0.0, U = 1.0, delta = 0.0; // Q is net injection after the filter capacitor
};

BusOperatingPoint bus_point(const OperatingPoint& op, int k);

// Linearized grid-following converter. The filter-inductor/controller part is
// (A, B_grid, C, D_grid) with grid-frame dq voltage inputs and measured
// (P, Q) outputs; B and D are the same inputs in polar form (dU/U, d delta).
// The filter capacitor adds K_static + s K_rate to the power drawn from the
// bus, so J_CIG(s) = -(C (sI - A)^-1 B + D) + K_static + s K_rate.
struct ConverterModel {
    Eigen::MatrixXd A, B, C, B_grid, B_ref;
    Eigen::Matrix2d D, D_grid, K_static, K_rate;
    Eigen::VectorXd x0;
    std::vector<std::string> labels;
    ConverterParams params;
    BusOperatingPoint op;
    double omega0 = 0.0;

    int states() const { return static_cast<int>(A.rows()); }
    // Full converter Jacobian at complex frequency s.
    Eigen::Matrix2cd jcig(cd s) const;
    // Measured (P, Q) per (P_ref, Q_ref) with terminal voltage held.
    Eigen::Matrix2cd reference_gain(cd s) const;
};

struct FreqResponse2x2 {
    std::vector<double> omegas; // rad/s, strictly ascending
    std::vector<Eigen::Matrix2cd> values;

    void validate() const;
    size_t size() const { return omegas.size(); }
};

using ResponseFn = std::function<Eigen::Matrix2cd(double omega)>;

// Nonlinear right-hand side, exposed for equilibrium checks and simulation.
// x has the layout of ConverterModel::labels; inputs are (v_d, v_q, P_ref, Q_ref).
void converter_rhs(const ConverterParams& p, double omega0, double u_norm, const double* x,
                   const double* in, double* dx, double* pq);

ConverterModel linearize_converter(const ConverterParams& params, const BusOperatingPoint& op,
                                   const SystemBase& base);

std::vector<double> default_grid(double f_min_hz = 0.01, double f_max_hz = 2000.0, int points = 400);

FreqResponse2x2 eval_jcig(const ConverterModel& m, const std::vector<double>& omegas);

// T_j (T_phi J) T_j^H per frequency; from_complex_jcig is the inverse.
Eigen::Matrix2cd to_complex(const Eigen::Matrix2cd& J, double S, double phi);
Eigen::Matrix2cd from_complex(const Eigen::Matrix2cd& Jc, double S, double phi);
FreqResponse2x2 to_complex_jcig(const FreqResponse2x2& resp, const BusOperatingPoint& op);
FreqResponse2x2 from_complex_jcig(const FreqResponse2x2& resp, const BusOperatingPoint& op);

// Log-frequency linear interpolation of a sampled response; errors outside the grid.
ResponseFn interpolate(const FreqResponse2x2& resp);

// CSV columns: f_Hz, re11, im11, re12, im12, re21, im21, re22, im22.
void write_response_csv(const std::string& path, const FreqResponse2x2& resp);
FreqResponse2x2 read_response_csv(const std::string& path);

} // namespace nmpz
