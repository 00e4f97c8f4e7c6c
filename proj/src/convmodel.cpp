#include "nmpz/convmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <unsupported/Eigen/AutoDiff>

#include "nmpz/error.hpp"
#include "nmpz/io.hpp"

namespace nmpz {

namespace {

constexpr int kStates = 10;
constexpr int kInputs = 4;

const std::vector<std::string> kLabels = {
    "iL_d", "iL_q", "theta_pll", "x_pll", "x_P", "x_Q", "x_id", "x_iq", "vff_d", "vff_q"};

template <class T>
void rhs(const ConverterParams& p, const PllGains& g, double w0, double un, const T* x, const T* in,
         T* dx, T* pq)
{
    using std::cos;
    using std::sin;
    const T& iLd = x[0];
    const T& iLq = x[1];
    const T& th = x[2];
    const T& vd = in[0];
    const T& vq = in[1];

    const T c = cos(th), s = sin(th);
    const T vcd = c * vd + s * vq, vcq = -s * vd + c * vq;
    const T icd = c * iLd + s * iLq, icq = -s * iLd + c * iLq;

    const T P = vd * iLd + vq * iLq;
    const T Q = vq * iLd - vd * iLq;
    const T eP = in[2] - P, eQ = in[3] - Q;
    const T idr = p.kp_P * eP + x[4];
    const T iqr = -(p.kp_Q * eQ + x[5]);
    const T ud = idr - icd, uq = iqr - icq;
    const T ecd = p.kp_i * ud + x[6] - p.L_f * icq + x[8];
    const T ecq = p.kp_i * uq + x[7] + p.L_f * icd + x[9];
    const T ed = c * ecd - s * ecq, eq = s * ecd + c * ecq;

    const double k = w0 / p.L_f;
    const T err = vcq / un;
    dx[0] = k * (ed - vd - p.R_f * iLd + p.L_f * iLq);
    dx[1] = k * (eq - vq - p.R_f * iLq - p.L_f * iLd);
    dx[2] = g.kp * err + x[3];
    dx[3] = g.ki * err;
    dx[4] = p.ki_P * eP;
    dx[5] = p.ki_Q * eQ;
    dx[6] = p.ki_i * ud;
    dx[7] = p.ki_i * uq;
    dx[8] = (vcd - x[8]) / p.t_vff;
    dx[9] = (vcq - x[9]) / p.t_vff;
    pq[0] = P;
    pq[1] = Q;
}

void check_grid(const std::vector<double>& w)
{
    if (w.empty()) throw Error("frequency grid is empty");
    for (size_t i = 0; i < w.size(); ++i) {
        if (!(w[i] > 0.0) || !std::isfinite(w[i])) throw Error("frequency grid must be positive and finite");
        if (i && !(w[i] > w[i - 1])) throw Error("frequency grid must be strictly ascending");
    }
}

} // namespace

void ConverterParams::validate() const
{
    if (!(L_f > 0.0)) throw Error("converter L_f must be positive");
    if (!(pll_bw > 0.0)) throw Error("converter pll_bw must be positive");
    if (!(t_vff > 0.0)) throw Error("converter t_vff must be positive");
    for (double g : {C_f, R_f, kp_i, ki_i, kp_P, ki_P, kp_Q, ki_Q, C_dc})
        if (!(g >= 0.0)) throw Error("converter gains and filter values must be non-negative");
}

PllGains pll_gains(double pll_bw_hz)
{
    if (!(pll_bw_hz > 0.0)) throw Error("converter pll_bw must be positive");
    const double wn = 2.0 * M_PI * pll_bw_hz;
    return {2.0 * 0.707 * wn, wn * wn};
}

BusOperatingPoint bus_point(const OperatingPoint& op, int k)
{
    return {op.P(k), op.Q(k), op.U(k), op.delta(k)};
}

void converter_rhs(const ConverterParams& p, double omega0, double u_norm, const double* x,
                   const double* in, double* dx, double* pq)
{
    rhs(p, pll_gains(p.pll_bw), omega0, u_norm, x, in, dx, pq);
}

ConverterModel linearize_converter(const ConverterParams& params, const BusOperatingPoint& op,
                                   const SystemBase& base)
{
    params.validate();
    if (!(op.U > 0.0)) throw Error("converter terminal voltage must be positive");
    const double w0 = base.omega0();
    const ConverterParams& p = params;

    const cd v = std::polar(op.U, op.delta);
    const double QL = op.Q - p.C_f * op.U * op.U;
    const cd iL = std::conj(cd(op.P, QL) / v);
    const cd rot = std::polar(1.0, -op.delta);
    const cd ic = iL * rot;
    const cd e = v + cd(p.R_f, p.L_f) * iL;
    const cd xi = e * rot - cd(0, p.L_f) * ic - op.U;

    Eigen::Matrix<double, kStates + kInputs, 1> z0;
    z0 << iL.real(), iL.imag(), op.delta, 0.0, ic.real(), -ic.imag(), xi.real(), xi.imag(), op.U, 0.0,
        v.real(), v.imag(), op.P, QL;

    using AD = Eigen::AutoDiffScalar<Eigen::Matrix<double, kStates + kInputs, 1>>;
    std::array<AD, kStates + kInputs> z;
    for (int i = 0; i < kStates + kInputs; ++i) z[i] = AD(z0(i), kStates + kInputs, i);
    std::array<AD, kStates> dx;
    std::array<AD, 2> pq;
    rhs(p, pll_gains(p.pll_bw), w0, op.U, z.data(), z.data() + kStates, dx.data(), pq.data());

    ConverterModel m;
    m.A.resize(kStates, kStates);
    m.B_grid.resize(kStates, 2);
    m.B_ref.resize(kStates, 2);
    m.C.resize(2, kStates);
    for (int r = 0; r < kStates; ++r) {
        if (std::abs(dx[r].value()) > 1e-9)
            throw Error("converter equilibrium residual too large in state " + kLabels[r]);
        const auto& g = dx[r].derivatives();
        m.A.row(r) = g.head(kStates).transpose();
        m.B_grid.row(r) = g.segment(kStates, 2).transpose();
        m.B_ref.row(r) = g.tail(2).transpose();
    }
    for (int r = 0; r < 2; ++r) {
        const auto& g = pq[r].derivatives();
        m.C.row(r) = g.head(kStates).transpose();
        m.D_grid.row(r) = g.segment(kStates, 2).transpose();
    }

    Eigen::Matrix2d M;
    M << v.real(), -v.imag(), v.imag(), v.real();
    m.B = m.B_grid * M;
    m.D = m.D_grid * M;

    const double cu2 = p.C_f * op.U * op.U;
    m.K_static << 0.0, 0.0, -2.0 * cu2, 0.0;
    m.K_rate << cu2 / w0, 0.0, 0.0, -cu2 / w0;

    m.x0 = z0.head(kStates);
    m.labels = kLabels;
    m.params = params;
    m.op = op;
    m.omega0 = w0;
    return m;
}

Eigen::Matrix2cd ConverterModel::jcig(cd s) const
{
    const Eigen::MatrixXcd R = s * Eigen::MatrixXcd::Identity(states(), states()) - A.cast<cd>();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(R);
    if (!(lu.rcond() > 1e-14)) {
        std::ostringstream os;
        os << "(sI - A) is numerically singular at s = " << s << " (f = " << std::abs(s) / (2 * M_PI) << " Hz)";
        throw Error(os.str());
    }
    const Eigen::Matrix2cd G = C.cast<cd>() * lu.solve(B.cast<cd>()) + D.cast<cd>();
    return -G + K_static.cast<cd>() + s * K_rate.cast<cd>();
}

Eigen::Matrix2cd ConverterModel::reference_gain(cd s) const
{
    const Eigen::MatrixXcd R = s * Eigen::MatrixXcd::Identity(states(), states()) - A.cast<cd>();
    return C.cast<cd>() * R.partialPivLu().solve(B_ref.cast<cd>());
}

void FreqResponse2x2::validate() const
{
    check_grid(omegas);
    if (values.size() != omegas.size()) throw Error("response has mismatched grid and value counts");
    for (const auto& v : values)
        if (!v.allFinite()) throw Error("response contains non-finite entries");
}

std::vector<double> default_grid(double f_min_hz, double f_max_hz, int points)
{
    if (!(f_min_hz > 0.0) || !(f_max_hz > f_min_hz) || points < 1)
        throw Error("frequency grid needs 0 < f_min < f_max and at least one point");
    std::vector<double> w(points);
    if (points == 1) {
        w[0] = 2 * M_PI * f_min_hz;
        return w;
    }
    const double a = std::log10(f_min_hz), b = std::log10(f_max_hz);
    for (int i = 0; i < points; ++i) w[i] = 2 * M_PI * std::pow(10.0, a + (b - a) * i / (points - 1));
    return w;
}

FreqResponse2x2 eval_jcig(const ConverterModel& m, const std::vector<double>& omegas)
{
    check_grid(omegas);
    FreqResponse2x2 r;
    r.omegas = omegas;
    r.values.reserve(omegas.size());
    for (double w : omegas) r.values.push_back(m.jcig(cd(0, w)));
    return r;
}

Eigen::Matrix2cd to_complex(const Eigen::Matrix2cd& J, double S, double phi)
{
    if (S == 0.0) throw Error("zero apparent power at converter bus");
    const double h = 1.0 / std::sqrt(2.0);
    Eigen::Matrix2cd Tj, Tp;
    Tj << h, cd(0, h), h, cd(0, -h);
    Tp << std::cos(phi), std::sin(phi), -std::sin(phi), std::cos(phi);
    Tp /= S;
    return Tj * (Tp * J) * Tj.adjoint();
}

Eigen::Matrix2cd from_complex(const Eigen::Matrix2cd& Jc, double S, double phi)
{
    if (S == 0.0) throw Error("zero apparent power at converter bus");
    const double h = 1.0 / std::sqrt(2.0);
    Eigen::Matrix2cd Tj, Tpi;
    Tj << h, cd(0, h), h, cd(0, -h);
    Tpi << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    Tpi *= S;
    return Tpi * (Tj.adjoint() * Jc * Tj);
}

FreqResponse2x2 to_complex_jcig(const FreqResponse2x2& resp, const BusOperatingPoint& op)
{
    const double S = std::hypot(op.P, op.Q), phi = std::atan2(op.Q, op.P);
    FreqResponse2x2 r{resp.omegas, {}};
    for (const auto& v : resp.values) r.values.push_back(to_complex(v, S, phi));
    return r;
}

FreqResponse2x2 from_complex_jcig(const FreqResponse2x2& resp, const BusOperatingPoint& op)
{
    const double S = std::hypot(op.P, op.Q), phi = std::atan2(op.Q, op.P);
    FreqResponse2x2 r{resp.omegas, {}};
    for (const auto& v : resp.values) r.values.push_back(from_complex(v, S, phi));
    return r;
}

ResponseFn interpolate(const FreqResponse2x2& resp)
{
    resp.validate();
    return [resp](double w) -> Eigen::Matrix2cd {
        const auto& g = resp.omegas;
        if (w < g.front() || w > g.back()) {
            std::ostringstream os;
            os << "frequency " << w / (2 * M_PI) << " Hz lies outside the sampled response";
            throw Error(os.str());
        }
        auto it = std::lower_bound(g.begin(), g.end(), w);
        const size_t k = static_cast<size_t>(it - g.begin());
        if (g[k] == w) return resp.values[k];
        const double t = std::log(w / g[k - 1]) / std::log(g[k] / g[k - 1]);
        return (1.0 - t) * resp.values[k - 1] + t * resp.values[k];
    };
}

void write_response_csv(const std::string& path, const FreqResponse2x2& resp)
{
    resp.validate();
    std::ostringstream os;
    os << "f_Hz,re11,im11,re12,im12,re21,im21,re22,im22\n" << std::setprecision(17);
    for (size_t k = 0; k < resp.size(); ++k) {
        const auto& v = resp.values[k];
        os << resp.omegas[k] / (2 * M_PI);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) os << "," << v(r, c).real() << "," << v(r, c).imag();
        os << "\n";
    }
    write_file_atomic(path, os.str());
}

FreqResponse2x2 read_response_csv(const std::string& path)
{
    std::istringstream in(read_file(path));
    FreqResponse2x2 r;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!(std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '.' || line[0] == '+')) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double f;
        std::array<double, 8> v{};
        ls >> f;
        for (auto& x : v) ls >> x;
        if (!ls) throw Error(path + ":" + std::to_string(lineno) + ": expected 9 numeric columns");
        Eigen::Matrix2cd m;
        m << cd(v[0], v[1]), cd(v[2], v[3]), cd(v[4], v[5]), cd(v[6], v[7]);
        r.omegas.push_back(2 * M_PI * f);
        r.values.push_back(m);
    }
    r.validate();
    return r;
}

} // namespace nmpz
