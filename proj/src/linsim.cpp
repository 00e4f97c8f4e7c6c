#include "nmpz/linsim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "nmpz/error.hpp"
#include "nmpz/scenario.hpp"

namespace nmpz {

namespace {

struct RLBranch {
    int from;  // bus index, -1 for ground
    int to;
    double r, x;
    std::string name;
};

Eigen::Matrix2d rot90()
{
    Eigen::Matrix2d J;
    J << 0.0, -1.0, 1.0, 0.0;
    return J;
}

} // namespace

ClosedLoopModel assemble(const NetworkSpec& net, const SystemBase& base,
                         const std::vector<PlacedConverter>& converters)
{
    net.validate(false);
    const double w0 = base.omega0();
    const int nb = static_cast<int>(net.buses.size());
    const Eigen::Matrix2d J = rot90();

    std::vector<double> cap(nb, 0.0);
    std::vector<int> conv_at(nb, -1);
    for (size_t k = 0; k < converters.size(); ++k) {
        const int i = net.index_of(converters[k].bus);
        if (net.buses[i].kind != BusKind::Converter)
            throw Error("converter placed at bus " + std::to_string(converters[k].bus) + " which is not a converter bus");
        if (conv_at[i] >= 0) throw Error("two converters at bus " + std::to_string(converters[k].bus));
        conv_at[i] = static_cast<int>(k);
        cap[i] += converters[k].model.params.C_f;
    }

    std::vector<RLBranch> branches;
    for (const auto& br : net.branches)
        branches.push_back({net.index_of(br.from), net.index_of(br.to), br.r, br.x,
                            std::to_string(br.from) + "-" + std::to_string(br.to)});
    for (const auto& sh : net.shunts) {
        const int i = net.index_of(sh.bus);
        const std::string name = std::to_string(sh.bus) + "-gnd";
        if (!sh.impedance) {
            if (sh.b > 0.0) branches.push_back({i, -1, 0.0, 1.0 / sh.b, name});
            else if (sh.b < 0.0) cap[i] += -sh.b;
        } else if (sh.x > 0.0) {
            branches.push_back({i, -1, sh.r, sh.x, name});
        } else if (sh.x < 0.0 && sh.r == 0.0) {
            cap[i] += -1.0 / sh.x;
        } else {
            throw Error("shunt at bus " + std::to_string(sh.bus) + ": only RL or pure capacitive shunts are supported in time-domain models");
        }
    }

    // Node roles: fixed (infinite), capacitive (voltage states), algebraic.
    std::vector<int> cap_idx(nb, -1), alg_idx(nb, -1);
    std::vector<int> cap_nodes;
    int nalg = 0;
    for (int i = 0; i < nb; ++i) {
        if (net.buses[i].kind == BusKind::Infinite) continue;
        if (cap[i] > 0.0) {
            cap_idx[i] = static_cast<int>(cap_nodes.size());
            cap_nodes.push_back(i);
        } else {
            if (conv_at[i] >= 0)
                throw Error("converter bus " + std::to_string(net.buses[i].id) + " needs positive filter capacitance");
            alg_idx[i] = nalg++;
        }
    }
    const int nc = static_cast<int>(cap_nodes.size());
    const int m = static_cast<int>(branches.size());

    Eigen::MatrixXd IncC = Eigen::MatrixXd::Zero(2 * nc, 2 * m);
    Eigen::MatrixXd IncA = Eigen::MatrixXd::Zero(2 * nalg, 2 * m);
    Eigen::MatrixXd Lw = Eigen::MatrixXd::Zero(2 * m, 2 * m), Rm = Eigen::MatrixXd::Zero(2 * m, 2 * m);
    for (int k = 0; k < m; ++k) {
        const auto& b = branches[k];
        auto place = [&](int node, double sign) {
            if (node < 0) return;
            if (cap_idx[node] >= 0) IncC.block<2, 2>(2 * cap_idx[node], 2 * k) += sign * Eigen::Matrix2d::Identity();
            if (alg_idx[node] >= 0) IncA.block<2, 2>(2 * alg_idx[node], 2 * k) += sign * Eigen::Matrix2d::Identity();
        };
        place(b.from, 1.0);
        place(b.to, -1.0);
        Lw.block<2, 2>(2 * k, 2 * k) = (b.x / w0) * Eigen::Matrix2d::Identity();
        Rm.block<2, 2>(2 * k, 2 * k) = b.r * Eigen::Matrix2d::Identity() + b.x * J;
    }

    // Branch currents restricted to the subspace satisfying KCL at algebraic nodes.
    Eigen::MatrixXd N;
    if (nalg == 0) {
        N = Eigen::MatrixXd::Identity(2 * m, 2 * m);
    } else {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(IncA, Eigen::ComputeFullV);
        const auto rank = svd.rank();
        N = svd.matrixV().rightCols(2 * m - rank);
    }
    const int nr = static_cast<int>(N.cols());

    std::vector<int> conv_off;
    int nx = 0;
    for (const auto& c : converters) {
        conv_off.push_back(nx);
        nx += c.model.states();
    }
    const int off_v = nx, off_xi = nx + 2 * nc, n = nx + 2 * nc + nr;
    const int ncv = static_cast<int>(converters.size());

    ClosedLoopModel cl;
    cl.A = Eigen::MatrixXd::Zero(n, n);
    cl.B = Eigen::MatrixXd::Zero(n, 2 * ncv);
    cl.C = Eigen::MatrixXd::Zero(3 * ncv, n);
    cl.D = Eigen::MatrixXd::Zero(3 * ncv, 2 * ncv);
    cl.converter_states = nx;

    for (int k = 0; k < ncv; ++k) {
        const auto& cm = converters[k].model;
        const int o = conv_off[k], ns = cm.states();
        const int node = net.index_of(converters[k].bus);
        const int vv = off_v + 2 * cap_idx[node];
        cl.A.block(o, o, ns, ns) = cm.A;
        cl.A.block(o, vv, ns, 2) = cm.B_grid;
        cl.B.block(o, 2 * k, ns, 2) = cm.B_ref;

        cl.C.block(3 * k, o, 2, ns) = cm.C;
        cl.C.block(3 * k, vv, 2, 2) = cm.D_grid;
        const cd v0 = std::polar(cm.op.U, cm.op.delta);
        cl.C(3 * k + 2, vv) = v0.real() / cm.op.U;
        cl.C(3 * k + 2, vv + 1) = v0.imag() / cm.op.U;

        // Filter-inductor current feeds the bus capacitor.
        cl.A.block(vv, o, 2, 2) += (w0 / cap[node]) * Eigen::Matrix2d::Identity();

        for (const auto& l : cm.labels) cl.state_labels.push_back("conv" + std::to_string(converters[k].bus) + "." + l);
        const std::string b = std::to_string(converters[k].bus);
        cl.input_labels.push_back("P_ref_" + b);
        cl.input_labels.push_back("Q_ref_" + b);
        cl.output_labels.push_back("P_" + b);
        cl.output_labels.push_back("Q_" + b);
        cl.output_labels.push_back("U_" + b);
        cl.converter_buses.push_back(converters[k].bus);
    }

    const Eigen::MatrixXd IncCN = IncC * N;
    for (int j = 0; j < nc; ++j) {
        const int i = cap_nodes[j];
        const int r = off_v + 2 * j;
        cl.A.block<2, 2>(r, r) += -w0 * J;
        cl.A.block(r, off_xi, 2, nr) += -(w0 / cap[i]) * IncCN.middleRows(2 * j, 2);
        cl.state_labels.push_back("v" + std::to_string(net.buses[i].id) + "_d");
        cl.state_labels.push_back("v" + std::to_string(net.buses[i].id) + "_q");
    }
    if (nr > 0) {
        const Eigen::MatrixXd Minv = (N.transpose() * Lw * N).inverse();
        cl.A.block(off_xi, off_xi, nr, nr) = -Minv * N.transpose() * Rm * N;
        cl.A.block(off_xi, off_v, nr, 2 * nc) = Minv * IncCN.transpose();
        for (int k = 0; k < nr; ++k) cl.state_labels.push_back("mesh" + std::to_string(k));
    }
    return cl;
}

ClosedLoopModel assemble(const Scenario& sc)
{
    sc.validate();
    const PowerFlowSolution pf = scenario_powerflow(sc);
    const auto specs = sc.converters_in_bus_order();
    std::vector<PlacedConverter> conv;
    for (size_t k = 0; k < specs.size(); ++k) {
        if (!specs[k].params)
            throw Error("converter at bus " + std::to_string(specs[k].bus) +
                        " has only an imported response; time-domain models need analytic params");
        conv.push_back({specs[k].bus, linearize_converter(*specs[k].params, bus_point(pf.op, static_cast<int>(k)), sc.base)});
    }
    return assemble(sc.net, sc.base, conv);
}

std::vector<Mode> modes(const ClosedLoopModel& m)
{
    std::vector<Mode> out;
    if (m.states() == 0) return out;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m.A.cast<cd>(), true);
    if (es.info() != Eigen::Success) throw Error("eigenvalue computation failed");
    const Eigen::MatrixXcd& V = es.eigenvectors();
    const Eigen::MatrixXcd W = V.inverse();
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        cd l = es.eigenvalues()(i);
        if (std::abs(l.imag()) < 1e-9 * (1.0 + std::abs(l))) l = cd(l.real(), 0.0);
        const double mag = std::abs(l);
        double total = 0.0, conv = 0.0;
        for (Eigen::Index k = 0; k < V.rows(); ++k) {
            const double p = std::abs(V(k, i) * W(i, k));
            total += p;
            if (k < m.converter_states) conv += p;
        }
        out.push_back({l, std::abs(l.imag()) / (2 * M_PI), mag > 0.0 ? -l.real() / mag : 0.0,
                       total > 0.0 ? conv / total : 0.0});
    }
    std::sort(out.begin(), out.end(), [](const Mode& a, const Mode& b) {
        if (a.damping != b.damping) return a.damping < b.damping;
        return a.lambda.imag() > b.lambda.imag();
    });
    return out;
}

std::optional<Mode> least_damped_converter_mode(const std::vector<Mode>& ms, double min_share)
{
    for (const auto& md : ms)
        if (md.converter_share >= min_share) return md;
    return std::nullopt;
}

Trace step_response(const ClosedLoopModel& m, const StepChannel& ch, double magnitude, double t_end, double dt)
{
    if (!(dt > 0.0)) throw Error("time step must be positive");
    if (!(t_end > 0.0)) throw Error("simulation end time must be positive");
    const int ncv = static_cast<int>(m.converter_buses.size());
    if (ch.converter < -1 || ch.converter >= ncv) throw Error("step channel names an unknown converter");

    double f_max = 0.0;
    for (const auto& md : modes(m)) f_max = std::max(f_max, md.freq_hz);
    if (f_max > 0.0 && dt >= 1.0 / (10.0 * f_max)) {
        std::ostringstream os;
        os << "time step " << dt << " s is too coarse for the fastest mode (" << f_max << " Hz); use dt < "
           << 1.0 / (10.0 * f_max);
        throw Error(os.str());
    }

    Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * ncv);
    const int off = ch.kind == StepChannel::Kind::P_ref ? 0 : 1;
    for (int k = 0; k < ncv; ++k)
        if (ch.converter < 0 || ch.converter == k) u(2 * k + off) = magnitude;

    const int n = m.states();
    const long steps = static_cast<long>(std::ceil(t_end / dt - 1e-9));
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(I - 0.5 * dt * m.A);
    const Eigen::MatrixXd Ap = I + 0.5 * dt * m.A;
    const Eigen::VectorXd bu = dt * (m.B * u);
    const Eigen::VectorXd du = m.D * u;

    Trace tr;
    tr.labels = m.output_labels;
    tr.y.resize(steps + 1, m.C.rows());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (long k = 0; k <= steps; ++k) {
        tr.t.push_back(k * dt);
        tr.y.row(k) = (m.C * x + du).transpose();
        if (k < steps) x = lu.solve(Ap * x + bu);
    }
    return tr;
}

std::string trace_csv(const Trace& tr)
{
    std::ostringstream os;
    os << "t";
    for (const auto& l : tr.labels) os << "," << l;
    os << "\n" << std::setprecision(12);
    for (size_t k = 0; k < tr.t.size(); ++k) {
        os << tr.t[k];
        for (Eigen::Index c = 0; c < tr.y.cols(); ++c) os << "," << tr.y(static_cast<Eigen::Index>(k), c);
        os << "\n";
    }
    return os.str();
}

} // namespace nmpz
