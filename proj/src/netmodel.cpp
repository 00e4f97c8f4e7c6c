#include "nmpz/netmodel.hpp"

#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "nmpz/error.hpp"

namespace nmpz {

std::string to_string(BusKind k)
{
    switch (k) {
    case BusKind::Converter: return "converter";
    case BusKind::Interior: return "interior";
    case BusKind::Infinite: return "infinite";
    }
    return "interior";
}

BusKind bus_kind_from_string(const std::string& s)
{
    if (s == "converter") return BusKind::Converter;
    if (s == "interior") return BusKind::Interior;
    if (s == "infinite") return BusKind::Infinite;
    throw Error("unknown bus kind '" + s + "'");
}

double Shunt::susceptance() const
{
    if (!impedance) return b;
    return x / (r * r + x * x);
}

cd Shunt::admittance() const
{
    if (!impedance) return cd(0.0, -b);
    return 1.0 / cd(r, x);
}

int NetworkSpec::index_of(int id) const
{
    for (size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return static_cast<int>(i);
    throw Error("unknown bus id " + std::to_string(id));
}

const Bus& NetworkSpec::bus(int id) const { return buses[index_of(id)]; }

std::vector<int> NetworkSpec::converter_buses() const
{
    std::vector<int> ids;
    for (const auto& b : buses)
        if (b.kind == BusKind::Converter) ids.push_back(b.id);
    return ids;
}

void NetworkSpec::validate(bool require_converter) const
{
    std::set<int> ids;
    for (const auto& b : buses) {
        if (!ids.insert(b.id).second) throw Error("duplicate bus id " + std::to_string(b.id));
        if (b.kind == BusKind::Infinite && !(b.voltage > 0.0))
            throw Error("infinite bus " + std::to_string(b.id) + " needs a positive voltage");
    }
    if (require_converter && converter_buses().empty()) throw Error("network has no converter bus");

    std::vector<std::vector<int>> adj(buses.size());
    for (const auto& br : branches) {
        if (!(br.x > 0.0)) {
            std::ostringstream os;
            os << "branch " << br.from << "-" << br.to << " must have X > 0";
            throw Error(os.str());
        }
        if (br.r < 0.0) throw Error("branch resistance must be non-negative");
        if (br.from == br.to) throw Error("branch connects bus " + std::to_string(br.from) + " to itself");
        int a = index_of(br.from), c = index_of(br.to);
        adj[a].push_back(c);
        adj[c].push_back(a);
    }
    for (const auto& sh : shunts) {
        index_of(sh.bus);
        if (sh.impedance && sh.r == 0.0 && sh.x == 0.0)
            throw Error("shunt at bus " + std::to_string(sh.bus) + " has zero impedance");
    }

    if (buses.empty()) throw Error("network has no buses");
    std::vector<bool> seen(buses.size(), false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
        int k = q.front();
        q.pop();
        for (int m : adj[k])
            if (!seen[m]) {
                seen[m] = true;
                q.push(m);
            }
    }
    for (size_t i = 0; i < buses.size(); ++i)
        if (!seen[i]) throw Error("network is disconnected at bus " + std::to_string(buses[i].id));
}

void OperatingPoint::validate() const
{
    const auto n = P.size();
    if (Q.size() != n || U.size() != n || delta.size() != n || static_cast<long>(bus_ids.size()) != n)
        throw Error("operating point vectors have inconsistent sizes");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(U(i) > 0.0)) throw Error("non-positive voltage at bus " + std::to_string(bus_ids[i]));
        if (std::hypot(P(i), Q(i)) == 0.0)
            throw Error("zero apparent power at bus " + std::to_string(bus_ids[i]));
    }
}

SusceptanceLaplacian build_laplacian(const NetworkSpec& net, const SystemBase&)
{
    net.validate();

    // Grounded index: every bus except infinite ones, which act as ground.
    std::map<int, int> gidx;
    for (const auto& b : net.buses)
        if (b.kind != BusKind::Infinite) gidx.emplace(b.id, static_cast<int>(gidx.size()));
    const int m = static_cast<int>(gidx.size());
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(m, m);

    for (const auto& br : net.branches) {
        const double y = 1.0 / br.x;
        auto a = gidx.find(br.from), c = gidx.find(br.to);
        if (a != gidx.end()) full(a->second, a->second) += y;
        if (c != gidx.end()) full(c->second, c->second) += y;
        if (a != gidx.end() && c != gidx.end()) {
            full(a->second, c->second) -= y;
            full(c->second, a->second) -= y;
        }
    }
    for (const auto& sh : net.shunts) {
        auto a = gidx.find(sh.bus);
        if (a != gidx.end()) full(a->second, a->second) += sh.susceptance();
    }

    std::vector<int> keep, elim, keep_ids;
    for (const auto& b : net.buses) {
        if (b.kind == BusKind::Converter) {
            keep.push_back(gidx[b.id]);
            keep_ids.push_back(b.id);
        } else if (b.kind == BusKind::Interior) {
            elim.push_back(gidx[b.id]);
        }
    }

    const Eigen::MatrixXd Bkk = full(keep, keep);
    Eigen::MatrixXd B = Bkk;
    if (!elim.empty()) {
        const Eigen::MatrixXd Bee = full(elim, elim);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(Bee);
        if (!lu.isInvertible())
            throw Error("interior buses cannot be eliminated: singular interior susceptance block");
        B = Bkk - full(keep, elim) * lu.solve(full(elim, keep));
    }
    B = (0.5 * (B + B.transpose())).eval();

    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() != Eigen::Success)
        throw Error("susceptance Laplacian is singular or indefinite: a converter bus lacks a path to ground");
    return {B, keep_ids};
}

Eigen::MatrixXcd build_admittance(const NetworkSpec& net)
{
    const int n = static_cast<int>(net.buses.size());
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : net.branches) {
        const int a = net.index_of(br.from), c = net.index_of(br.to);
        const cd y = 1.0 / cd(br.r, br.x);
        Y(a, a) += y;
        Y(c, c) += y;
        Y(a, c) -= y;
        Y(c, a) -= y;
    }
    for (const auto& sh : net.shunts) {
        const int a = net.index_of(sh.bus);
        Y(a, a) += sh.admittance();
    }
    return Y;
}

PowerFlowSolution solve_network(const NetworkSpec& net, const std::vector<Injection>& inj,
                                const SystemBase&, const PowerFlowOptions& opt)
{
    net.validate();
    const int n = static_cast<int>(net.buses.size());
    const Eigen::MatrixXcd Y = build_admittance(net);

    enum class Type { PQ, PV, Fixed };
    std::vector<Type> type(n, Type::PQ);
    Eigen::VectorXd Pspec = Eigen::VectorXd::Zero(n), Qspec = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd Vm = Eigen::VectorXd::Ones(n), Va = Eigen::VectorXd::Zero(n);

    bool has_fixed = false;
    for (int i = 0; i < n; ++i)
        if (net.buses[i].kind == BusKind::Infinite) {
            type[i] = Type::Fixed;
            Vm(i) = net.buses[i].voltage;
            has_fixed = true;
        }
    if (!has_fixed) throw Error("power flow needs an infinite bus as angle and voltage reference");

    std::set<int> given;
    for (const auto& in : inj) {
        const int i = net.index_of(in.bus);
        if (net.buses[i].kind != BusKind::Converter)
            throw Error("injection at bus " + std::to_string(in.bus) + " which is not a converter bus");
        if (!given.insert(in.bus).second) throw Error("duplicate injection at bus " + std::to_string(in.bus));
        if (in.Q.has_value() == in.U.has_value())
            throw Error("injection at bus " + std::to_string(in.bus) + " needs exactly one of Q or U");
        Pspec(i) = in.P;
        if (in.Q) {
            Qspec(i) = *in.Q;
        } else {
            if (!(*in.U > 0.0)) throw Error("held voltage must be positive at bus " + std::to_string(in.bus));
            type[i] = Type::PV;
            Vm(i) = *in.U;
        }
    }
    for (int id : net.converter_buses())
        if (!given.count(id)) throw Error("no injection given for converter bus " + std::to_string(id));

    std::vector<int> pvpq, pq;
    for (int i = 0; i < n; ++i) {
        if (type[i] != Type::Fixed) pvpq.push_back(i);
        if (type[i] == Type::PQ) pq.push_back(i);
    }
    const int na = static_cast<int>(pvpq.size()), nm = static_cast<int>(pq.size());

    auto voltage = [&] {
        Eigen::VectorXcd V(n);
        for (int i = 0; i < n; ++i) V(i) = std::polar(Vm(i), Va(i));
        return V;
    };
    auto mismatch = [&](const Eigen::VectorXcd& V) {
        const Eigen::VectorXcd S = V.cwiseProduct((Y * V).conjugate());
        Eigen::VectorXd F(na + nm);
        for (int k = 0; k < na; ++k) F(k) = S(pvpq[k]).real() - Pspec(pvpq[k]);
        for (int k = 0; k < nm; ++k) F(na + k) = S(pq[k]).imag() - Qspec(pq[k]);
        return F;
    };

    Eigen::VectorXcd V = voltage();
    Eigen::VectorXd F = mismatch(V);
    int it = 0;
    double res = F.size() ? F.cwiseAbs().maxCoeff() : 0.0;
    while (res >= opt.tol) {
        if (it >= opt.max_iter || !std::isfinite(res))
            throw Error("no equilibrium: power flow did not converge (residual " + std::to_string(res) + ")");
        ++it;

        const Eigen::VectorXcd I = Y * V;
        const Eigen::VectorXcd Vn = V.cwiseQuotient(V.cwiseAbs().cast<cd>());
        const Eigen::MatrixXcd dVa = cd(0, 1) * V.asDiagonal() *
            (Eigen::MatrixXcd(I.asDiagonal()) - Y * V.asDiagonal()).conjugate();
        const Eigen::MatrixXcd dVm = V.asDiagonal() * (Y * Vn.asDiagonal()).conjugate() +
            Eigen::MatrixXcd(I.conjugate().asDiagonal()) * Vn.asDiagonal();

        Eigen::MatrixXd J(na + nm, na + nm);
        for (int r = 0; r < na; ++r) {
            for (int c = 0; c < na; ++c) J(r, c) = dVa(pvpq[r], pvpq[c]).real();
            for (int c = 0; c < nm; ++c) J(r, na + c) = dVm(pvpq[r], pq[c]).real();
        }
        for (int r = 0; r < nm; ++r) {
            for (int c = 0; c < na; ++c) J(na + r, c) = dVa(pq[r], pvpq[c]).imag();
            for (int c = 0; c < nm; ++c) J(na + r, na + c) = dVm(pq[r], pq[c]).imag();
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) throw Error("no equilibrium: singular power-flow Jacobian");
        const Eigen::VectorXd dx = lu.solve(-F);
        for (int k = 0; k < na; ++k) Va(pvpq[k]) += dx(k);
        for (int k = 0; k < nm; ++k) Vm(pq[k]) += dx(na + k);

        V = voltage();
        F = mismatch(V);
        res = F.cwiseAbs().maxCoeff();
    }

    PowerFlowSolution sol;
    sol.V = V;
    sol.iterations = it;
    sol.residual = res;
    for (const auto& b : net.buses) sol.bus_ids.push_back(b.id);

    const Eigen::VectorXcd S = V.cwiseProduct((Y * V).conjugate());
    const auto conv = net.converter_buses();
    const int nc = static_cast<int>(conv.size());
    OperatingPoint& op = sol.op;
    op.bus_ids = conv;
    op.P.resize(nc);
    op.Q.resize(nc);
    op.U.resize(nc);
    op.delta.resize(nc);
    for (int k = 0; k < nc; ++k) {
        const int i = net.index_of(conv[k]);
        op.P(k) = S(i).real();
        op.Q(k) = S(i).imag();
        op.U(k) = std::abs(V(i));
        op.delta(k) = std::arg(V(i));
    }
    return sol;
}

OperatingPoint solve_powerflow(const NetworkSpec& net, const std::vector<Injection>& inj,
                               const SystemBase& base, const PowerFlowOptions& opt)
{
    return solve_network(net, inj, base, opt).op;
}

ComplexDressing dress(const OperatingPoint& op, const SusceptanceLaplacian& lap)
{
    op.validate();
    const int n = op.size();
    if (lap.B.rows() != n || lap.B.cols() != n)
        throw Error("operating point and susceptance matrix sizes differ");

    ComplexDressing d;
    d.S.resize(n);
    d.phi.resize(n);
    d.S_tilde = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        d.S(i) = std::hypot(op.P(i), op.Q(i));
        d.phi(i) = std::atan2(op.Q(i), op.P(i));
        d.S_tilde(i, i) = cd(op.P(i), op.Q(i));
    }
    d.Y_tilde.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            d.Y_tilde(i, j) = op.U(i) * op.U(j) * lap.B(i, j) * std::polar(1.0, op.delta(i) - op.delta(j));
    d.U = op.U;
    d.delta = op.delta;
    return d;
}

ComplexDressing make_dressing(const Eigen::MatrixXcd& S_tilde, const Eigen::MatrixXcd& Y_tilde)
{
    const auto n = S_tilde.rows();
    if (S_tilde.cols() != n || Y_tilde.rows() != n || Y_tilde.cols() != n)
        throw Error("dressing matrices must be square and of equal size");
    ComplexDressing d;
    d.S_tilde = Eigen::MatrixXcd::Zero(n, n);
    d.S.resize(n);
    d.phi.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const cd s = S_tilde(i, i);
        if (std::abs(s) == 0.0) throw Error("zero apparent power at bus " + std::to_string(i));
        d.S_tilde(i, i) = s;
        d.S(i) = std::abs(s);
        d.phi(i) = std::arg(s);
    }
    d.Y_tilde = Y_tilde;
    return d;
}

Eigen::MatrixXd undress(const ComplexDressing& d)
{
    if (d.delta.size() != d.size()) throw Error("dressing carries no bus angles");
    const Eigen::VectorXcd e = d.delta.unaryExpr([](double a) { return std::polar(1.0, -a); });
    const Eigen::MatrixXcd M = e.asDiagonal() * d.Y_tilde * e.conjugate().asDiagonal();
    return M.real();
}

} // namespace nmpz
