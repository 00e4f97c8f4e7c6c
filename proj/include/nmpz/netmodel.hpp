#pragma once

#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nmpz {

using cd = std::complex<double>;

struct SystemBase {
    double f0 = 50.0;
    double s_base = 100.0; // MVA, informational only

    double omega0() const { return 2.0 * std::numbers::pi * f0; }
    bool operator==(const SystemBase&) const = default;
};

enum class BusKind { Converter, Interior, Infinite };

std::string to_string(BusKind k);
BusKind bus_kind_from_string(const std::string& s);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::Interior;
    double voltage = 1.0; // magnitude held at an infinite bus
    bool operator==(const Bus&) const = default;
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    bool operator==(const Branch&) const = default;
};

// A shunt is either a series R + jX impedance to ground or a pure
// susceptance b entering the B matrix diagonal (b > 0 inductive, b < 0
// capacitive).
struct Shunt {
    int bus = 0;
    bool impedance = true;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;

    double susceptance() const;
    cd admittance() const;
    bool operator==(const Shunt&) const = default;
};

struct NetworkSpec {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Shunt> shunts;

    // Throws on duplicate ids, unknown references, X <= 0, no converter bus
    // (unless allowed) or a disconnected graph.
    void validate(bool require_converter = true) const;
    int index_of(int id) const;
    const Bus& bus(int id) const;
    std::vector<int> converter_buses() const;
    bool operator==(const NetworkSpec&) const = default;
};

struct SusceptanceLaplacian {
    Eigen::MatrixXd B;
    std::vector<int> bus_ids;
};

struct OperatingPoint {
    std::vector<int> bus_ids;
    Eigen::VectorXd P, Q, U, delta;

    int size() const { return static_cast<int>(P.size()); }
    void validate() const;
};

struct ComplexDressing {
    Eigen::MatrixXcd S_tilde;
    Eigen::MatrixXcd Y_tilde;
    Eigen::VectorXd S;
    Eigen::VectorXd phi;
    // Empty when the dressing was built from raw matrices.
    Eigen::VectorXd U, delta;

    int size() const { return static_cast<int>(S.size()); }
    Eigen::VectorXd P() const { return S_tilde.diagonal().real(); }
    Eigen::VectorXd Q() const { return S_tilde.diagonal().imag(); }
};

// Converter bus injection for the power flow: P with either Q or U.
struct Injection {
    int bus = 0;
    double P = 0.0;
    std::optional<double> Q;
    std::optional<double> U;
};

struct PowerFlowOptions {
    double tol = 1e-8;
    int max_iter = 50;
};

struct PowerFlowSolution {
    OperatingPoint op;
    std::vector<int> bus_ids; // every bus, network order
    Eigen::VectorXcd V;
    int iterations = 0;
    double residual = 0.0;
};

SusceptanceLaplacian build_laplacian(const NetworkSpec& net, const SystemBase& base);

// Complex bus admittance matrix of the lossy network, rows in net.buses order.
Eigen::MatrixXcd build_admittance(const NetworkSpec& net);

PowerFlowSolution solve_network(const NetworkSpec& net, const std::vector<Injection>& inj,
                                const SystemBase& base, const PowerFlowOptions& opt = {});

OperatingPoint solve_powerflow(const NetworkSpec& net, const std::vector<Injection>& inj,
                               const SystemBase& base, const PowerFlowOptions& opt = {});

ComplexDressing dress(const OperatingPoint& op, const SusceptanceLaplacian& B);
ComplexDressing make_dressing(const Eigen::MatrixXcd& S_tilde, const Eigen::MatrixXcd& Y_tilde);

// Strips the angle factors from Y_tilde, returning U B U.
Eigen::MatrixXd undress(const ComplexDressing& d);

} // namespace nmpz
