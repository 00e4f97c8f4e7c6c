#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nmpz/convmodel.hpp"
#include "nmpz/netmodel.hpp"

namespace nmpz {

struct Scenario;

// Inputs are (dP_ref, dQ_ref) per converter, outputs (dP, dQ, dU) per
// converter, both in converter-bus order.
struct ClosedLoopModel {
    Eigen::MatrixXd A, B, C, D;
    std::vector<std::string> state_labels, input_labels, output_labels;
    std::vector<int> converter_buses;
    int converter_states = 0; // leading states belong to the converter models

    int states() const { return static_cast<int>(A.rows()); }
};

struct Mode {
    cd lambda;
    double freq_hz = 0.0;
    double damping = 0.0;
    double converter_share = 0.0; // summed participation of converter states, in [0, 1]
};

struct PlacedConverter {
    int bus = 0;
    ConverterModel model;
};

ClosedLoopModel assemble(const NetworkSpec& net, const SystemBase& base,
                         const std::vector<PlacedConverter>& converters);

// Linearizes every converter at the power-flow solution of the scenario.
ClosedLoopModel assemble(const Scenario& sc);

std::vector<Mode> modes(const ClosedLoopModel& m);

// Least-damped mode with converter_share >= min_share; nullopt if none.
std::optional<Mode> least_damped_converter_mode(const std::vector<Mode>& ms, double min_share = 0.1);

struct StepChannel {
    enum class Kind { P_ref, Q_ref } kind = Kind::P_ref;
    int converter = -1; // index into converter_buses, -1 for all
};

struct Trace {
    std::vector<double> t;
    Eigen::MatrixXd y; // one row per time sample
    std::vector<std::string> labels;
};

Trace step_response(const ClosedLoopModel& m, const StepChannel& ch, double magnitude, double t_end, double dt);

std::string trace_csv(const Trace& tr);

} // namespace nmpz
