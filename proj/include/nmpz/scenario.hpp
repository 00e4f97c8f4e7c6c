#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nmpz/convmodel.hpp"
#include "nmpz/netmodel.hpp"

namespace nmpz {

inline constexpr int kSchemaVersion = 1;

// A converter is described either by analytic params or by an imported
// J_CIG(j omega) scan (CSV path, resolved against the scenario directory).
struct ConverterSpec {
    int bus = 0;
    std::optional<ConverterParams> params;
    std::string response_csv;
    bool operator==(const ConverterSpec&) const = default;
};

// Full point (p, q, u, delta) is used as given; (p, q) or (p, u) go through
// the power flow.
struct DispatchEntry {
    int bus = 0;
    double p = 0.0;
    std::optional<double> q, u, delta;
    bool full() const { return q && u && delta; }
    bool operator==(const DispatchEntry&) const = default;
};

struct SolverOptions {
    double f_min_hz = 0.01;
    double f_max_hz = 2000.0;
    int points = 400;
    double threshold_tol = 1e-3;
    double ray_factor = 10.0;
    double critical_band = 0.1;
    double rated_power = 1.0;
    double pf_tol = 1e-8;
    int pf_max_iter = 50;
    bool operator==(const SolverOptions&) const = default;
};

struct Scenario {
    int schema_version = kSchemaVersion;
    std::string name;
    SystemBase base;
    NetworkSpec net;
    std::vector<ConverterSpec> converters;
    std::vector<DispatchEntry> dispatch;
    SolverOptions options;

    void validate() const;
    bool full_dispatch() const;
    // Converter specs reordered to match net.converter_buses().
    std::vector<ConverterSpec> converters_in_bus_order() const;
    std::vector<double> grid() const;
    bool operator==(const Scenario&) const = default;
};

Scenario parse_scenario(const std::string& yaml_text, const std::string& base_dir = ".");
Scenario load_scenario(const std::string& path);
std::string dump_scenario(const Scenario& sc);

// Power-flow injections; a full dispatch holds (P, U).
std::vector<Injection> scenario_injections(const Scenario& sc);

// Given operating point, or the power-flow result for partial dispatch.
OperatingPoint scenario_operating_point(const Scenario& sc);

PowerFlowSolution scenario_powerflow(const Scenario& sc);

} // namespace nmpz
