#include "nmpz/cli.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "nmpz/error.hpp"
#include "nmpz/factor.hpp"
#include "nmpz/io.hpp"
#include "nmpz/jacobian.hpp"
#include "nmpz/linsim.hpp"
#include "nmpz/margin.hpp"
#include "nmpz/scenario.hpp"

namespace nmpz {

namespace {

struct Common {
    std::string scenario;
    std::string dump;
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("-s,--scenario", c.scenario, "Scenario file (YAML)")->required();
    sub->add_option("--dump-config", c.dump, "Write the parsed scenario to this file and exit");
}

int cmd_assess(const Scenario& sc, const std::string& report, const std::string& csv, std::ostream& out)
{
    const MarginReport r = assess(sc);
    out << format_report(r);
    if (!report.empty()) write_file_atomic(report, report_yaml(r));
    if (!csv.empty()) write_file_atomic(csv, sweep_csv(r));
    return r.verdict == Verdict::Stable ? 0 : 2;
}

int cmd_zeros(const Scenario& sc, std::ostream& out)
{
    const OperatingPoint op = scenario_operating_point(sc);
    const SusceptanceLaplacian lap = build_laplacian(sc.net, sc.base);
    const double w0 = sc.base.omega0();
    const NmpzResult z = analyze_zeros(dress(op, lap), w0);
    const Eigen::VectorXd pn = Eigen::VectorXd::Constant(lap.B.rows(), sc.options.rated_power);
    const ScrResult g = compute_gscr(lap.B, pn);

    out << std::fixed << std::setprecision(4);
    out << " i      lambda        z [rad/s]    z/w0\n";
    for (Eigen::Index i = 0; i < z.lambdas.size(); ++i) {
        out << std::setw(2) << i + 1 << "  " << std::setw(12) << z.lambdas(i) << "  ";
        if (z.z_nmp[i])
            out << std::setw(14) << *z.z_nmp[i] << "  " << std::setw(8) << *z.z_nmp[i] / w0 << "\n";
        else
            out << "  none (past static limit)\n";
    }
    out << "rho_z          " << z.rho_z << "\n";
    if (lap.B.rows() == 1) out << "SCR            " << g.scr << "\n";
    out << "gSCR           " << g.gscr << "\n";
    out << "gSCR^2         " << g.rho_z_rated << "  (rho_z at rated operation)\n";
    return 0;
}

int cmd_sensitivity(const Scenario& sc, const std::string& csv, std::ostream& out)
{
    const OperatingPoint op = scenario_operating_point(sc);
    const double w0 = sc.base.omega0();
    const ComplexDressing d = dress(op, build_laplacian(sc.net, sc.base));
    const NmpzResult z = analyze_zeros(d, w0);
    const ConverterResponses cr = converter_responses(sc, op);
    std::vector<ResponseFn> cplx;
    for (int i = 0; i < d.size(); ++i) {
        const double S = d.S(i), phi = d.phi(i);
        const ResponseFn f = cr.jcig[i];
        cplx.push_back([f, S, phi](double w) { return to_complex(f(w), S, phi); });
    }
    const CriticalSubsystem sub = build_subsystem(z, cplx, cr.omegas);
    MarginReport r;
    r.subsystem_sweep = sub.sweep(sub.mu1);
    r.full_sweep = full_system_sweep(d, cr.jcig, cr.omegas, w0);
    out << std::fixed << std::setprecision(4);
    out << "subsystem peak    " << r.subsystem_sweep.peak << " at " << r.subsystem_sweep.peak_hz() << " Hz\n";
    out << "full-system peak  " << r.full_sweep.peak << " at " << r.full_sweep.peak_hz() << " Hz\n";
    if (!csv.empty()) write_file_atomic(csv, sweep_csv(r));
    return 0;
}

int cmd_powerflow(const Scenario& sc, std::ostream& out)
{
    const PowerFlowSolution pf = scenario_powerflow(sc);
    out << std::fixed << std::setprecision(5);
    out << "converged in " << pf.iterations << " iterations, residual " << std::scientific << pf.residual
        << std::fixed << "\n";
    out << " bus        |V|      angle\n";
    for (size_t i = 0; i < pf.bus_ids.size(); ++i)
        out << std::setw(4) << pf.bus_ids[i] << "  " << std::setw(9) << std::abs(pf.V(i)) << "  " << std::setw(9)
            << std::arg(pf.V(i)) << "\n";
    out << " bus          P          Q          U      delta\n";
    for (int k = 0; k < pf.op.size(); ++k)
        out << std::setw(4) << pf.op.bus_ids[k] << "  " << std::setw(9) << pf.op.P(k) << "  " << std::setw(9)
            << pf.op.Q(k) << "  " << std::setw(9) << pf.op.U(k) << "  " << std::setw(9) << pf.op.delta(k) << "\n";
    return 0;
}

int cmd_freqresp(const Scenario& sc, int bus, const std::string& csv, const std::string& jnet_csv, std::ostream& out)
{
    const OperatingPoint op = scenario_operating_point(sc);
    const auto ids = op.bus_ids;
    int k = 0;
    if (bus >= 0) {
        auto it = std::find(ids.begin(), ids.end(), bus);
        if (it == ids.end()) throw Error("--bus: " + std::to_string(bus) + " is not a converter bus");
        k = static_cast<int>(it - ids.begin());
    }
    const ConverterResponses cr = converter_responses(sc, op);
    FreqResponse2x2 r{cr.omegas, {}};
    for (double w : cr.omegas) r.values.push_back(cr.jcig[k](w));
    out << "converter bus " << ids[k] << ": " << r.size() << " points, " << cr.omegas.front() / (2 * M_PI) << " to "
        << cr.omegas.back() / (2 * M_PI) << " Hz\n";
    if (!csv.empty()) write_response_csv(csv, r);
    if (!jnet_csv.empty()) {
        std::vector<double> f;
        for (double w : cr.omegas) f.push_back(w / (2 * M_PI));
        write_jnet_sweep_csv(jnet_csv, dress(op, build_laplacian(sc.net, sc.base)), f, sc.base.omega0());
    }
    return 0;
}

int cmd_modes(const Scenario& sc, int top, std::ostream& out)
{
    const auto ms = modes(assemble(sc));
    out << std::fixed << std::setprecision(4);
    out << "        real        imag     freq [Hz]   damping   conv share\n";
    int shown = 0;
    for (const auto& m : ms) {
        if (top > 0 && shown >= top) break;
        if (m.lambda.imag() < 0) continue;
        out << std::setw(12) << m.lambda.real() << std::setw(12) << m.lambda.imag() << std::setw(14) << m.freq_hz
            << std::setw(10) << m.damping << std::setw(13) << m.converter_share << "\n";
        ++shown;
    }
    return 0;
}

int cmd_simulate(const Scenario& sc, const std::string& channel, int bus, double mag, double t_end, double dt,
                 const std::string& path, std::ostream& out)
{
    const ClosedLoopModel m = assemble(sc);
    StepChannel ch;
    if (channel == "p")
        ch.kind = StepChannel::Kind::P_ref;
    else if (channel == "q")
        ch.kind = StepChannel::Kind::Q_ref;
    else
        throw Error("--channel: expected p or q");
    if (bus >= 0) {
        auto it = std::find(m.converter_buses.begin(), m.converter_buses.end(), bus);
        if (it == m.converter_buses.end()) throw Error("--bus: " + std::to_string(bus) + " is not a converter bus");
        ch.converter = static_cast<int>(it - m.converter_buses.begin());
    }
    const Trace tr = step_response(m, ch, mag, t_end, dt);
    out << std::setprecision(6);
    out << tr.t.size() << " samples; final outputs:";
    for (Eigen::Index c = 0; c < tr.y.cols(); ++c) out << " " << tr.labels[c] << "=" << tr.y(tr.y.rows() - 1, c);
    out << "\n";
    if (!path.empty()) write_file_atomic(path, trace_csv(tr));
    return 0;
}

int cmd_sweep(const Scenario& sc, const std::string& param, double from, double to, int steps, int bus,
              const std::string& path, std::ostream& out)
{
    if (param != "p" && param != "q") throw Error("--param: expected p or q");
    if (steps < 2) throw Error("--steps: need at least 2");
    std::ostringstream csv;
    csv << "value,rho_z,rho_zc,M_V,M_S,verdict\n" << std::setprecision(10);
    for (int i = 0; i < steps; ++i) {
        const double v = from + (to - from) * i / (steps - 1);
        Scenario s = sc;
        for (auto& d : s.dispatch) {
            if (d.full()) {
                d.u.reset();
                d.delta.reset();
            }
            if (bus >= 0 && d.bus != bus) continue;
            if (param == "p") {
                d.p = v;
            } else {
                d.q = v;
                d.u.reset();
            }
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        try {
            const MarginReport r = assess(s);
            csv << v << "," << r.rho_z << "," << r.rho_zc << "," << r.M_V << "," << r.M_S << "," << to_string(r.verdict)
                << "\n";
        } catch (const Error& e) {
            csv << v << "," << nan << "," << nan << "," << nan << "," << nan << ",error\n";
        }
    }
    if (!path.empty())
        write_file_atomic(path, csv.str());
    else
        out << csv.str();
    return 0;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Small-signal voltage and synchronization margins of converter grids"};
    app.require_subcommand(1);

    Common c_assess, c_zeros, c_sens, c_pf, c_fr, c_modes, c_sim, c_sweep;
    std::string report, csv, jnet_csv, out_path, channel = "p", param = "p";
    int bus = -1, top = 10, steps = 13;
    double mag = 0.1, t_end = 2.0, dt = 5e-5, from = 0.8, to = 1.1;

    auto* s_assess = app.add_subcommand("assess", "Unified voltage and synchronization margins");
    add_common(s_assess, c_assess);
    s_assess->add_option("--report", report, "Structured report output (YAML)");
    s_assess->add_option("--sweep-csv", csv, "Sensitivity sweeps output (CSV)");

    auto* s_zeros = app.add_subcommand("zeros", "Eigenvalues of H_eq, NMP zeros and SCR/gSCR");
    add_common(s_zeros, c_zeros);

    auto* s_sens = app.add_subcommand("sensitivity", "Sensitivity peaks of the subsystem and the full system");
    add_common(s_sens, c_sens);
    s_sens->add_option("--csv", csv, "Sweep output (CSV)");

    auto* s_pf = app.add_subcommand("powerflow", "Solve the scenario power flow");
    add_common(s_pf, c_pf);

    auto* s_fr = app.add_subcommand("freqresp", "Export a converter J_CIG(jw) and the grid Jacobian sweep");
    add_common(s_fr, c_fr);
    s_fr->add_option("--bus", bus, "Converter bus (default: first)");
    s_fr->add_option("--csv", csv, "J_CIG output (CSV)");
    s_fr->add_option("--jnet-csv", jnet_csv, "Grid Jacobian singular values and |det| (CSV)");

    auto* s_modes = app.add_subcommand("modes", "Closed-loop eigenvalues, least damped first");
    add_common(s_modes, c_modes);
    s_modes->add_option("--top", top, "Number of modes to print (0 = all)");

    auto* s_sim = app.add_subcommand("simulate", "Linear step response of the closed loop");
    add_common(s_sim, c_sim);
    s_sim->add_option("--channel", channel, "Reference to step: p or q");
    s_sim->add_option("--bus", bus, "Converter bus to step (default: all)");
    s_sim->add_option("--magnitude", mag, "Step size in p.u.");
    s_sim->add_option("--t-end", t_end, "End time in s");
    s_sim->add_option("--dt", dt, "Time step in s");
    s_sim->add_option("--out", out_path, "Trace output (CSV)");

    auto* s_sweep = app.add_subcommand("sweep", "Re-run assess over a dispatch range");
    add_common(s_sweep, c_sweep);
    s_sweep->add_option("--param", param, "Dispatch quantity: p or q");
    s_sweep->add_option("--from", from, "First value");
    s_sweep->add_option("--to", to, "Last value");
    s_sweep->add_option("--steps", steps, "Number of values");
    s_sweep->add_option("--bus", bus, "Converter bus to vary (default: all)");
    s_sweep->add_option("--out", out_path, "Output (CSV); stdout if omitted");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    const std::pair<CLI::App*, Common*> subs[] = {{s_assess, &c_assess}, {s_zeros, &c_zeros}, {s_sens, &c_sens},
                                                  {s_pf, &c_pf},         {s_fr, &c_fr},       {s_modes, &c_modes},
                                                  {s_sim, &c_sim},       {s_sweep, &c_sweep}};
    try {
        for (const auto& [sub, common] : subs) {
            if (!sub->parsed()) continue;
            const Scenario sc = load_scenario(common->scenario);
            if (!common->dump.empty()) {
                write_file_atomic(common->dump, dump_scenario(sc));
                return 0;
            }
            if (sub == s_assess) return cmd_assess(sc, report, csv, out);
            if (sub == s_zeros) return cmd_zeros(sc, out);
            if (sub == s_sens) return cmd_sensitivity(sc, csv, out);
            if (sub == s_pf) return cmd_powerflow(sc, out);
            if (sub == s_fr) return cmd_freqresp(sc, bus, csv, jnet_csv, out);
            if (sub == s_modes) return cmd_modes(sc, top, out);
            if (sub == s_sim) return cmd_simulate(sc, channel, bus, mag, t_end, dt, out_path, out);
            if (sub == s_sweep) return cmd_sweep(sc, param, from, to, steps, bus, out_path, out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace nmpz
