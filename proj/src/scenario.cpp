#include "nmpz/scenario.hpp"

#include <filesystem>
#include <set>

#include <yaml-cpp/yaml.h>

#include "nmpz/error.hpp"
#include "nmpz/io.hpp"

namespace nmpz {

namespace {

void check_keys(const YAML::Node& n, const std::string& ctx, std::initializer_list<const char*> allowed)
{
    if (!n.IsMap()) throw Error(ctx + ": expected a mapping");
    for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw Error(ctx + ": unknown field '" + key + "'");
    }
}

template <class T>
T get(const YAML::Node& n, const std::string& key, const std::string& ctx)
{
    const YAML::Node v = n[key];
    if (!v) throw Error(ctx + ": missing field '" + key + "'");
    try {
        return v.as<T>();
    } catch (const YAML::Exception&) {
        throw Error(ctx + "." + key + ": invalid value '" + (v.IsScalar() ? v.Scalar() : "<non-scalar>") + "'");
    }
}

template <class T>
T get_or(const YAML::Node& n, const std::string& key, const std::string& ctx, T fallback)
{
    return n[key] ? get<T>(n, key, ctx) : fallback;
}

template <class T>
std::optional<T> get_opt(const YAML::Node& n, const std::string& key, const std::string& ctx)
{
    if (!n[key]) return std::nullopt;
    return get<T>(n, key, ctx);
}

YAML::Node seq(const YAML::Node& root, const std::string& key, bool required)
{
    const YAML::Node n = root[key];
    if (!n) {
        if (required) throw Error("scenario: missing field '" + key + "'");
        return YAML::Node(YAML::NodeType::Sequence);
    }
    if (!n.IsSequence()) throw Error("scenario." + key + ": expected a list");
    return n;
}

ConverterParams parse_params(const YAML::Node& n, const std::string& ctx)
{
    check_keys(n, ctx, {"l_f", "c_f", "r_f", "kp_i", "ki_i", "kp_p", "ki_p", "kp_q", "ki_q", "pll_bw", "t_vff", "c_dc"});
    ConverterParams p;
    p.L_f = get_or(n, "l_f", ctx, p.L_f);
    p.C_f = get_or(n, "c_f", ctx, p.C_f);
    p.R_f = get_or(n, "r_f", ctx, p.R_f);
    p.kp_i = get_or(n, "kp_i", ctx, p.kp_i);
    p.ki_i = get_or(n, "ki_i", ctx, p.ki_i);
    p.kp_P = get_or(n, "kp_p", ctx, p.kp_P);
    p.ki_P = get_or(n, "ki_p", ctx, p.ki_P);
    p.kp_Q = get_or(n, "kp_q", ctx, p.kp_Q);
    p.ki_Q = get_or(n, "ki_q", ctx, p.ki_Q);
    p.pll_bw = get_or(n, "pll_bw", ctx, p.pll_bw);
    p.t_vff = get_or(n, "t_vff", ctx, p.t_vff);
    p.C_dc = get_or(n, "c_dc", ctx, p.C_dc);
    try {
        p.validate();
    } catch (const Error& e) {
        throw Error(ctx + ": " + e.what());
    }
    return p;
}

} // namespace

void Scenario::validate() const
{
    if (schema_version != kSchemaVersion)
        throw Error("scenario.schema_version: unsupported version " + std::to_string(schema_version));
    net.validate();

    const auto conv = net.converter_buses();
    std::set<int> conv_set(conv.begin(), conv.end());
    std::set<int> seen;
    for (const auto& c : converters) {
        if (!conv_set.count(c.bus))
            throw Error("converters: bus " + std::to_string(c.bus) + " is not a converter bus");
        if (!seen.insert(c.bus).second)
            throw Error("converters: bus " + std::to_string(c.bus) + " listed twice");
        if (c.params.has_value() == !c.response_csv.empty())
            throw Error("converters: bus " + std::to_string(c.bus) + " needs exactly one of params or response");
        if (c.params) c.params->validate();
    }
    if (seen.size() != conv_set.size()) throw Error("converters: every converter bus needs a converter entry");

    seen.clear();
    int full = 0;
    for (const auto& d : dispatch) {
        const std::string ctx = "dispatch: bus " + std::to_string(d.bus);
        if (!conv_set.count(d.bus)) throw Error(ctx + " is not a converter bus");
        if (!seen.insert(d.bus).second) throw Error(ctx + " listed twice");
        const bool pq = d.q && !d.u && !d.delta;
        const bool pv = d.u && !d.q && !d.delta;
        if (!(d.full() || pq || pv)) throw Error(ctx + " needs {p, q}, {p, u} or {p, q, u, delta}");
        full += d.full();
    }
    if (seen.size() != conv_set.size()) throw Error("dispatch: every converter bus needs an entry");
    if (full != 0 && full != static_cast<int>(dispatch.size()))
        throw Error("dispatch: give either full operating points for every converter or none");

    const auto& o = options;
    if (!(o.f_min_hz > 0.0) || !(o.f_max_hz > o.f_min_hz) || o.points < 3)
        throw Error("options: need 0 < f_min_hz < f_max_hz and points >= 3");
    if (!(o.threshold_tol > 0.0) || !(o.ray_factor > 1.0) || !(o.critical_band >= 0.0) || !(o.rated_power > 0.0))
        throw Error("options: threshold_tol, ray_factor, critical_band or rated_power out of range");
    if (!(o.pf_tol > 0.0) || o.pf_max_iter < 1) throw Error("options: invalid power-flow settings");
}

bool Scenario::full_dispatch() const
{
    return !dispatch.empty() && dispatch.front().full();
}

std::vector<ConverterSpec> Scenario::converters_in_bus_order() const
{
    std::vector<ConverterSpec> out;
    for (int id : net.converter_buses())
        for (const auto& c : converters)
            if (c.bus == id) out.push_back(c);
    return out;
}

std::vector<double> Scenario::grid() const
{
    return default_grid(options.f_min_hz, options.f_max_hz, options.points);
}

Scenario parse_scenario(const std::string& yaml_text, const std::string& base_dir)
{
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw Error(std::string("scenario: malformed file: ") + e.what());
    }
    check_keys(root, "scenario",
               {"schema_version", "name", "base", "buses", "branches", "shunts", "converters", "dispatch", "options"});

    Scenario sc;
    sc.schema_version = get<int>(root, "schema_version", "scenario");
    sc.name = get_or<std::string>(root, "name", "scenario", "");
    if (const auto b = root["base"]) {
        check_keys(b, "base", {"f0", "s_base"});
        sc.base.f0 = get_or(b, "f0", "base", sc.base.f0);
        sc.base.s_base = get_or(b, "s_base", "base", sc.base.s_base);
        if (!(sc.base.f0 > 0.0)) throw Error("base.f0: must be positive");
    }

    int i = 0;
    for (const auto& n : seq(root, "buses", true)) {
        const std::string ctx = "buses[" + std::to_string(i++) + "]";
        check_keys(n, ctx, {"id", "kind", "voltage"});
        Bus b;
        b.id = get<int>(n, "id", ctx);
        try {
            b.kind = bus_kind_from_string(get<std::string>(n, "kind", ctx));
        } catch (const Error& e) {
            throw Error(ctx + ".kind: " + e.what());
        }
        b.voltage = get_or(n, "voltage", ctx, 1.0);
        sc.net.buses.push_back(b);
    }
    i = 0;
    for (const auto& n : seq(root, "branches", true)) {
        const std::string ctx = "branches[" + std::to_string(i++) + "]";
        check_keys(n, ctx, {"from", "to", "r", "x"});
        sc.net.branches.push_back(
            {get<int>(n, "from", ctx), get<int>(n, "to", ctx), get_or(n, "r", ctx, 0.0), get<double>(n, "x", ctx)});
    }
    i = 0;
    for (const auto& n : seq(root, "shunts", false)) {
        const std::string ctx = "shunts[" + std::to_string(i++) + "]";
        check_keys(n, ctx, {"bus", "r", "x", "b"});
        Shunt s;
        s.bus = get<int>(n, "bus", ctx);
        if (n["b"]) {
            if (n["r"] || n["x"]) throw Error(ctx + ": give either b or (r, x)");
            s.impedance = false;
            s.b = get<double>(n, "b", ctx);
        } else {
            s.r = get_or(n, "r", ctx, 0.0);
            s.x = get<double>(n, "x", ctx);
        }
        sc.net.shunts.push_back(s);
    }
    i = 0;
    namespace fs = std::filesystem;
    for (const auto& n : seq(root, "converters", true)) {
        const std::string ctx = "converters[" + std::to_string(i++) + "]";
        check_keys(n, ctx, {"bus", "params", "response"});
        ConverterSpec c;
        c.bus = get<int>(n, "bus", ctx);
        if (n["params"]) c.params = parse_params(n["params"], ctx + ".params");
        if (n["response"]) {
            fs::path p(get<std::string>(n, "response", ctx));
            if (p.is_relative()) p = fs::path(base_dir) / p;
            c.response_csv = fs::absolute(p).lexically_normal().string();
        }
        sc.converters.push_back(c);
    }
    i = 0;
    for (const auto& n : seq(root, "dispatch", true)) {
        const std::string ctx = "dispatch[" + std::to_string(i++) + "]";
        check_keys(n, ctx, {"bus", "p", "q", "u", "delta"});
        DispatchEntry d;
        d.bus = get<int>(n, "bus", ctx);
        d.p = get<double>(n, "p", ctx);
        d.q = get_opt<double>(n, "q", ctx);
        d.u = get_opt<double>(n, "u", ctx);
        d.delta = get_opt<double>(n, "delta", ctx);
        sc.dispatch.push_back(d);
    }
    if (const auto o = root["options"]) {
        check_keys(o, "options", {"f_min_hz", "f_max_hz", "points", "threshold_tol", "ray_factor", "critical_band",
                                  "rated_power", "pf_tol", "pf_max_iter"});
        auto& op = sc.options;
        op.f_min_hz = get_or(o, "f_min_hz", "options", op.f_min_hz);
        op.f_max_hz = get_or(o, "f_max_hz", "options", op.f_max_hz);
        op.points = get_or(o, "points", "options", op.points);
        op.threshold_tol = get_or(o, "threshold_tol", "options", op.threshold_tol);
        op.ray_factor = get_or(o, "ray_factor", "options", op.ray_factor);
        op.critical_band = get_or(o, "critical_band", "options", op.critical_band);
        op.rated_power = get_or(o, "rated_power", "options", op.rated_power);
        op.pf_tol = get_or(o, "pf_tol", "options", op.pf_tol);
        op.pf_max_iter = get_or(o, "pf_max_iter", "options", op.pf_max_iter);
    }
    sc.validate();
    return sc;
}

Scenario load_scenario(const std::string& path)
{
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw Error("scenario file not found: " + path);
    const fs::path dir = fs::path(path).parent_path();
    return parse_scenario(read_file(path), dir.empty() ? "." : dir.string());
}

std::string dump_scenario(const Scenario& sc)
{
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "schema_version" << YAML::Value << sc.schema_version;
    out << YAML::Key << "name" << YAML::Value << sc.name;
    out << YAML::Key << "base" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "f0" << YAML::Value
        << sc.base.f0 << YAML::Key << "s_base" << YAML::Value << sc.base.s_base << YAML::EndMap;

    out << YAML::Key << "buses" << YAML::Value << YAML::BeginSeq;
    for (const auto& b : sc.net.buses) {
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "id" << YAML::Value << b.id << YAML::Key << "kind"
            << YAML::Value << to_string(b.kind);
        if (b.kind == BusKind::Infinite || b.voltage != 1.0) out << YAML::Key << "voltage" << YAML::Value << b.voltage;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "branches" << YAML::Value << YAML::BeginSeq;
    for (const auto& br : sc.net.branches)
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "from" << YAML::Value << br.from << YAML::Key << "to"
            << YAML::Value << br.to << YAML::Key << "r" << YAML::Value << br.r << YAML::Key << "x" << YAML::Value
            << br.x << YAML::EndMap;
    out << YAML::EndSeq;

    out << YAML::Key << "shunts" << YAML::Value << YAML::BeginSeq;
    for (const auto& s : sc.net.shunts) {
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "bus" << YAML::Value << s.bus;
        if (s.impedance)
            out << YAML::Key << "r" << YAML::Value << s.r << YAML::Key << "x" << YAML::Value << s.x;
        else
            out << YAML::Key << "b" << YAML::Value << s.b;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "converters" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : sc.converters) {
        out << YAML::BeginMap << YAML::Key << "bus" << YAML::Value << c.bus;
        if (c.params) {
            const auto& p = *c.params;
            out << YAML::Key << "params" << YAML::Value << YAML::Flow << YAML::BeginMap;
            out << YAML::Key << "l_f" << YAML::Value << p.L_f << YAML::Key << "c_f" << YAML::Value << p.C_f;
            out << YAML::Key << "r_f" << YAML::Value << p.R_f << YAML::Key << "kp_i" << YAML::Value << p.kp_i;
            out << YAML::Key << "ki_i" << YAML::Value << p.ki_i << YAML::Key << "kp_p" << YAML::Value << p.kp_P;
            out << YAML::Key << "ki_p" << YAML::Value << p.ki_P << YAML::Key << "kp_q" << YAML::Value << p.kp_Q;
            out << YAML::Key << "ki_q" << YAML::Value << p.ki_Q << YAML::Key << "pll_bw" << YAML::Value << p.pll_bw;
            out << YAML::Key << "t_vff" << YAML::Value << p.t_vff << YAML::Key << "c_dc" << YAML::Value << p.C_dc;
            out << YAML::EndMap;
        } else {
            out << YAML::Key << "response" << YAML::Value << c.response_csv;
        }
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "dispatch" << YAML::Value << YAML::BeginSeq;
    for (const auto& d : sc.dispatch) {
        out << YAML::Flow << YAML::BeginMap << YAML::Key << "bus" << YAML::Value << d.bus << YAML::Key << "p"
            << YAML::Value << d.p;
        if (d.q) out << YAML::Key << "q" << YAML::Value << *d.q;
        if (d.u) out << YAML::Key << "u" << YAML::Value << *d.u;
        if (d.delta) out << YAML::Key << "delta" << YAML::Value << *d.delta;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    const auto& o = sc.options;
    out << YAML::Key << "options" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "f_min_hz" << YAML::Value << o.f_min_hz;
    out << YAML::Key << "f_max_hz" << YAML::Value << o.f_max_hz;
    out << YAML::Key << "points" << YAML::Value << o.points;
    out << YAML::Key << "threshold_tol" << YAML::Value << o.threshold_tol;
    out << YAML::Key << "ray_factor" << YAML::Value << o.ray_factor;
    out << YAML::Key << "critical_band" << YAML::Value << o.critical_band;
    out << YAML::Key << "rated_power" << YAML::Value << o.rated_power;
    out << YAML::Key << "pf_tol" << YAML::Value << o.pf_tol;
    out << YAML::Key << "pf_max_iter" << YAML::Value << o.pf_max_iter;
    out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

std::vector<Injection> scenario_injections(const Scenario& sc)
{
    std::vector<Injection> inj;
    for (const auto& d : sc.dispatch) {
        Injection in;
        in.bus = d.bus;
        in.P = d.p;
        if (d.full() || (d.u && !d.q))
            in.U = d.u;
        else
            in.Q = d.q;
        inj.push_back(in);
    }
    return inj;
}

OperatingPoint scenario_operating_point(const Scenario& sc)
{
    if (!sc.full_dispatch()) {
        PowerFlowOptions opt{sc.options.pf_tol, sc.options.pf_max_iter};
        return solve_powerflow(sc.net, scenario_injections(sc), sc.base, opt);
    }
    const auto ids = sc.net.converter_buses();
    const auto n = static_cast<Eigen::Index>(ids.size());
    OperatingPoint op;
    op.bus_ids = ids;
    op.P.resize(n);
    op.Q.resize(n);
    op.U.resize(n);
    op.delta.resize(n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (const auto& d : sc.dispatch)
            if (d.bus == ids[k]) {
                op.P(k) = d.p;
                op.Q(k) = *d.q;
                op.U(k) = *d.u;
                op.delta(k) = *d.delta;
            }
    op.validate();
    return op;
}

PowerFlowSolution scenario_powerflow(const Scenario& sc)
{
    PowerFlowOptions opt{sc.options.pf_tol, sc.options.pf_max_iter};
    return solve_network(sc.net, scenario_injections(sc), sc.base, opt);
}

} // namespace nmpz
