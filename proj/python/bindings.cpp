#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nmpz/error.hpp"
#include "nmpz/factor.hpp"
#include "nmpz/jacobian.hpp"
#include "nmpz/linsim.hpp"
#include "nmpz/margin.hpp"
#include "nmpz/scenario.hpp"

namespace py = pybind11;
using namespace nmpz;

namespace {

OperatingPoint make_op(const Eigen::VectorXd& P, const Eigen::VectorXd& Q, const Eigen::VectorXd& U,
                       const Eigen::VectorXd& delta)
{
    OperatingPoint op;
    op.P = P;
    op.Q = Q;
    op.U = U;
    op.delta = delta;
    for (int i = 0; i < P.size(); ++i) op.bus_ids.push_back(i + 1);
    op.validate();
    return op;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Grid-strength and synchronization margins of converter-dominated grids";
    py::register_exception<Error>(m, "NmpzError", PyExc_ValueError);

    py::class_<OperatingPoint>(m, "OperatingPoint")
        .def_readonly("bus_ids", &OperatingPoint::bus_ids)
        .def_readonly("P", &OperatingPoint::P)
        .def_readonly("Q", &OperatingPoint::Q)
        .def_readonly("U", &OperatingPoint::U)
        .def_readonly("delta", &OperatingPoint::delta);

    py::class_<ComplexDressing>(m, "ComplexDressing")
        .def_readonly("S_tilde", &ComplexDressing::S_tilde)
        .def_readonly("Y_tilde", &ComplexDressing::Y_tilde)
        .def_readonly("S", &ComplexDressing::S)
        .def_readonly("phi", &ComplexDressing::phi);

    py::class_<NmpzResult>(m, "NmpzResult")
        .def_readonly("rho_z", &NmpzResult::rho_z)
        .def_readonly("lambdas", &NmpzResult::lambdas)
        .def_readonly("z_nmp", &NmpzResult::z_nmp)
        .def_readonly("w1", &NmpzResult::w1)
        .def_readonly("mu1", &NmpzResult::mu1);

    py::class_<Scenario>(m, "Scenario")
        .def_readonly("name", &Scenario::name)
        .def("operating_point", [](const Scenario& sc) { return scenario_operating_point(sc); })
        .def("laplacian", [](const Scenario& sc) { return build_laplacian(sc.net, sc.base).B; })
        .def("dump", [](const Scenario& sc) { return dump_scenario(sc); });

    py::class_<MarginReport>(m, "MarginReport")
        .def_readonly("rho_z", &MarginReport::rho_z)
        .def_readonly("rho_zc", &MarginReport::rho_zc)
        .def_readonly("M_V", &MarginReport::M_V)
        .def_readonly("M_S", &MarginReport::M_S)
        .def_readonly("zeros", &MarginReport::zeros)
        .def_readonly("op", &MarginReport::op)
        .def_property_readonly("threshold_found", [](const MarginReport& r) { return r.threshold.found; })
        .def_property_readonly("verdict", [](const MarginReport& r) { return to_string(r.verdict); })
        .def_property_readonly("subsystem_peak", [](const MarginReport& r) { return r.subsystem_sweep.peak; })
        .def_property_readonly("full_peak", [](const MarginReport& r) { return r.full_sweep.peak; })
        .def("__str__", &format_report);

    py::class_<ConverterModel>(m, "ConverterModel")
        .def_readonly("A", &ConverterModel::A)
        .def_readonly("B", &ConverterModel::B)
        .def_readonly("C", &ConverterModel::C)
        .def_readonly("D", &ConverterModel::D)
        .def_readonly("labels", &ConverterModel::labels)
        .def("jcig", &ConverterModel::jcig, py::arg("s"));

    py::class_<Mode>(m, "Mode")
        .def_readonly("eigenvalue", &Mode::lambda)
        .def_readonly("freq_hz", &Mode::freq_hz)
        .def_readonly("damping", &Mode::damping)
        .def_readonly("converter_share", &Mode::converter_share);

    m.def("load_scenario", &load_scenario, py::arg("path"));
    m.def("assess", &assess, py::arg("scenario"));
    m.def("build_laplacian", [](const Scenario& sc) { return build_laplacian(sc.net, sc.base).B; }, py::arg("scenario"));
    m.def("solve_powerflow", [](const Scenario& sc) { return scenario_powerflow(sc).op; }, py::arg("scenario"));
    m.def("dress", [](const Eigen::VectorXd& P, const Eigen::VectorXd& Q, const Eigen::VectorXd& U,
                      const Eigen::VectorXd& delta, const Eigen::MatrixXd& B) {
              const auto op = make_op(P, Q, U, delta);
              return dress(op, {B, op.bus_ids});
          },
          py::arg("P"), py::arg("Q"), py::arg("U"), py::arg("delta"), py::arg("B"));
    m.def("make_dressing", &make_dressing, py::arg("S_tilde"), py::arg("Y_tilde"));
    m.def("compute_heq", &compute_heq, py::arg("dressing"));
    m.def("analyze_zeros", &analyze_zeros, py::arg("dressing"), py::arg("omega0") = 2 * M_PI * 50.0);
    m.def("scalar_rho_z", &scalar_rho_z, py::arg("P"), py::arg("Q"), py::arg("U"), py::arg("BL"));
    m.def("eval_jnet", &eval_jnet, py::arg("dressing"), py::arg("s"), py::arg("omega0") = 2 * M_PI * 50.0);
    m.def("to_complex_jnet", &to_complex_jnet, py::arg("dressing"), py::arg("s"),
          py::arg("omega0") = 2 * M_PI * 50.0);
    m.def("linearize_converter",
          [](const Scenario& sc, int index) {
              const auto op = scenario_operating_point(sc);
              const auto specs = sc.converters_in_bus_order();
              if (index < 0 || index >= static_cast<int>(specs.size())) throw Error("converter index out of range");
              if (!specs[index].params) throw Error("converter uses an imported response");
              return linearize_converter(*specs[index].params, bus_point(op, index), sc.base);
          },
          py::arg("scenario"), py::arg("index") = 0);
    m.def("eval_jcig",
          [](const ConverterModel& cm, const std::vector<double>& freqs_hz) {
              std::vector<Eigen::Matrix2cd> out;
              for (double f : freqs_hz) out.push_back(cm.jcig(cd(0, 2 * M_PI * f)));
              return out;
          },
          py::arg("model"), py::arg("freqs_hz"));
    m.def("modes", [](const Scenario& sc) { return modes(assemble(sc)); }, py::arg("scenario"));
}
