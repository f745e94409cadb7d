#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nlmodal/config.hpp"
#include "nlmodal/csv.hpp"
#include "nlmodal/error.hpp"
#include "nlmodal/experiments.hpp"
#include "nlmodal/hbm_epmc.hpp"
#include "nlmodal/identification.hpp"
#include "nlmodal/nmrom.hpp"

namespace py = pybind11;
using namespace nlmodal;

namespace {

py::dict backbone_dict(const BackboneReference& ref) {
    std::vector<double> a, omega, D;
    for (const auto& p : ref.points) {
        a.push_back(p.a);
        omega.push_back(p.omega);
        D.push_back(p.D);
    }
    py::dict d;
    d["a"] = a;
    d["omega"] = omega;
    d["D"] = D;
    d["complete"] = ref.complete;
    d["message"] = ref.message;
    return d;
}

py::dict table_dict(const CsvTable& t) {
    py::dict d;
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        py::list col;
        for (const auto& row : t.rows) {
            try {
                std::size_t used = 0;
                const double v = std::stod(row[c], &used);
                if (used == row[c].size()) {
                    col.append(v);
                    continue;
                }
            } catch (const std::exception&) {
            }
            col.append(row[c]);
        }
        d[py::str(t.columns[c])] = col;
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_nlmodal, m) {
    m.doc() = "Nonlinear modal analysis of base-excited beams";

    py::exception<Error>(m, "NlmodalError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object type = py::module_::import("nlmodal._nlmodal").attr("NlmodalError");
            py::object exc = type(py::str(e.what()));
            exc.attr("code") = py::str(to_string(e.code()));
            PyErr_SetObject(type.ptr(), exc.ptr());
        }
    });

    py::class_<ExperimentConfig>(m, "Config")
        .def_property_readonly("experiment", [](const ExperimentConfig& c) { return to_string(c.experiment); })
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def("validate", &ExperimentConfig::validate)
        .def("hash", [](const ExperimentConfig& c) { return config_hash(c); })
        .def("to_yaml", [](const ExperimentConfig& c) { return serialize_config(c); });

    m.def("parse_config", &parse_config, py::arg("yaml_text"));
    m.def("load_config", &load_config, py::arg("path"));
    m.def("list_experiments", [] {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [e, d] : experiment_catalog()) out.emplace_back(to_string(e), d);
        return out;
    });

    m.def(
        "run_experiment",
        [](const ExperimentConfig& c, const std::string& out_dir, int threads) {
            RunManifest man;
            {
                py::gil_scoped_release release;
                man = run_experiment(c, out_dir, threads);
            }
            return py::module_::import("json").attr("loads")(man.to_json());
        },
        py::arg("config"), py::arg("out_dir"), py::arg("threads") = 1,
        "Runs the experiment and returns the manifest as a dict.");

    m.def(
        "linear_frequencies",
        [](const ExperimentConfig& c) { return Eigen::VectorXd(build_model(c.beam).omega()); },
        py::arg("config"));

    m.def(
        "epmc_backbone",
        [](const ExperimentConfig& c) {
            const HbmProblem p = build_problem(c);
            BackboneReference ref;
            {
                py::gil_scoped_release release;
                ref = continue_backbone(p);
            }
            return backbone_dict(ref);
        },
        py::arg("config"), "Backbone of the tracked mode by extended periodic motion concept.");

    m.def(
        "damping_model_free",
        [](const Eigen::VectorXcd& q1, cdouble qb, const std::vector<double>& positions, double L,
           const std::string& boundary, const std::string& quadrature) {
            const SensorLayout layout{positions, quadrature_from_string(quadrature),
                                      supported_ends(boundary_from_string(boundary), L)};
            return damping_model_free(q1, qb, quadrature_weights(layout, L));
        },
        py::arg("q1"), py::arg("qb"), py::arg("positions"), py::arg("L"), py::arg("boundary") = "cantilever",
        py::arg("quadrature") = "trapezoidal");

    m.def(
        "damping_model_based",
        [](const Eigen::VectorXcd& q1, cdouble qb, const ExperimentConfig& c, const std::vector<double>& positions,
           const std::vector<int>& modes) {
            const ModalBeamModel model = build_model(c.beam);
            return damping_model_based(q1, qb, make_basis(model, positions, modes)).D;
        },
        py::arg("q1"), py::arg("qb"), py::arg("config"), py::arg("positions"), py::arg("modes"));

    m.def(
        "read_table", [](const std::string& path) { return table_dict(read_csv(path)); }, py::arg("path"),
        "Reads an artifact CSV into a dict of columns.");

    m.def(
        "compare_files",
        [](const std::string& ref, const std::string& cand, const std::string& key, const std::string& tol,
           double default_tol) {
            CompareSpec spec{key, tol.empty() ? std::map<std::string, double>{} : parse_tolerances(tol), default_tol};
            const auto rep = compare_tables(read_csv(ref), read_csv(cand), spec);
            py::dict d;
            d["pass"] = rep.pass;
            d["rows_compared"] = rep.rows_compared;
            d["rows_skipped"] = rep.rows_skipped;
            py::dict cols;
            for (const auto& c : rep.columns) cols[py::str(c.column)] = c.max_rel_error;
            d["max_rel_error"] = cols;
            return d;
        },
        py::arg("reference"), py::arg("candidate"), py::arg("key") = "", py::arg("tol") = "",
        py::arg("default_tol") = 1e-6);

    m.def(
        "forced_response",
        [](const std::vector<double>& a, const std::vector<double>& omega, const std::vector<double>& D,
           const std::vector<double>& force_factor, double level, double Omega_min, double Omega_max, bool velocity) {
            ModalOscillatorTable t{a, omega, D, force_factor, {}};
            const TableInterpolant interp(t);
            const auto fr = solve_forced_response(interp, {level, velocity ? LevelKind::BaseVelocity : LevelKind::BaseDisplacement},
                                                  Omega_min, Omega_max);
            std::vector<double> W, amp, theta;
            std::vector<std::string> stab;
            for (const auto& p : fr.points) {
                W.push_back(p.Omega);
                amp.push_back(p.a);
                theta.push_back(p.theta);
                stab.push_back(to_string(p.stability));
            }
            py::dict d;
            d["Omega"] = W;
            d["a"] = amp;
            d["theta"] = theta;
            d["stability"] = stab;
            d["peak_found"] = fr.peak_found;
            d["a_peak"] = fr.a_peak;
            d["Omega_peak"] = fr.Omega_peak;
            d["truncated"] = fr.truncated;
            return d;
        },
        py::arg("a"), py::arg("omega"), py::arg("D"), py::arg("force_factor"), py::arg("level"),
        py::arg("Omega_min"), py::arg("Omega_max"), py::arg("velocity") = false,
        "Response of the amplitude-dependent modal oscillator to harmonic base motion.");
}
