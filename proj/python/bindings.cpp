#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dsagen/config.hpp"
#include "dsagen/dataset.hpp"
#include "dsagen/error.hpp"
#include "dsagen/mlbench.hpp"
#include "dsagen/netmodel.hpp"
#include "dsagen/pipeline.hpp"
#include "dsagen/powerflow.hpp"
#include "dsagen/samplers.hpp"
#include "dsagen/smallsignal.hpp"

#include <iostream>
#include <sstream>

namespace py = pybind11;
using namespace dsagen;

namespace {

std::ostream& log_stream(bool verbose) {
    static std::ostringstream sink;
    sink.str({});
    return verbose ? std::cerr : sink;
}

config::RunConfig configured(const std::string& path, const std::vector<std::string>& overrides) {
    config::RunConfig cfg = config::load_toml(path);
    for (const auto& o : overrides) config::apply_override(cfg, o);
    config::apply_environment(cfg);
    cfg.validate();
    return cfg;
}

py::dict dataset_columns(const dataset::Dataset& d) {
    const auto n = static_cast<Eigen::Index>(d.rows.size());
    const auto dim = static_cast<Eigen::Index>(d.names.size());
    Eigen::MatrixXd X(n, dim);
    Eigen::VectorXd zeta(n);
    std::vector<int> feasible, stable, secure, in_hic;
    std::vector<std::string> source;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = d.rows[i];
        X.row(i) = r.x.transpose();
        zeta[i] = r.zeta ? *r.zeta : std::numeric_limits<double>::quiet_NaN();
        feasible.push_back(r.feasible);
        stable.push_back(r.stable);
        secure.push_back(r.secure);
        in_hic.push_back(r.in_hic);
        source.push_back(dataset::to_string(r.source));
    }
    py::dict out;
    out["names"] = d.names;
    out["X"] = X;
    out["zeta"] = zeta;
    out["feasible"] = feasible;
    out["stable"] = stable;
    out["secure"] = secure;
    out["in_hic"] = in_hic;
    out["source"] = source;
    return out;
}

py::dict stats_dict(const dataset::Dataset& d) {
    const auto s = dataset::stats(d);
    py::dict out;
    out["n"] = s.n;
    out["feasible"] = s.feasible;
    out["stable"] = s.stable;
    out["secure"] = s.secure;
    out["hic"] = s.hic;
    return out;
}

/// Network plus its dynamic data, kept together for small-signal queries.
struct Network {
    netmodel::NetworkModel model;
    std::optional<smallsignal::DynamicsData> dynamics;
};

}  // namespace

PYBIND11_MODULE(_dsagen, m) {
    m.doc() = "Security-boundary dataset generation for power systems.";
    m.attr("__version__") = DSAGEN_VERSION;

    py::register_exception<Error>(m, "DsagenError");

    py::class_<Network>(m, "Network")
        .def_property_readonly("n_buses", [](const Network& n) { return n.model.n_buses(); })
        .def_property_readonly("n_gens", [](const Network& n) { return n.model.n_gens(); })
        .def_property_readonly("n_lines", [](const Network& n) { return n.model.n_lines(); })
        .def_property_readonly("input_names", [](const Network& n) { return n.model.layout().names(); })
        .def("nominal_point", [](const Network& n) { return netmodel::nominal_point(n.model).x; })
        .def(
            "solve_pf",
            [](const Network& n, const Eigen::VectorXd& x, bool enforce_q_limits) {
                const auto st = powerflow::solve_pf(n.model, {x}, enforce_q_limits);
                py::dict out;
                out["converged"] = st.converged;
                out["iterations"] = st.iterations;
                out["vm"] = st.vm;
                out["va"] = st.va;
                out["sg"] = st.sg;
                out["feasible"] = st.converged && powerflow::check_feasibility(n.model, st).feasible;
                return out;
            },
            py::arg("x"), py::arg("enforce_q_limits") = false)
        .def(
            "zeta_min",
            [](const Network& n, const Eigen::VectorXd& x) -> std::optional<double> {
                if (!n.dynamics) throw Error(ErrorKind::Config, "network was loaded without dynamic data");
                const auto st = powerflow::solve_pf(n.model, {x}, false);
                if (!st.converged) return std::nullopt;
                return smallsignal::zeta_min(n.model, *n.dynamics, st);
            },
            py::arg("x"), "Least damping ratio at x, or None when the power flow diverges.");

    m.def(
        "load_network",
        [](const std::string& case_file, const std::optional<std::string>& dynamics_file) {
            Network n{netmodel::load_case_file(case_file), std::nullopt};
            if (dynamics_file) n.dynamics = smallsignal::load_dynamics(*dynamics_file, n.model);
            return n;
        },
        py::arg("case_file"), py::arg("dynamics_file") = py::none());

    py::class_<config::RunConfig>(m, "RunConfig")
        .def_readwrite("seed", &config::RunConfig::seed)
        .def_readwrite("workers", &config::RunConfig::workers)
        .def_readwrite("out_dir", &config::RunConfig::out_dir)
        .def("to_json", [](const config::RunConfig& c) { return c.to_json().dump(); });

    m.def("load_config", &configured, py::arg("path"), py::arg("overrides") = std::vector<std::string>{},
          "Reads a TOML run configuration and applies key=value overrides.");

    py::class_<dataset::Dataset>(m, "Dataset")
        .def("__len__", [](const dataset::Dataset& d) { return d.rows.size(); })
        .def_readonly("names", &dataset::Dataset::names)
        .def("columns", &dataset_columns)
        .def("stats", &stats_dict);

    m.def("read_dataset", py::overload_cast<const std::string&>(&dataset::read_csv), py::arg("path"));

    m.def(
        "polytope",
        [](const config::RunConfig& cfg, bool verbose) {
            const auto s = pipeline::cmd_polytope(cfg, log_stream(verbose));
            py::dict out;
            out["hyperplanes"] = s.run.polytope.n_hyperplanes();
            out["volume_history"] = s.run.polytope.volume_history;
            out["stop"] = relaxation::to_string(s.run.stop);
            return out;
        },
        py::arg("config"), py::arg("verbose") = false);

    m.def(
        "generate",
        [](const config::RunConfig& cfg, bool resume, bool verbose) {
            py::gil_scoped_release release;
            return pipeline::cmd_generate(cfg, resume, log_stream(verbose)).data;
        },
        py::arg("config"), py::arg("resume") = false, py::arg("verbose") = false);

    m.def(
        "benchmark",
        [](const config::RunConfig& cfg, const std::string& which, bool verbose) {
            py::gil_scoped_release release;
            return pipeline::cmd_benchmark(cfg, which, log_stream(verbose)).data;
        },
        py::arg("config"), py::arg("which") = "lhc", py::arg("verbose") = false);

    m.def(
        "train_eval",
        [](const config::RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& datasets,
           bool verbose) {
            const auto rep = pipeline::cmd_train_eval(cfg, datasets, log_stream(verbose));
            return py::module_::import("json").attr("loads")(rep.to_json().dump());
        },
        py::arg("config"), py::arg("datasets"), py::arg("verbose") = false);

    m.def(
        "lhc_sample",
        [](const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, int n, std::uint64_t seed) {
            const auto pts = samplers::lhc_sample({lower, upper}, n, seed);
            Eigen::MatrixXd out(static_cast<Eigen::Index>(pts.size()), lower.size());
            for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
            return out;
        },
        py::arg("lower"), py::arg("upper"), py::arg("n"), py::arg("seed") = 1);

    m.def("gini", &mlbench::gini, py::arg("counts"));
    m.def("f1", &mlbench::f1, py::arg("predicted"), py::arg("truth"));

    py::class_<mlbench::Tree>(m, "Tree")
        .def("predict", py::overload_cast<const Eigen::MatrixXd&>(&mlbench::Tree::predict, py::const_), py::arg("X"))
        .def_property_readonly("depth", &mlbench::Tree::depth)
        .def_property_readonly("n_leaves", &mlbench::Tree::n_leaves)
        .def("to_json", [](const mlbench::Tree& t) { return t.to_json().dump(); });

    m.def(
        "train_tree",
        [](const Eigen::MatrixXd& X, const std::vector<int>& y, int max_depth, double ccp_alpha) {
            mlbench::TreeParams p;
            p.max_depth = max_depth;
            p.ccp_alpha = ccp_alpha;
            return mlbench::train(X, y, p);
        },
        py::arg("X"), py::arg("y"), py::arg("max_depth") = 5, py::arg("ccp_alpha") = 0.01);
}
