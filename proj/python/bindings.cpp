#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gebm/bench/datasets.hpp"
#include "gebm/bench/experiments.hpp"
#include "gebm/bench/metrics.hpp"
#include "gebm/cli/lab.hpp"
#include "gebm/error.hpp"
#include "gebm/rkhs/rkhs_kale.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace gebm;

namespace {

// Configs cross the boundary as JSON text; the Python layer does json.dumps/loads.
json parse(const std::string& text) { return text.empty() ? json::object() : json::parse(text); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Generalized energy-based models: core bindings";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  m.def(
      "gaussian_kl",
      [](double mu1, double var1, double mu2, double var2) { return bench::gaussian_kl(mu1, var1, mu2, var2); },
      py::arg("mu1"), py::arg("var1"), py::arg("mu2"), py::arg("var2"));
  m.def("w1_1d", &bench::w1_1d, py::arg("x"), py::arg("y"));
  m.def(
      "mmd2",
      [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double bandwidth, int permutations, std::uint64_t seed) {
        const auto r = bench::mmd2(x, y, bandwidth, permutations, seed);
        return py::dict(py::arg("value") = r.value, py::arg("p_value") = r.p_value,
                        py::arg("null_stderr") = r.null_stderr, py::arg("bandwidth") = r.bandwidth);
      },
      py::arg("x"), py::arg("y"), py::arg("bandwidth") = 0.0, py::arg("permutations") = 200, py::arg("seed") = 0);

  m.def(
      "make_dataset",
      [](const std::string& name, Eigen::Index n, std::uint64_t seed) {
        const auto d = bench::make_dataset(name, n, seed);
        return py::dict(py::arg("name") = d.name, py::arg("train") = d.train, py::arg("val") = d.val,
                        py::arg("test") = d.test);
      },
      py::arg("name"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "rkhs_kale",
      [](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double bandwidth, double lambda) {
        const auto p = rkhs::build_problem(x, y, bandwidth, lambda);
        const auto s = rkhs::newton_solve(p);
        return py::dict(py::arg("value") = rkhs::rkhs_kale_value(s, p), py::arg("alpha") = s.alpha,
                        py::arg("beta") = s.beta, py::arg("c") = s.c, py::arg("iterations") = s.iterations);
      },
      py::arg("x"), py::arg("y"), py::arg("bandwidth"), py::arg("lambda_reg"));

  m.def("registered_experiments", &bench::registered_experiments);
  m.def(
      "run_benchmark",
      [](const std::string& name, const std::string& config, const std::string& out_root) {
        py::gil_scoped_release release;
        return bench::to_json(bench::run_benchmark(name, parse(config), out_root)).dump();
      },
      py::arg("name"), py::arg("config") = "", py::arg("out_root") = "");

  m.def(
      "train",
      [](const std::string& config, const std::filesystem::path& out) {
        py::gil_scoped_release release;
        std::ostringstream log;
        return cli::cmd_train(parse(config), out, log).dump();
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "sample",
      [](const std::string& config, const std::filesystem::path& out) {
        py::gil_scoped_release release;
        std::ostringstream log;
        return cli::cmd_sample(parse(config), out, log).dump();
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "kale",
      [](const std::string& config, const std::filesystem::path& out) {
        py::gil_scoped_release release;
        std::ostringstream log;
        cli::cmd_kale(parse(config), out, log);
        return log.str();
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "gebm_lab");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
