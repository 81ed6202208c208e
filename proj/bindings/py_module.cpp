// Python bindings for the khronos core: surrogate evaluation, training,
// datasets, the Poisson solver, and batched inversion.

#include "khronos/dataset.hpp"
#include "khronos/inversion.hpp"
#include "khronos/kernel_basis.hpp"
#include "khronos/parallel.hpp"
#include "khronos/poisson.hpp"
#include "khronos/quadrature.hpp"
#include "khronos/surrogate.hpp"
#include "khronos/training.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <numeric>

namespace py = pybind11;
using namespace khronos;

namespace {

DataMatrix matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2D array");
    DataMatrix m(static_cast<std::size_t>(arr.shape(0)), static_cast<std::size_t>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + arr.size(), m.values.begin());
    return m;
}

py::array_t<double> numpy_from_matrix(const DataMatrix& m) {
    py::array_t<double> arr({m.rows, m.cols});
    std::copy(m.values.begin(), m.values.end(), arr.mutable_data());
    return arr;
}

std::vector<double> vector_from_numpy(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    return std::vector<double>(arr.data(), arr.data() + arr.size());
}

py::array_t<double> numpy_from_vector(const std::vector<double>& v) {
    py::array_t<double> arr(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), arr.mutable_data());
    return arr;
}

py::dict report_to_dict(const TrainReport& r) {
    py::dict d;
    d["loss_history"] = numpy_from_vector(r.loss_history);
    d["residual_history"] = numpy_from_vector(r.residual_history);
    d["final_loss"] = r.final_loss;
    d["wall_time_s"] = r.wall_time_s;
    d["modes_used"] = r.modes_used;
    d["tolerance_met"] = r.tolerance_met;
    return d;
}

TrainConfig config_from_kwargs(int epochs, double lr_start, double lr_end, int batch,
                               std::uint64_t seed, double seq_tolerance, int max_modes,
                               bool init_scaled, int threads) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.lr_start = lr_start;
    cfg.lr_end = lr_end;
    cfg.batch = batch;
    cfg.seed = seed;
    cfg.seq_tolerance = seq_tolerance;
    cfg.max_modes = max_modes;
    cfg.init_scaled = init_scaled;
    cfg.threads = threads;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Separable kernel-expansion surrogates (quadratic B-spline feature maps)";

    m.def("build_knots", [](int n_elements) {
        const KnotGrid g = build_knots(n_elements);
        py::dict d;
        d["n_elements"] = g.n_elements;
        d["h"] = g.h;
        d["n_basis"] = g.n_basis;
        d["knots"] = numpy_from_vector(g.knots);
        return d;
    });
    m.def("eval_basis", [](int n_elements, double x) {
        return numpy_from_vector(eval_basis(build_knots(n_elements), x));
    });
    m.def("eval_basis_deriv", [](int n_elements, double x) {
        return numpy_from_vector(eval_basis_deriv(build_knots(n_elements), x));
    });
    m.def("gauss_nodes", [](int n) {
        const GaussRule r = gauss_nodes(n);
        return py::make_tuple(numpy_from_vector(r.nodes), numpy_from_vector(r.weights));
    });

    py::class_<Surrogate>(m, "Surrogate")
        .def(py::init([](int dims, int modes, int elements, int layers, std::uint64_t seed) {
                 return Surrogate(SurrogateConfig::uniform(dims, modes, elements, layers), seed);
             }),
             py::arg("dims"), py::arg("modes"), py::arg("elements"), py::arg("layers") = 1,
             py::arg("seed") = 0)
        .def_property_readonly("dims", &Surrogate::dims)
        .def_property_readonly("modes", &Surrogate::modes)
        .def_property_readonly("layers", &Surrogate::layers)
        .def_property_readonly("param_count", &Surrogate::param_count)
        .def_property(
            "weights",
            [](const Surrogate& s) {
                return numpy_from_vector(std::vector<double>(s.weights().begin(), s.weights().end()));
            },
            [](Surrogate& s, const py::array_t<double, py::array::c_style | py::array::forcecast>& w) {
                if (static_cast<std::size_t>(w.size()) != s.param_count()) {
                    throw std::invalid_argument("weight size mismatch");
                }
                std::copy(w.data(), w.data() + w.size(), s.weights().begin());
            })
        .def("init_uniform", &Surrogate::init_uniform, py::arg("center"), py::arg("noise"),
             py::arg("seed"))
        .def("feature_map", &Surrogate::feature_map, py::arg("mode"), py::arg("dim"), py::arg("x"))
        .def("forward",
             [](const Surrogate& s,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
                 if (pts.ndim() == 1) {
                     const std::vector<double> x = vector_from_numpy(pts);
                     return py::cast(s.forward(x));
                 }
                 const DataMatrix X = matrix_from_numpy(pts);
                 py::array_t<double> out(static_cast<py::ssize_t>(X.rows));
                 for (std::size_t i = 0; i < X.rows; ++i) {
                     out.mutable_data()[i] = s.forward(X.row(i));
                 }
                 return py::cast<py::object>(out);
             })
        .def("grad_input",
             [](const Surrogate& s,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
                 return numpy_from_vector(s.grad_input(vector_from_numpy(x)));
             })
        .def("grad_params",
             [](const Surrogate& s,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                double upstream) {
                 return numpy_from_vector(s.grad_params(vector_from_numpy(x), upstream));
             },
             py::arg("x"), py::arg("upstream") = 1.0)
        .def("eval_grid",
             [](const Surrogate& s, const std::vector<std::vector<double>>& axes) {
                 const GridTensor t = s.eval_grid(axes);
                 py::array_t<double> arr(t.shape);
                 std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
                 return arr;
             })
        .def("to_json", &Surrogate::to_json)
        .def_static("from_json", &Surrogate::from_json)
        .def("save", &Surrogate::save)
        .def_static("load", &Surrogate::load);

    m.def(
        "mse_loss",
        [](const Surrogate& s, const py::array_t<double>& X, const py::array_t<double>& y,
           bool with_grad) -> py::tuple {
            const DataMatrix mx = matrix_from_numpy(X);
            const std::vector<double> ty = vector_from_numpy(y);
            if (!with_grad) return py::make_tuple(mse_loss(s, mx, ty), py::none());
            std::vector<double> grad(s.param_count());
            const double loss = mse_loss(s, mx, ty, grad);
            return py::make_tuple(loss, numpy_from_vector(grad));
        },
        py::arg("surrogate"), py::arg("X"), py::arg("y"), py::arg("with_grad") = false);

    m.def(
        "fit_mse",
        [](Surrogate& s, const py::array_t<double>& X, const py::array_t<double>& y, int epochs,
           double lr_start, double lr_end, int batch, std::uint64_t seed, double seq_tolerance,
           int max_modes, bool init_scaled, int threads) {
            const DataMatrix mx = matrix_from_numpy(X);
            const std::vector<double> ty = vector_from_numpy(y);
            const TrainConfig cfg = config_from_kwargs(epochs, lr_start, lr_end, batch, seed,
                                                       seq_tolerance, max_modes, init_scaled, threads);
            return report_to_dict(train_cooperative(s, cfg, mx, ty));
        },
        py::arg("surrogate"), py::arg("X"), py::arg("y"), py::arg("epochs") = 1000,
        py::arg("lr_start") = 0.15, py::arg("lr_end") = 0.05, py::arg("batch") = 0,
        py::arg("seed") = 0, py::arg("seq_tolerance") = 1e-6, py::arg("max_modes") = 8,
        py::arg("init_scaled") = true, py::arg("threads") = 0);

    m.def(
        "fit_sequential",
        [](int dims, int elements, const py::array_t<double>& X, const py::array_t<double>& y,
           int epochs, double lr_start, double lr_end, std::uint64_t seed, double seq_tolerance,
           int max_modes, int threads) {
            const DataMatrix mx = matrix_from_numpy(X);
            const std::vector<double> ty = vector_from_numpy(y);
            const TrainConfig cfg = config_from_kwargs(epochs, lr_start, lr_end, 0, seed,
                                                       seq_tolerance, max_modes, true, threads);
            auto [s, report] = train_sequential(SurrogateConfig::uniform(dims, 1, elements), cfg,
                                                mx, ty);
            return py::make_tuple(std::move(s), report_to_dict(report));
        },
        py::arg("dims"), py::arg("elements"), py::arg("X"), py::arg("y"), py::arg("epochs") = 1000,
        py::arg("lr_start") = 0.15, py::arg("lr_end") = 0.05, py::arg("seed") = 0,
        py::arg("seq_tolerance") = 1e-6, py::arg("max_modes") = 8, py::arg("threads") = 0);

    m.def("cosine_lr", &cosine_lr, py::arg("epoch"), py::arg("total"), py::arg("lr_start"),
          py::arg("lr_end"));

    m.def("lhs_sample", [](std::size_t n, std::size_t d, std::uint64_t seed) {
        return numpy_from_matrix(lhs_sample(n, d, seed));
    });
    m.def("borehole", [](const py::array_t<double>& p) { return borehole(vector_from_numpy(p)); });
    m.def("sobol_g", [](const py::array_t<double>& p) { return sobol_g(vector_from_numpy(p)); });
    m.def("r2_score", [](const py::array_t<double>& pred, const py::array_t<double>& truth) {
        return r2_score(vector_from_numpy(pred), vector_from_numpy(truth));
    });
    m.def("mse", [](const py::array_t<double>& pred, const py::array_t<double>& truth) {
        return mse(vector_from_numpy(pred), vector_from_numpy(truth));
    });

    m.def(
        "solve_poisson",
        [](int dof, int modes, int epochs, double lr_start, double lr_end, int grid_n,
           std::uint64_t seed) {
            PoissonOptions opts;
            opts.dof = dof;
            opts.modes = modes;
            opts.epochs = epochs;
            opts.lr_start = lr_start;
            opts.lr_end = lr_end;
            opts.grid_n = grid_n;
            opts.seed = seed;
            PoissonResult res = solve_poisson(opts);
            py::dict d;
            d["l2_sq"] = res.l2_sq;
            d["h1_sq"] = res.h1_sq;
            d["energy_initial"] = res.energy_initial;
            d["energy_final"] = res.energy_final;
            d["params_total"] = res.params_total;
            d["params_free"] = res.params_free;
            d["n_elements"] = res.n_elements;
            d["surrogate"] = py::cast(std::move(res.surrogate));
            return d;
        },
        py::arg("dof"), py::arg("modes") = 1, py::arg("epochs") = 3000, py::arg("lr_start") = 0.1,
        py::arg("lr_end") = 1e-5, py::arg("grid_n") = 1000, py::arg("seed") = 0);

    m.def(
        "invert_batch",
        [](const Surrogate& s, double target, const py::array_t<double>& inits, int iters,
           double fail_threshold, int threads) {
            InversionJob job;
            job.targets = {target};
            job.init_points = matrix_from_numpy(inits);
            job.max_iters = iters;
            job.fail_threshold = fail_threshold;
            job.threads = threads;
            const InversionResult res = invert_batch(s, job);
            py::dict d;
            d["points"] = numpy_from_matrix(res.final_points);
            d["residuals"] = numpy_from_vector(res.residuals);
            d["rmse"] = res.rmse;
            d["rmse_converged"] = res.rmse_converged;
            d["failure_rate"] = res.failure_rate;
            d["wall_time_s"] = res.wall_time_s;
            return d;
        },
        py::arg("surrogate"), py::arg("target"), py::arg("inits"), py::arg("iters") = 10,
        py::arg("fail_threshold") = 1e-3, py::arg("threads") = 0);

    m.attr("__version__") = "0.1.0";
}
