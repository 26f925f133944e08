#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ffdalign/checkpoint.hpp"
#include "ffdalign/errors.hpp"
#include "ffdalign/evaluator.hpp"
#include "ffdalign/losses.hpp"
#include "ffdalign/pair_optimizer.hpp"
#include "ffdalign/parametrization.hpp"
#include "ffdalign/sampler.hpp"
#include "ffdalign/synth.hpp"
#include "ffdalign/trainer.hpp"

namespace py = pybind11;
using namespace ffdalign;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Field to_field(const Array& a) {
    if (a.ndim() != 2) throw ValidationError("expected a 2-D array");
    Field f(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), f.data.begin());
    return f;
}

Array to_array(const Field& f) {
    Array a({f.rows, f.cols});
    std::copy(f.data.begin(), f.data.end(), a.mutable_data());
    return a;
}

Silhouette to_silhouette(const Array& a) { return Silhouette(to_field(a)); }
Array to_array(const Silhouette& s) { return to_array(s.field()); }

DenseWarp to_dense(const Array& x, const Array& y) {
    DenseWarp w;
    w.x = to_field(x);
    w.y = to_field(y);
    if (!w.x.same_shape(w.y)) throw ValidationError("warp planes differ in shape");
    w.height = w.x.rows;
    w.width = w.x.cols;
    return w;
}

py::dict inference_dict(const Inference& inf) {
    py::dict d;
    d["raw"] = inf.raw;
    d["control"] = inf.control;
    d["warp_x"] = to_array(inf.dense.x);
    d["warp_y"] = to_array(inf.dense.y);
    d["warped"] = to_array(inf.warped);
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Free-form deformation shape alignment";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::enum_<RegularizationMode>(m, "Mode")
        .value("NONE", RegularizationMode::None)
        .value("TV", RegularizationMode::TV)
        .value("TVM", RegularizationMode::TVMonotonic);
    m.def("parse_mode", [](const std::string& s) { return parse_mode(s); });

    py::class_<DifferentialWarp>(m, "DifferentialWarp")
        .def_readonly("m", &DifferentialWarp::m)
        .def_readonly("n", &DifferentialWarp::n)
        .def_property_readonly("dx", [](const DifferentialWarp& d) { return to_array(d.dx); })
        .def_property_readonly("dy", [](const DifferentialWarp& d) { return to_array(d.dy); })
        .def_readwrite("offset_x", &DifferentialWarp::offset_x)
        .def_readwrite("offset_y", &DifferentialWarp::offset_y)
        .def("set_dx", [](DifferentialWarp& d, const Array& a) { d.dx = to_field(a); })
        .def("set_dy", [](DifferentialWarp& d, const Array& a) { d.dy = to_field(a); });

    py::class_<ControlWarp>(m, "ControlWarp")
        .def_readonly("m", &ControlWarp::m)
        .def_readonly("n", &ControlWarp::n)
        .def_property_readonly("x", [](const ControlWarp& w) { return to_array(w.x); })
        .def_property_readonly("y", [](const ControlWarp& w) { return to_array(w.y); });

    m.def("identity_differential", &identity_differential, py::arg("m"), py::arg("n"));
    m.def("identity_control", &identity_control, py::arg("m"), py::arg("n"));
    m.def("build_control_warp", &build_control_warp, py::arg("delta"), py::arg("mode"));
    m.def("is_axially_monotonic", &is_axially_monotonic);
    m.def("tv_identity_loss", [](const DifferentialWarp& d) { return tv_identity_loss(d).value; });

    m.def(
        "upsample",
        [](const ControlWarp& c, std::size_t h, std::size_t w) {
            const DenseWarp d = upsample(c, h, w);
            return py::make_tuple(to_array(d.x), to_array(d.y));
        },
        py::arg("control"), py::arg("height"), py::arg("width"));
    m.def(
        "resample",
        [](const Array& src, const Array& wx, const Array& wy) {
            return to_array(resample(to_silhouette(src), to_dense(wx, wy)));
        },
        py::arg("source"), py::arg("warp_x"), py::arg("warp_y"));
    m.def(
        "iou", [](const Array& a, const Array& b) { return iou(to_silhouette(a), to_silhouette(b)); }, py::arg("a"),
        py::arg("b"));
    m.def(
        "apply_mask",
        [](const Array& t, std::size_t r, std::size_t c, std::size_t h, std::size_t w) {
            return to_array(apply_mask(to_silhouette(t), RectMask{r, c, h, w}));
        },
        py::arg("target"), py::arg("center_row"), py::arg("center_col"), py::arg("height"), py::arg("width"));

    m.def(
        "synthesize",
        [](const std::string& kind, std::size_t count, std::size_t resolution, std::uint64_t seed) {
            std::vector<Array> out;
            for (const auto& s : synthesize(parse_shape_kind(kind), count, resolution, seed)) out.push_back(to_array(s));
            return out;
        },
        py::arg("kind"), py::arg("count"), py::arg("resolution") = 64, py::arg("seed") = 0);

    m.def(
        "align_pair",
        [](const Array& src, const Array& tgt, std::size_t max_iters, double lr, double lambda_,
           const std::string& mode, std::size_t grid_m, std::size_t grid_n, bool rotation) {
            OptimizeConfig cfg;
            cfg.max_iters = max_iters;
            cfg.learning_rate = lr;
            cfg.lambda = lambda_;
            cfg.mode = parse_mode(mode);
            cfg.grid_m = grid_m;
            cfg.grid_n = grid_n;
            const Silhouette s = to_silhouette(src), t = to_silhouette(tgt);
            AlignmentResult r;
            {
                py::gil_scoped_release release;
                r = rotation ? align_pair_with_rotation(s, t, cfg) : align_pair(s, t, cfg);
            }
            std::vector<double> trace;
            for (const auto& l : r.loss_trace) trace.push_back(l.total);
            py::dict d;
            d["control"] = r.control;
            d["delta"] = r.delta;
            d["warped"] = to_array(r.warped);
            d["iou"] = iou(r.warped, t);
            d["loss_trace"] = trace;
            d["iters_run"] = r.iters_run;
            d["converged"] = r.converged;
            d["theta"] = r.theta;
            return d;
        },
        py::arg("source"), py::arg("target"), py::arg("max_iters") = 1000, py::arg("lr") = 0.05,
        py::arg("lambda_") = 1e-5, py::arg("mode") = "tvm", py::arg("grid_m") = 8, py::arg("grid_n") = 8,
        py::arg("rotation") = false);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_readonly("step", &Checkpoint::step)
        .def_readonly("mode", &Checkpoint::mode)
        .def_property_readonly("resolution", [](const Checkpoint& c) { return c.params.arch.resolution; })
        .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.params.values.size(); });

    m.def(
        "fresh_checkpoint",
        [](std::size_t resolution, std::size_t grid_m, std::size_t grid_n, const std::string& mode,
           std::uint64_t seed) {
            Rng rng(seed);
            Checkpoint c;
            c.params = init_params<float>(rng, Architecture{resolution, grid_m, grid_n});
            c.mode = parse_mode(mode);
            return c;
        },
        py::arg("resolution") = 64, py::arg("grid_m") = 8, py::arg("grid_n") = 8, py::arg("mode") = "tvm",
        py::arg("seed") = 0);
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("checkpoint"));
    m.def(
        "infer",
        [](const Checkpoint& c, const Array& src, const Array& partial) {
            return inference_dict(infer(c, to_silhouette(src), to_silhouette(partial)));
        },
        py::arg("checkpoint"), py::arg("source"), py::arg("partial_target"));

    m.def(
        "train",
        [](const std::vector<Array>& train_images, const std::vector<Array>& test_images, std::size_t epochs,
           std::size_t batch_size, double lr, double lambda_, const std::string& mode, std::uint64_t seed) {
            ImagePool pool;
            for (const auto& a : train_images) pool.train.push_back(to_silhouette(a));
            for (const auto& a : test_images) pool.test.push_back(to_silhouette(a));
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.learning_rate = lr;
            cfg.lambda = lambda_;
            cfg.mode = parse_mode(mode);
            cfg.seed = seed;
            if (!pool.train.empty()) cfg.resolution = pool.train.front().height();
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(pool, cfg);
            }
            py::list epochs_out;
            for (const auto& e : r.epochs) {
                py::dict d;
                d["epoch"] = e.epoch;
                d["mean_shape_loss"] = e.mean_shape_loss;
                d["mean_smoothness"] = e.mean_smoothness;
                d["heldout_iou"] = e.heldout_iou;
                d["baseline_iou"] = e.baseline_iou;
                epochs_out.append(d);
            }
            return py::make_tuple(r.final_checkpoint, epochs_out);
        },
        py::arg("train_images"), py::arg("test_images"), py::arg("epochs") = 1, py::arg("batch_size") = 8,
        py::arg("lr") = 1e-3, py::arg("lambda_") = 1e-5, py::arg("mode") = "tvm", py::arg("seed") = 0);

    m.def(
        "ransac_affine",
        [](const Array& src, const Array& tgt, std::size_t iterations, std::uint64_t seed) {
            RansacConfig cfg;
            cfg.iterations = iterations;
            cfg.seed = seed;
            const RansacResult r = ransac_affine(to_silhouette(src), to_silhouette(tgt), cfg);
            py::dict d;
            d["affine"] = std::vector<double>{r.affine.a11, r.affine.a12, r.affine.a13,
                                              r.affine.a21, r.affine.a22, r.affine.a23};
            d["warped"] = to_array(r.warped);
            d["score"] = r.score;
            return d;
        },
        py::arg("source"), py::arg("target"), py::arg("iterations") = 2000, py::arg("seed") = 0);
}
