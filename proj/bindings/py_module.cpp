// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gecolab/cli.hpp"
#include "gecolab/config.hpp"
#include "gecolab/diffusion.hpp"
#include "gecolab/digest.hpp"
#include "gecolab/errors.hpp"
#include "gecolab/metrics.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/splat.hpp"
#include "gecolab/tensor.hpp"

namespace py = pybind11;
using namespace gecolab;
using nlohmann::json;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape(static_cast<size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = static_cast<int>(a.shape(i));
    Tensor t(shape);
    std::copy_n(a.data(), t.size(), t.data());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy_n(t.data(), t.size(), a.mutable_data());
    return a;
}

diffusion::DiffusionSchedule schedule_from_args(const std::string& kind, double t_min,
                                                double t_max) {
    return diffusion::make_schedule(diffusion::schedule_kind_from_string(kind), t_min, t_max);
}

json config_json(const std::string& text, const std::vector<std::string>& overrides) {
    config::ResolvedConfig rc = config::resolve_config_text(text, overrides);
    json j = rc.config.to_json();
    j["digest"] = rc.config.digest();
    j["provenance"] = rc.echo();
    return j;
}

py::object json_to_py(const json& j) {
    switch (j.type()) {
        case json::value_t::null: return py::none();
        case json::value_t::boolean: return py::bool_(j.get<bool>());
        case json::value_t::number_integer: return py::int_(j.get<int64_t>());
        case json::value_t::number_unsigned: return py::int_(j.get<uint64_t>());
        case json::value_t::number_float: return py::float_(j.get<double>());
        case json::value_t::string: return py::str(j.get<std::string>());
        case json::value_t::array: {
            py::list out;
            for (const auto& item : j) out.append(json_to_py(item));
            return out;
        }
        default: {
            py::dict out;
            for (auto it = j.begin(); it != j.end(); ++it)
                out[py::str(it.key())] = json_to_py(it.value());
            return out;
        }
    }
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "gecolab core operations";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<StorageError>(m, "StorageError", PyExc_IOError);

    // ---- hashing -------------------------------------------------------------
    m.def("sha256_hex", [](const py::bytes& b) { return sha256_hex(std::string(b)); },
          "hex sha256 of a byte string");
    m.def("sha256_file", [](const std::filesystem::path& p) { return sha256_file(p); });
    m.def("sha256_tree", [](const std::filesystem::path& p) { return sha256_tree(p); });

    // ---- metrics -------------------------------------------------------------
    m.def(
        "psnr",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
            return metrics::psnr(tensor_from_array(a), tensor_from_array(b));
        },
        py::arg("a"), py::arg("b"), "PSNR over [-1,1] images; +inf when identical");
    m.def(
        "ssim",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
            return metrics::ssim(tensor_from_array(a), tensor_from_array(b));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "perceptual",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
            return metrics::perceptual(tensor_from_array(a), tensor_from_array(b));
        },
        py::arg("a"), py::arg("b"), "seeded random-feature perceptual distance");

    // ---- diffusion schedule ----------------------------------------------------
    m.def(
        "schedule_coeffs",
        [](double t, const std::string& kind, double t_min, double t_max) {
            diffusion::DiffusionSchedule s = schedule_from_args(kind, t_min, t_max);
            return py::make_tuple(s.alpha(t), s.sigma(t));
        },
        py::arg("t"), py::arg("kind") = "cosine", py::arg("t_min") = 1e-3,
        py::arg("t_max") = 0.999, "(alpha, sigma) of the VP schedule at t");
    m.def(
        "ddim_timesteps",
        [](int steps, const std::string& kind, double t_min, double t_max) {
            return diffusion::ddim_timesteps(steps, schedule_from_args(kind, t_min, t_max));
        },
        py::arg("steps"), py::arg("kind") = "cosine", py::arg("t_min") = 1e-3,
        py::arg("t_max") = 0.999);
    m.def(
        "add_noise",
        [](const py::array_t<double>& x0, const py::array_t<double>& eps, double t,
           const std::string& kind, double t_min, double t_max) {
            return array_from_tensor(diffusion::add_noise(
                tensor_from_array(x0), tensor_from_array(eps), t,
                schedule_from_args(kind, t_min, t_max)));
        },
        py::arg("x0"), py::arg("eps"), py::arg("t"), py::arg("kind") = "cosine",
        py::arg("t_min") = 1e-3, py::arg("t_max") = 0.999);

    // ---- cameras and rasterization ---------------------------------------------
    py::class_<scene::CameraPose>(m, "CameraPose")
        .def_readonly("height", &scene::CameraPose::height)
        .def_readonly("width", &scene::CameraPose::width)
        .def_readonly("fov_y", &scene::CameraPose::fov_y)
        .def_property_readonly(
            "position",
            [](const scene::CameraPose& p) {
                return py::make_tuple(p.position.x(), p.position.y(), p.position.z());
            });
    m.def(
        "look_at",
        [](const std::array<double, 3>& eye, const std::array<double, 3>& target, double fov_y,
           int height, int width) {
            return scene::look_at(Vec3(eye[0], eye[1], eye[2]),
                                  Vec3(target[0], target[1], target[2]), fov_y, height, width);
        },
        py::arg("eye"), py::arg("target") = std::array<double, 3>{0, 0, 0},
        py::arg("fov_y") = 0.8726646259971648, py::arg("height") = 64, py::arg("width") = 64);
    m.def(
        "rasterize",
        [](const py::array_t<double>& packed, const scene::CameraPose& pose, double cut_sigma,
           double near_plane, double cov_reg) {
            splat::RasterConfig cfg;
            cfg.cut_sigma = cut_sigma;
            cfg.near_plane = near_plane;
            cfg.cov_reg = cov_reg;
            splat::GaussianSet set = splat::unpack_gaussians(tensor_from_array(packed),
                                                             splat::GaussianSource::Loaded);
            splat::RasterOutput out = splat::rasterize(set, pose, cfg);
            return py::make_tuple(array_from_tensor(out.image), array_from_tensor(out.alpha));
        },
        py::arg("packed"), py::arg("pose"), py::arg("cut_sigma") = 3.0,
        py::arg("near_plane") = 0.01, py::arg("cov_reg") = 1e-6,
        "packed [N,14] rows: pos xyz, scale xyz, quat wxyz, opacity, rgb -> (image, alpha)");
    m.def(
        "import_gaussians",
        [](const std::filesystem::path& p) {
            return array_from_tensor(splat::pack_gaussians(splat::import_gaussians(p)));
        },
        py::arg("path"), "GSPL file -> packed [N,14] array");
    m.def(
        "export_gaussians",
        [](const py::array_t<double>& packed, const std::filesystem::path& p) {
            splat::export_gaussians(splat::unpack_gaussians(tensor_from_array(packed),
                                                            splat::GaussianSource::Loaded),
                                    p);
        },
        py::arg("packed"), py::arg("path"));

    // ---- config -----------------------------------------------------------------
    m.def(
        "resolve_config",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            return json_to_py(config_json(text, overrides));
        },
        py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
        "resolved run config as a dict, with 'digest' and per-key 'provenance'");
    m.def(
        "emit_config",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            return config::emit_config(config::resolve_config_text(text, overrides).config);
        },
        py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{});

    // ---- pipeline ----------------------------------------------------------------
    m.def("run_cli", [](const std::vector<std::string>& args) { return cli::run(args); },
          py::arg("args"), "the geco command line, in process; returns the exit code");
}
