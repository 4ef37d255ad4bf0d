#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "splitct/config.hpp"
#include "splitct/metrics.hpp"
#include "splitct/training.hpp"

namespace py = pybind11;
using namespace splitct;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(std::vector<py::ssize_t> shape, const std::vector<double>& data) {
  Array out(shape);
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

Array from_image(const MaterialImage& img) {
  return to_array({img.materials, img.height, img.width}, img.data);
}

Array from_sinogram(const SpectralSinogram& y) {
  return to_array({y.n_angles, y.n_dets, y.channels}, y.data);
}

MaterialImage to_image(const Array& a) {
  if (a.ndim() != 3) throw ContractError("material image must have shape (M, H, W)");
  MaterialImage img(int(a.shape(0)), int(a.shape(1)), int(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

SpectralSinogram to_sinogram(const Array& a) {
  if (a.ndim() != 3) throw ContractError("sinogram must have shape (angles, detectors, bins)");
  SpectralSinogram y(int(a.shape(0)), int(a.shape(1)), int(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), y.data.begin());
  return y;
}

}  // namespace

PYBIND11_MODULE(_splitct, m) {
  m.doc() = "Self-supervised multi-partition reconstruction for multispectral CT";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<Settings>(m, "Settings")
      .def(py::init<>())
      .def_static("from_text", [](const std::string& text) {
        return Settings::from_config(Config::parse(text));
      })
      .def_static("load", [](const std::string& path) { return Settings::from_config(Config::load(path)); })
      .def("dump", &Settings::dump)
      .def("stream_seed", [](const Settings& s, const std::string& label) { return s.stream_seed(label); })
      .def_property_readonly("n_dets_effective", [](const Settings& s) { return s.geometry().n_dets; })
      .def_readwrite("size", &Settings::size)
      .def_readwrite("n_angles", &Settings::n_angles)
      .def_readwrite("n_dets", &Settings::n_dets)
      .def_readwrite("i0", &Settings::i0)
      .def_readwrite("sigma_e", &Settings::sigma_e)
      .def_readwrite("sigma_g", &Settings::sigma_g)
      .def_readwrite("solver_iters", &Settings::solver_iters)
      .def_readwrite("net_channels", &Settings::net_channels)
      .def_readwrite("max_epochs", &Settings::max_epochs)
      .def_readwrite("patience", &Settings::patience)
      .def_readwrite("eval_interval", &Settings::eval_interval)
      .def_readwrite("lr", &Settings::lr)
      .def_readwrite("master_seed", &Settings::master_seed)
      .def_property(
          "noise_kind", [](const Settings& s) { return to_string(s.noise_kind); },
          [](Settings& s, const std::string& k) { s.noise_kind = parse_noise_kind(k); });

  m.def("default_detector_count", &default_detector_count, py::arg("size"));

  m.def(
      "generate_phantom",
      [](const Settings& s, std::uint64_t seed) {
        PhantomConfig pc = s.phantom();
        pc.seed = seed;
        return from_image(generate_phantom(pc));
      },
      py::arg("settings"), py::arg("seed"));

  m.def(
      "forward",
      [](const Settings& s, const Array& phantom) {
        return from_sinogram(forward(s.spectral_model(), s.geometry(), to_image(phantom)));
      },
      py::arg("settings"), py::arg("phantom"));

  m.def(
      "add_noise",
      [](const Settings& s, const Array& clean, std::optional<std::uint64_t> seed) {
        NoiseConfig nc = s.noise();
        if (seed) nc.seed = *seed;
        return from_sinogram(apply_noise(nc, to_sinogram(clean)));
      },
      py::arg("settings"), py::arg("clean"), py::arg("seed") = py::none());

  m.def(
      "cp_fast",
      [](const Settings& s, const Array& sino) {
        SolverConfig cfg = s.solver();
        cfg.record_residuals = true;
        const SolveResult r = cp_fast(s.spectral_model(), RadonOperator(s.geometry()), to_sinogram(sino), cfg);
        return py::make_tuple(from_image(r.image), r.residuals);
      },
      py::arg("settings"), py::arg("sino"));

  m.def(
      "infer",
      [](const std::string& ckpt_dir, const Array& sino) {
        const Settings s = Settings::from_config(Config::load(std::filesystem::path(ckpt_dir) / "effective_config.txt"));
        const Checkpoint ckpt = load_checkpoint(ckpt_dir);
        const auto it = ckpt.meta.find("method");
        if (it == ckpt.meta.end()) throw FormatError("checkpoint lacks its training method");
        const Geometry geom = s.geometry();
        const SplitContext ctx(s.spectral_model(), geom,
                               MethodConfig::for_method(parse_method(it->second), geom).scheme, s.solver());
        return from_image(infer(ctx, ckpt.params, to_sinogram(sino)));
      },
      py::arg("ckpt_dir"), py::arg("sino"));

  m.def(
      "evaluate",
      [](const Array& recon, const Array& truth) {
        py::list out;
        for (const auto& sc : evaluate(to_image(recon), to_image(truth))) {
          py::dict d;
          d["material"] = sc.material;
          d["psnr_db"] = sc.psnr_db;
          d["ssim"] = sc.ssim;
          out.append(d);
        }
        return out;
      },
      py::arg("recon"), py::arg("truth"));

  m.def(
      "read_tensor",
      [](const std::string& path) {
        const Tensor t = read_tensor(path);
        return to_array(std::vector<py::ssize_t>(t.dims.begin(), t.dims.end()), t.values);
      },
      py::arg("path"));

  m.def(
      "write_tensor",
      [](const std::string& path, const Array& a) {
        std::vector<std::uint32_t> dims(a.shape(), a.shape() + a.ndim());
        write_tensor(path, dims, std::span<const double>(a.data(), std::size_t(a.size())));
      },
      py::arg("path"), py::arg("array"));
}
