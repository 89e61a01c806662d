// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sald/channel/channel.hpp"
#include "sald/cli/pipeline.hpp"
#include "sald/edge/encoder.hpp"
#include "sald/error.hpp"
#include "sald/metrics/quality.hpp"

namespace py = pybind11;
using namespace sald;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("expected a [C, H, W] array");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

Array to_array(const Image& img) {
  Array a({img.channels, img.height, img.width});
  std::copy(img.data.begin(), img.data.end(), a.mutable_data());
  return a;
}

Mask to_mask(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw DimensionError("expected an [H, W] mask");
  Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = a.data()[i] ? 1 : 0;
  return m;
}

py::array_t<std::uint8_t> mask_array(const Mask& m) {
  py::array_t<std::uint8_t> a({m.height, m.width});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

py::bytes to_bytes(const edge::Payload& p) {
  const auto b = edge::serialize(p);
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

edge::Payload from_bytes(const py::bytes& b) {
  const std::string s = b;
  return edge::deserialize({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

}  // namespace

PYBIND11_MODULE(_sald, m) {
  m.doc() = "Bandwidth-constrained edge-cloud super-resolution simulator";

  auto base = py::register_exception<Error>(m, "SaldError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<BudgetExceeded>(m, "BudgetExceeded", base);
  py::register_exception<TransmissionRejected>(m, "TransmissionRejected", base);
  py::register_exception<NumericError>(m, "NumericError", base);

  m.def(
      "generate_scene",
      [](std::uint64_t seed, int size, const std::string& scene_class) {
        const auto s = data::generate_scene(seed, size, data::parse_scene_class(scene_class));
        py::list targets;
        for (const auto& b : s.targets) targets.append(py::make_tuple(b.x, b.y, b.w, b.h));
        py::dict d;
        d["hr"] = to_array(s.hr);
        d["gt_mask"] = mask_array(s.gt_mask);
        d["targets"] = targets;
        d["scene_class"] = std::string(data::to_string(s.scene_class));
        d["seed"] = s.seed;
        return d;
      },
      py::arg("seed"), py::arg("size") = 64, py::arg("scene_class") = "mixed",
      "Render one synthetic scene. Returns hr [3,H,W] in [0,1], gt_mask, targets (x, y, w, h).");

  m.def(
      "make_dataset",
      [](std::uint64_t seed, int n_train, int n_test, int size) {
        const auto d = data::make_dataset(seed, n_train, n_test, size);
        auto entries = [](const std::vector<data::ManifestEntry>& v) {
          std::vector<std::pair<std::uint64_t, std::string>> out;
          for (const auto& e : v) out.emplace_back(e.seed, std::string(data::to_string(e.scene_class)));
          return out;
        };
        return py::make_tuple(entries(d.train), entries(d.test));
      },
      py::arg("seed"), py::arg("n_train"), py::arg("n_test"), py::arg("size") = 64,
      "Class-balanced (seed, class) lists for the train and test splits.");

  m.def(
      "encode",
      [](const Array& hr, std::optional<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>> mask,
         int s, int q, const std::string& mask_source) {
        edge::EncodeOptions o;
        o.s = s;
        o.q = q;
        o.mask_source = edge::parse_mask_source(mask_source);
        std::optional<Mask> gt;
        if (mask) gt = to_mask(*mask);
        return to_bytes(edge::encode_image(to_image(hr), gt ? &*gt : nullptr, o));
      },
      py::arg("hr"), py::arg("mask") = py::none(), py::arg("s") = 4, py::arg("q") = 5,
      py::arg("mask_source") = "oracle", "Edge encoder; returns the serialized payload.");

  m.def(
      "transmit",
      [](const py::bytes& payload, double rate, std::uint64_t seed, std::size_t budget, const std::string& mode) {
        channel::ChannelConfig c;
        c.mask_missing_rate = rate;
        c.seed = seed;
        c.budget = budget;
        if (mode == "pixels") c.mode = channel::DropMode::pixels;
        else if (mode == "components") c.mode = channel::DropMode::components;
        else throw ConfigError("unknown drop mode '" + mode + "'");
        return to_bytes(channel::transmit(from_bytes(payload), c));
      },
      py::arg("payload"), py::arg("rate") = 0.0, py::arg("seed") = 0, py::arg("budget") = 150000,
      py::arg("mode") = "pixels", "Lossy channel pass over a serialized payload.");

  m.def(
      "payload_info",
      [](const py::bytes& payload) {
        const auto p = from_bytes(payload);
        const auto sz = edge::payload_sizes(p);
        py::dict d;
        d["height"] = p.height;
        d["width"] = p.width;
        d["s"] = p.s;
        d["q"] = p.q;
        d["bytes"] = sz.total();
        d["lr_bytes"] = sz.lr_data;
        d["mask_bytes"] = sz.mask_rle;
        d["bpp"] = edge::bits_per_pixel(p);
        d["mask"] = mask_array(p.mask);
        d["lr"] = to_array(edge::dequantize_lr(p));
        return d;
      },
      py::arg("payload"));

  m.def(
      "psnr",
      [](const Array& a, const Array& b) { return metrics::psnr(to_image(a), to_image(b)); }, py::arg("a"),
      py::arg("b"), "PSNR in dB on [0,1] images; None for identical inputs.");
  m.def(
      "ssim", [](const Array& a, const Array& b) { return metrics::ssim(to_image(a), to_image(b)); }, py::arg("a"),
      py::arg("b"));
  m.def(
      "edge_iou",
      [](const Array& sr, const Array& hr, double threshold) {
        return metrics::edge_iou(to_image(sr), to_image(hr), threshold);
      },
      py::arg("sr"), py::arg("hr"), py::arg("threshold") = 0.2);
  m.def(
      "bicubic_upsample",
      [](const Array& lr, int factor) { return to_array(metrics::bicubic_upsample(to_image(lr), factor)); },
      py::arg("lr"), py::arg("factor") = 4);

  py::class_<diffusion::SaldModel<float>>(m, "Model")
      .def_static(
          "load", [](const std::string& path) { return cli::load_trained(path); }, py::arg("path"))
      .def("parameter_count", &diffusion::SaldModel<float>::parameter_count)
      .def(
          "reconstruct",
          [](diffusion::SaldModel<float>& model, const py::bytes& payload, int timesteps, std::uint64_t seed) {
            const auto p = from_bytes(payload);
            Image out;
            {
              py::gil_scoped_release release;
              model.set_training(false);
              out = diffusion::sample(model, p, diffusion::default_schedule(timesteps), seed);
            }
            return to_array(out);
          },
          py::arg("payload"), py::arg("timesteps") = 50, py::arg("seed") = 0);
}
