// SPDX-License-Identifier: Apache-2.0
#include "sald/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sald/error.hpp"

namespace sald {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

std::vector<double> luminance(const Image& img) {
  if (img.channels == 1) return img.data;
  if (img.channels != 3) throw DimensionError("luminance needs 1 or 3 channels");
  std::vector<double> y(img.plane());
  const double* r = img.data.data();
  const double* g = r + img.plane();
  const double* b = g + img.plane();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return y;
}

Image clamped(Image img) {
  for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Reads the Netpbm header tokens, skipping comments.
void read_header(std::istream& in, const char* magic, int& w, int& h, int& maxval) {
  std::string m;
  in >> m;
  if (m != magic) throw FormatError(std::string("expected ") + magic + " file");
  int* fields[] = {&w, &h, &maxval};
  for (int* f : fields) {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string line;
      std::getline(in, line);
      in >> std::ws;
    }
    if (!(in >> *f)) throw FormatError("truncated Netpbm header");
  }
  in.get();
  if (w <= 0 || h <= 0 || maxval != 255) throw FormatError("unsupported Netpbm geometry");
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3 && img.channels != 1) throw DimensionError("PPM export needs 1 or 3 channels");
  auto out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> buf(img.plane() * 3);
  for (std::size_t i = 0; i < img.plane(); ++i)
    for (int c = 0; c < 3; ++c) buf[i * 3 + c] = to_byte(img.data[(img.channels == 3 ? c : 0) * img.plane() + i]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  int w = 0, h = 0, maxval = 0;
  read_header(in, "P6", w, h, maxval);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw FormatError("truncated PPM data in " + path.string());
  }
  Image img(3, h, w);
  for (std::size_t i = 0; i < img.plane(); ++i)
    for (int c = 0; c < 3; ++c) img.data[c * img.plane() + i] = buf[i * 3 + c] / 255.0;
  return img;
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  auto out = open_out(path);
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<std::uint8_t> buf(mask.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = mask.data[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Mask read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  int w = 0, h = 0, maxval = 0;
  read_header(in, "P5", w, h, maxval);
  Mask m(h, w);
  std::vector<std::uint8_t> buf(m.data.size());
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw FormatError("truncated PGM data in " + path.string());
  }
  for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] >= 128 ? 1 : 0;
  return m;
}

Image hstack(const std::vector<Image>& images) {
  if (images.empty()) return {};
  const int gutter = 2;
  const int h = images.front().height;
  int w = 0;
  for (const auto& im : images) {
    if (im.height != h || im.channels != 3) throw DimensionError("hstack needs equal-height RGB images");
    w += im.width;
  }
  w += gutter * (static_cast<int>(images.size()) - 1);
  Image out(3, h, w, 1.0);
  int x0 = 0;
  for (const auto& im : images) {
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < im.width; ++x) out.at(c, y, x0 + x) = im.at(c, y, x);
    x0 += im.width + gutter;
  }
  return out;
}

template <typename T>
nn::Tensor<T> to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw DimensionError("to_tensor: no images");
  const Image& f = *images.front();
  std::vector<T> v;
  v.reserve(images.size() * f.data.size());
  for (const Image* im : images) {
    if (!im->same_shape(f)) throw DimensionError("to_tensor: images differ in shape");
    v.insert(v.end(), im->data.begin(), im->data.end());
  }
  return nn::Tensor<T>({static_cast<int>(images.size()), f.channels, f.height, f.width},
                       std::move(v));
}

template <typename T>
nn::Tensor<T> mask_tensor(const Mask& mask) {
  return nn::Tensor<T>({1, 1, mask.height, mask.width},
                       std::vector<T>(mask.data.begin(), mask.data.end()));
}

template <typename T>
Image from_tensor(const nn::Tensor<T>& t, int n) {
  if (t.ndim() != 4) throw DimensionError("from_tensor expects [N,C,H,W]");
  if (n < 0 || n >= t.dim(0)) throw IndexError("from_tensor: sample index out of range");
  Image img(t.dim(1), t.dim(2), t.dim(3));
  const auto v = t.values();
  std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(n * img.data.size()), img.data.size(),
              img.data.begin());
  return img;
}

template nn::Tensor<float> to_tensor(const std::vector<const Image*>&);
template nn::Tensor<double> to_tensor(const std::vector<const Image*>&);
template nn::Tensor<float> mask_tensor(const Mask&);
template nn::Tensor<double> mask_tensor(const Mask&);
template Image from_tensor(const nn::Tensor<float>&, int);
template Image from_tensor(const nn::Tensor<double>&, int);

}  // namespace sald
