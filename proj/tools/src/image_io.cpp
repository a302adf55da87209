#include "image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dmsm/checkpoint.hpp"
#include "dmsm/data.hpp"

namespace dmsm::cli {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_png(const std::filesystem::path& path, int w, int h, const std::vector<std::uint8_t>& px,
               const std::map<std::string, std::string>& text) {
  File f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::vector<png_text> chunks;
  for (const auto& [k, v] : text) {
    png_text t{};
    t.compression = PNG_TEXT_COMPRESSION_NONE;
    t.key = const_cast<char*>(k.c_str());
    t.text = const_cast<char*>(v.c_str());
    chunks.push_back(t);
  }
  if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
  png_write_info(png, info);
  for (int r = 0; r < h; ++r)
    png_write_row(png, const_cast<png_bytep>(px.data() + static_cast<std::size_t>(r) * w));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_gray_png(const std::filesystem::path& path, const RealImage& img, double lo, double hi,
                    const std::map<std::string, std::string>& extra_text) {
  std::vector<std::uint8_t> px(img.data.size(), 0);
  if (hi > lo)
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double v = std::clamp((img.data[i] - lo) / (hi - lo), 0.0, 1.0);
      px[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  auto text = extra_text;
  text["min"] = num(lo);
  text["max"] = num(hi);
  write_png(path, img.width, img.height, px, text);
}

void write_legend_png(const std::filesystem::path& path, double lo, double hi, const std::string& label) {
  const int w = 256, h = 16;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) px[static_cast<std::size_t>(r) * w + c] = static_cast<std::uint8_t>(c);
  write_png(path, w, h, px, {{"min", num(lo)}, {"max", num(hi)}, {"Title", label}});
}

GrayPng read_gray_png(const std::filesystem::path& path) {
  File f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot read " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng failed reading " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  GrayPng out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path.string() + " is not an 8-bit grayscale PNG");
  }
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int r = 0; r < out.height; ++r) png_read_row(png, out.pixels.data() + static_cast<std::size_t>(r) * out.width, nullptr);
  png_textp text = nullptr;
  int n = 0;
  png_get_text(png, info, &text, &n);
  for (int i = 0; i < n; ++i) out.text[text[i].key] = text[i].text;
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_float32(const std::filesystem::path& raw, const RealImage& img) {
  std::vector<float> buf(img.data.begin(), img.data.end());
  {
    std::ofstream out(raw, std::ios::binary);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("cannot write " + raw.string());
  }
  nlohmann::json meta{{"version", kDatasetVersion},
                      {"shape", {img.height, img.width}},
                      {"dtype", "float32"},
                      {"byte_order", "little"},
                      {"fnv1a64", hex64(fnv1a64(buf.data(), buf.size() * sizeof(float)))}};
  std::ofstream(sidecar_path(raw)) << meta.dump(2) << '\n';
}

RealImage read_float32(const std::filesystem::path& raw) {
  std::ifstream ms(sidecar_path(raw));
  if (!ms) throw std::runtime_error("missing sidecar for " + raw.string());
  const auto meta = nlohmann::json::parse(ms);
  if (meta.at("dtype") != "float32") throw std::runtime_error(raw.string() + ": expected float32");
  const int h = meta.at("shape").at(0), w = meta.at("shape").at(1);
  std::vector<float> buf(static_cast<std::size_t>(h) * w);
  std::ifstream in(raw, std::ios::binary);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in || in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(raw.string() + ": size mismatch");
  if (meta.at("fnv1a64").get<std::string>() != hex64(fnv1a64(buf.data(), buf.size() * sizeof(float))))
    throw std::runtime_error(raw.string() + ": checksum mismatch");
  RealImage img(h, w);
  std::copy(buf.begin(), buf.end(), img.data.begin());
  return img;
}

}  // namespace dmsm::cli
