#include "dmsm/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmsm/checkpoint.hpp"
#include "dmsm/random.hpp"

namespace dmsm {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Ellipse {
  double value, a, b, x0, y0, phi_deg;
};

// Modified Shepp-Logan (Toft) parameters.
constexpr Ellipse kSheppLogan[] = {
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
    {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
    {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},       {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
    {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},     {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
    {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},   {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
};

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_bytes(const fs::path& p, const void* data, std::size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + p.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw DatasetError("write failed for " + p.string());
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + p.string());
  return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DatasetError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    throw DatasetError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

json mask_spec_json(const MaskSpec& m) { return {{"acceleration", m.acceleration}, {"acs_lines", m.acs_lines}}; }

}  // namespace

ComplexImage make_phantom(int height, int width, std::uint64_t seed) {
  if (height < 16 || width < 16) throw std::invalid_argument("make_phantom: sides must be >= 16");
  Rng rng(derive_seed(seed, 0x5048414e));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  std::vector<Ellipse> ells(std::begin(kSheppLogan), std::end(kSheppLogan));
  const double scale = uni(0.8, 0.95);
  const double rot = uni(-15.0, 15.0);
  for (std::size_t i = 0; i < ells.size(); ++i) {
    auto& e = ells[i];
    if (i >= 2) {
      e.value *= uni(0.5, 1.6);
      e.a *= uni(0.8, 1.2);
      e.b *= uni(0.8, 1.2);
      e.x0 += uni(-0.04, 0.04);
      e.y0 += uni(-0.04, 0.04);
      e.phi_deg += uni(-10.0, 10.0);
    }
  }
  const int extra = std::uniform_int_distribution<int>(2, 4)(rng);
  for (int k = 0; k < extra; ++k) {
    const double r = uni(0.0, 0.45);
    const double th = uni(0.0, 2.0 * std::numbers::pi);
    ells.push_back({uni(-0.15, 0.3), uni(0.03, 0.12), uni(0.03, 0.12), r * std::cos(th), 0.8 * r * std::sin(th),
                    uni(0.0, 180.0)});
  }
  std::array<double, 4> ph{};
  for (auto& c : ph) c = uni(-0.5, 0.5);

  const double cr = std::cos(rot * std::numbers::pi / 180.0);
  const double sr = std::sin(rot * std::numbers::pi / 180.0);
  std::vector<double> mag(static_cast<std::size_t>(height) * width, 0.0);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const double xs = (2.0 * c + 1.0) / width - 1.0;
      const double ys = 1.0 - (2.0 * r + 1.0) / height;
      const double x = (cr * xs + sr * ys) / scale;
      const double y = (-sr * xs + cr * ys) / scale;
      double v = 0.0;
      for (const auto& e : ells) {
        const double p = e.phi_deg * std::numbers::pi / 180.0;
        const double dx = x - e.x0;
        const double dy = y - e.y0;
        const double xr = dx * std::cos(p) + dy * std::sin(p);
        const double yr = -dx * std::sin(p) + dy * std::cos(p);
        if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0) v += e.value;
      }
      mag[static_cast<std::size_t>(r) * width + c] = std::max(0.0, v);
    }
  const double peak = *std::max_element(mag.begin(), mag.end());
  ComplexImage img(1, height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const double x = (2.0 * c + 1.0) / width - 1.0;
      const double y = 1.0 - (2.0 * r + 1.0) / height;
      const double phase = 0.5 * std::numbers::pi * (ph[0] * x + ph[1] * y + ph[2] * x * y + ph[3] * (x * x - y * y));
      const double m = std::clamp(peak > 0.0 ? mag[static_cast<std::size_t>(r) * width + c] / peak : 0.0, 0.0, 1.0);
      img(0, r, c) = std::polar(m, phase);
    }
  return img;
}

CoilSensitivities make_coil_maps(int height, int width, int n_coils) {
  if (n_coils < 1) throw std::invalid_argument("make_coil_maps: need at least one coil");
  ComplexImage maps(n_coils, height, width);
  if (n_coils == 1) {
    for (auto& v : maps.data()) v = 1.0;
    return {maps};
  }
  const double s = 0.9;
  for (int k = 0; k < n_coils; ++k) {
    const double th = 2.0 * std::numbers::pi * k / n_coils;
    const double cx = 1.2 * std::cos(th);
    const double cy = 1.2 * std::sin(th);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        const double x = (2.0 * c + 1.0) / width - 1.0;
        const double y = 1.0 - (2.0 * r + 1.0) / height;
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double phase = th + 0.5 * (x * std::cos(th) + y * std::sin(th));
        maps(k, r, c) = std::polar(std::exp(-d2 / (2.0 * s * s)), phase);
      }
  }
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      double ss = 0.0;
      for (int k = 0; k < n_coils; ++k) ss += std::norm(maps(k, r, c));
      const double inv = 1.0 / std::sqrt(ss);
      for (int k = 0; k < n_coils; ++k) maps(k, r, c) *= inv;
    }
  return {maps};
}

ComplexImage quantize_complex64(const ComplexImage& x) {
  ComplexImage q = x;
  for (auto& v : q.data()) v = cplx(static_cast<float>(v.real()), static_cast<float>(v.imag()));
  return q;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DatasetError("unknown split '" + s + "'");
}

std::string mask_key(double acceleration) {
  std::ostringstream os;
  os << 'R' << acceleration;
  return os.str();
}

fs::path sidecar_path(const fs::path& raw) {
  auto p = raw;
  p.replace_extension(".meta.json");
  return p;
}

void write_complex64(const fs::path& raw, const ComplexImage& x) {
  std::vector<float> buf;
  buf.reserve(2 * x.size());
  for (const auto& v : x.data()) {
    buf.push_back(static_cast<float>(v.real()));
    buf.push_back(static_cast<float>(v.imag()));
  }
  const std::size_t bytes = buf.size() * sizeof(float);
  write_bytes(raw, buf.data(), bytes);
  write_json(sidecar_path(raw), {{"version", kDatasetVersion},
                                 {"shape", {x.coils(), x.height(), x.width()}},
                                 {"dtype", "complex64"},
                                 {"byte_order", "little"},
                                 {"fnv1a64", hex64(fnv1a64(buf.data(), bytes))}});
}

ComplexImage read_complex64(const fs::path& raw) {
  const json meta = read_json(sidecar_path(raw));
  try {
    if (meta.at("version").get<int>() != kDatasetVersion) throw DatasetError("unsupported array version in " + raw.string());
    if (meta.at("dtype") != "complex64" || meta.at("byte_order") != "little")
      throw DatasetError("unsupported dtype/byte order in " + raw.string());
    const auto shape = meta.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) throw DatasetError("bad shape in " + raw.string());
    const auto bytes = read_bytes(raw);
    const std::size_t n = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
    if (bytes.size() != n * 2 * sizeof(float))
      throw DatasetError("size mismatch in " + raw.string() + ": " + std::to_string(bytes.size()) + " bytes for shape " +
                         meta.at("shape").dump());
    if (hex64(fnv1a64(bytes.data(), bytes.size())) != meta.at("fnv1a64").get<std::string>())
      throw DatasetError("checksum mismatch in " + raw.string());
    std::vector<float> buf(2 * n);
    std::memcpy(buf.data(), bytes.data(), bytes.size());
    ComplexImage x(shape[0], shape[1], shape[2]);
    for (std::size_t i = 0; i < n; ++i) x[i] = cplx(buf[2 * i], buf[2 * i + 1]);
    return x;
  } catch (const DatasetError&) {
    throw;
  } catch (const std::exception& e) {
    throw DatasetError("malformed sidecar for " + raw.string() + ": " + e.what());
  }
}

void write_mask(const fs::path& raw, const SamplingMask& m, std::uint64_t seed) {
  const auto g = m.grid();
  write_bytes(raw, g.data(), g.size());
  const auto& a = m.acs();
  write_json(sidecar_path(raw), {{"version", kDatasetVersion},
                                 {"shape", {m.height(), m.width()}},
                                 {"dtype", "uint8"},
                                 {"acceleration", m.nominal_acceleration()},
                                 {"acs", {a.row0, a.col0, a.rows, a.cols}},
                                 {"seed", seed},
                                 {"fnv1a64", hex64(fnv1a64(g.data(), g.size()))}});
}

SamplingMask read_mask(const fs::path& raw) {
  const json meta = read_json(sidecar_path(raw));
  try {
    const auto shape = meta.at("shape").get<std::vector<int>>();
    const auto bytes = read_bytes(raw);
    if (shape.size() != 2 || bytes.size() != static_cast<std::size_t>(shape[0]) * shape[1])
      throw DatasetError("size mismatch in " + raw.string());
    if (hex64(fnv1a64(bytes.data(), bytes.size())) != meta.at("fnv1a64").get<std::string>())
      throw DatasetError("checksum mismatch in " + raw.string());
    const auto acs = meta.at("acs").get<std::vector<int>>();
    std::vector<std::uint8_t> grid(bytes.begin(), bytes.end());
    SamplingMask m(shape[0], shape[1], std::move(grid), Rect{acs.at(0), acs.at(1), acs.at(2), acs.at(3)},
                   meta.at("acceleration").get<double>());
    m.validate();
    return m;
  } catch (const DatasetError&) {
    throw;
  } catch (const std::exception& e) {
    throw DatasetError("invalid mask " + raw.string() + ": " + e.what());
  }
}

std::uint64_t slice_mask_seed(std::uint64_t dataset_seed, std::size_t slice_index, double acceleration) {
  return derive_seed(dataset_seed, 0x4d41534b + static_cast<std::uint64_t>(std::llround(acceleration * 1000.0)),
                     slice_index);
}

std::vector<std::string> DatasetManifest::ids(Split split) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e.id);
  return out;
}

const ManifestEntry& DatasetManifest::entry(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw DatasetError("unknown slice id '" + id + "'");
}

void DatasetManifest::validate() const {
  std::map<std::string, int> seen;
  for (const auto& e : entries)
    if (seen[e.id]++) throw DatasetError("slice id '" + e.id + "' appears more than once");
  for (const auto& e : entries) {
    for (const auto& f : {e.image_file, e.coil_file})
      if (!fs::exists(root / f)) throw DatasetError("missing file " + (root / f).string());
    for (const auto& [k, f] : e.mask_files)
      if (!fs::exists(root / f)) throw DatasetError("missing mask " + (root / f).string());
  }
}

DatasetManifest build_dataset(const DatasetSpec& spec, const fs::path& out_dir, bool overwrite) {
  if (spec.n_train < 0 || spec.n_val < 0 || spec.n_test < 0) throw std::invalid_argument("build_dataset: negative split size");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!overwrite) throw DatasetError("refusing to overwrite non-empty directory " + out_dir.string());
    fs::remove(out_dir / "manifest.json");
    fs::remove_all(out_dir / "slices");
    fs::remove_all(out_dir / "masks");
  }
  fs::create_directories(out_dir / "slices");
  fs::create_directories(out_dir / "masks");

  DatasetManifest man;
  man.root = out_dir;
  man.height = spec.height;
  man.width = spec.width;
  man.n_coils = spec.n_coils;
  man.seed = spec.seed;
  man.masks = spec.masks;

  const CoilSensitivities coils{quantize_complex64(make_coil_maps(spec.height, spec.width, spec.n_coils).maps)};
  std::size_t index = 0;
  auto emit = [&](Split split, int count) {
    for (int i = 0; i < count; ++i, ++index) {
      std::ostringstream id;
      id << to_string(split) << '_' << std::setw(3) << std::setfill('0') << i;
      ManifestEntry e;
      e.id = id.str();
      e.split = split;
      e.image_file = "slices/" + e.id + ".img.raw";
      e.coil_file = "slices/" + e.id + ".coil.raw";
      write_complex64(out_dir / e.image_file,
                      make_phantom(spec.height, spec.width, derive_seed(spec.seed, 0x494d47, index)));
      write_complex64(out_dir / e.coil_file, coils.maps);
      for (const auto& ms : spec.masks) {
        const auto seed = slice_mask_seed(spec.seed, index, ms.acceleration);
        const auto m = generate_vd_mask(spec.height, spec.width, ms.acceleration, ms.acs_lines, seed);
        const std::string f = "masks/" + e.id + "." + mask_key(ms.acceleration) + ".mask.raw";
        write_mask(out_dir / f, m, seed);
        e.mask_files[mask_key(ms.acceleration)] = f;
      }
      man.entries.push_back(std::move(e));
    }
  };
  emit(Split::train, spec.n_train);
  emit(Split::val, spec.n_val);
  emit(Split::test, spec.n_test);

  json entries = json::array();
  for (const auto& e : man.entries)
    entries.push_back({{"id", e.id}, {"split", to_string(e.split)}, {"image", e.image_file},
                       {"coils", e.coil_file}, {"masks", e.mask_files}});
  json masks = json::array();
  for (const auto& m : spec.masks) masks.push_back(mask_spec_json(m));
  const json j = {{"format", "dmsm-dataset"},
                  {"version", kDatasetVersion},
                  {"shape", {spec.height, spec.width}},
                  {"n_coils", spec.n_coils},
                  {"seed", spec.seed},
                  {"masks", masks},
                  {"entries", entries}};
  write_json(out_dir / "manifest.json.tmp", j);
  fs::rename(out_dir / "manifest.json.tmp", out_dir / "manifest.json");
  return man;
}

DatasetManifest load_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) throw DatasetError("no manifest.json in " + dir.string() + " (missing or incomplete dataset)");
  const json j = read_json(path);
  DatasetManifest m;
  m.root = dir;
  try {
    if (j.at("format") != "dmsm-dataset") throw DatasetError("not a dmsm dataset: " + dir.string());
    m.version = j.at("version");
    if (m.version != kDatasetVersion) throw DatasetError("unsupported dataset version " + std::to_string(m.version));
    m.height = j.at("shape").at(0);
    m.width = j.at("shape").at(1);
    m.n_coils = j.at("n_coils");
    m.seed = j.at("seed");
    for (const auto& ms : j.at("masks")) m.masks.push_back({ms.at("acceleration"), ms.at("acs_lines")});
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.id = e.at("id");
      me.split = split_from_string(e.at("split"));
      me.image_file = e.at("image");
      me.coil_file = e.at("coils");
      me.mask_files = e.at("masks").get<std::map<std::string, std::string>>();
      m.entries.push_back(std::move(me));
    }
  } catch (const DatasetError&) {
    throw;
  } catch (const std::exception& e) {
    throw DatasetError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

SliceData load_slice(const DatasetManifest& man, const std::string& id) {
  const auto& e = man.entry(id);
  SliceData s;
  s.id = id;
  s.image = read_complex64(man.root / e.image_file);
  s.coils.maps = read_complex64(man.root / e.coil_file);
  if (s.image.coils() != 1 || s.image.height() != man.height || s.image.width() != man.width)
    throw DatasetError("image shape mismatch for " + id);
  if (s.coils.coils() != man.n_coils || !s.coils.maps.same_grid(s.image))
    throw DatasetError("coil map shape mismatch for " + id);
  try {
    s.image.validate();
    s.coils.validate();
  } catch (const std::exception& ex) {
    throw DatasetError("invariant violated for " + id + ": " + ex.what());
  }
  return s;
}

SamplingMask load_mask(const DatasetManifest& man, const std::string& id, double acceleration) {
  const auto& e = man.entry(id);
  const auto it = e.mask_files.find(mask_key(acceleration));
  if (it == e.mask_files.end())
    throw DatasetError("no " + mask_key(acceleration) + " mask for slice " + id);
  auto m = read_mask(man.root / it->second);
  if (m.height() != man.height || m.width() != man.width) throw DatasetError("mask shape mismatch for " + id);
  return m;
}

KSpaceData full_kspace(const SliceData& s) {
  return {fft2c(apply_coils(s.image, s.coils)), SamplingMask::full(s.image.height(), s.image.width())};
}

}  // namespace dmsm
