#include "dmsm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dmsm {

double RealImage::max() const {
  if (data.empty()) return 0.0;
  return *std::max_element(data.begin(), data.end());
}

RealImage magnitude(const ComplexImage& x) {
  if (x.coils() != 1) throw std::invalid_argument("magnitude: expected a single-coil image");
  RealImage m(x.height(), x.width());
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = std::abs(x[i]);
  return m;
}

RealImage abs_error(const ComplexImage& x, const ComplexImage& ref) {
  if (!x.same_shape(ref)) throw std::invalid_argument("abs_error: shape mismatch");
  RealImage e(x.height(), x.width());
  for (std::size_t i = 0; i < e.size(); ++i) e.data[i] = std::abs(std::abs(x[i]) - std::abs(ref[i]));
  return e;
}

namespace {

void require_same(const RealImage& a, const RealImage& b, const char* what) {
  if (!a.same_shape(b) || a.data.empty())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    s += w[i];
  }
  for (auto& v : w) v /= s;
  return w;
}

// Separable 'valid' filtering.
RealImage filter_valid(const RealImage& img, const std::vector<double>& w) {
  const int k = static_cast<int>(w.size());
  const int oh = img.height - k + 1;
  const int ow = img.width - k + 1;
  RealImage tmp(img.height, ow);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += w[j] * img(r, c + j);
      tmp(r, c) = s;
    }
  RealImage out(oh, ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += w[j] * tmp(r + j, c);
      out(r, c) = s;
    }
  return out;
}

}  // namespace

double psnr(const RealImage& x, const RealImage& ref, std::optional<double> data_range) {
  require_same(x, ref, "psnr");
  const double range = data_range.value_or(ref.max());
  if (!(range > 0.0)) throw std::invalid_argument("psnr: data range must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data[i] - ref.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

double psnr(const ComplexImage& x, const ComplexImage& ref, std::optional<double> data_range) {
  return psnr(magnitude(x), magnitude(ref), data_range);
}

double ssim(const RealImage& x, const RealImage& ref, const SsimOptions& o) {
  require_same(x, ref, "ssim");
  if (x.height < o.window || x.width < o.window)
    throw std::invalid_argument("ssim: image smaller than the window");
  const double range = o.data_range.value_or(ref.max());
  if (!(range > 0.0)) throw std::invalid_argument("ssim: data range must be positive");
  const double c1 = (o.k1 * range) * (o.k1 * range);
  const double c2 = (o.k2 * range) * (o.k2 * range);
  const auto w = gaussian_window(o.window, o.sigma);

  RealImage xx(x.height, x.width), yy(x.height, x.width), xy(x.height, x.width);
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx.data[i] = x.data[i] * x.data[i];
    yy.data[i] = ref.data[i] * ref.data[i];
    xy.data[i] = x.data[i] * ref.data[i];
  }
  const RealImage mx = filter_valid(x, w);
  const RealImage my = filter_valid(ref, w);
  const RealImage sxx = filter_valid(xx, w);
  const RealImage syy = filter_valid(yy, w);
  const RealImage sxy = filter_valid(xy, w);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double ux = mx.data[i];
    const double uy = my.data[i];
    const double vx = sxx.data[i] - ux * ux;
    const double vy = syy.data[i] - uy * uy;
    const double cov = sxy.data[i] - ux * uy;
    acc += ((2 * ux * uy + c1) * (2 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return acc / static_cast<double>(mx.size());
}

double ssim(const ComplexImage& x, const ComplexImage& ref, const SsimOptions& opts) {
  return ssim(magnitude(x), magnitude(ref), opts);
}

double mae(const RealImage& x, const RealImage& ref) {
  require_same(x, ref, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x.data[i] - ref.data[i]);
  return acc / static_cast<double>(x.size());
}

double mae(const ComplexImage& x, const ComplexImage& ref) { return mae(magnitude(x), magnitude(ref)); }

double pcc(const RealImage& a, const RealImage& b, const std::vector<bool>* foreground) {
  require_same(a, b, "pcc");
  if (foreground && foreground->size() != a.size())
    throw std::invalid_argument("pcc: foreground mask shape mismatch");
  double n = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (foreground && !(*foreground)[i]) continue;
    n += 1.0;
    sa += a.data[i];
    sb += b.data[i];
  }
  if (n < 2.0) throw std::invalid_argument("pcc: fewer than two pixels selected");
  const double ma = sa / n;
  const double mb = sb / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (foreground && !(*foreground)[i]) continue;
    const double da = a.data[i] - ma;
    const double db = b.data[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0)
    throw std::invalid_argument("pcc: correlation undefined for a zero-variance map");
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

std::vector<bool> foreground_mask(const RealImage& ref, double fraction) {
  const double thr = fraction * ref.max();
  std::vector<bool> fg(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) fg[i] = ref.data[i] > thr;
  return fg;
}

Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  if (v.empty()) return a;
  double s = 0.0;
  for (double x : v) s += x;
  a.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double q = 0.0;
    for (double x : v) q += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(q / static_cast<double>(v.size() - 1));
  }
  return a;
}

void MetricReport::finalize() {
  std::vector<double> p, s, m, c;
  for (const auto& sl : slices) {
    p.push_back(sl.psnr_db);
    s.push_back(sl.ssim);
    m.push_back(sl.mae);
    if (sl.pcc) c.push_back(*sl.pcc);
  }
  psnr_db = aggregate(p);
  ssim = aggregate(s);
  mae = aggregate(m);
  pcc.reset();
  if (!c.empty()) pcc = aggregate(c);
}

SliceMetrics evaluate_slice(const std::string& id, const ComplexImage& recon,
                            const ComplexImage& ref, const RealImage* uncertainty,
                            double foreground_fraction) {
  RealImage r = magnitude(recon);
  RealImage g = magnitude(ref);
  const double scale = g.max();
  if (!(scale > 0.0)) throw std::invalid_argument("evaluate_slice: reference is all zero");
  for (auto& v : r.data) v /= scale;
  for (auto& v : g.data) v /= scale;
  SliceMetrics m;
  m.id = id;
  m.psnr_db = psnr(r, g, 1.0);
  m.ssim = ssim(r, g, SsimOptions{.data_range = 1.0});
  m.mae = mae(r, g);
  if (uncertainty) {
    RealImage err(r.height, r.width);
    for (std::size_t i = 0; i < err.size(); ++i) err.data[i] = std::abs(r.data[i] - g.data[i]);
    const auto fg = foreground_mask(g, foreground_fraction);
    m.pcc = pcc(*uncertainty, err, foreground_fraction > 0.0 ? &fg : nullptr);
  }
  return m;
}

}  // namespace dmsm
