#include "dot/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dot/error.hpp"

namespace dot {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw InputError("image dimensions differ");
}

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    taps[i] = std::exp(-x * x / (2.0 * kWindowSigma * kWindowSigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable 'valid' Gaussian filter of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h) {
  static const std::array<double, kWindow> taps = gaussian_taps();
  const int ow = w - kWindow + 1;
  const int oh = h - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * plane[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same_size(a, b);
  if (a.pixels.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.pixels.size());
}

double psnr(const Image& a, const Image& b) {
  const double e = mse(a, b);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(e);
}

double ssim(const Image& a, const Image& b) {
  require_same_size(a, b);
  if (a.width < kWindow || a.height < kWindow) throw InputError("images smaller than the SSIM window");
  const int w = a.width;
  const int h = a.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = a.pixels[i * 3 + c];
      pb[i] = b.pixels[i * 3 + c];
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, w, h);
    const auto mu_b = filter_valid(pb, w, h);
    const auto s_aa = filter_valid(aa, w, h);
    const auto s_bb = filter_valid(bb, w, h);
    const auto s_ab = filter_valid(ab, w, h);
    std::vector<double> map(mu_a.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = s_aa[i] - ma * ma;
      const double vb = s_bb[i] - mb * mb;
      const double cov = s_ab[i] - ma * mb;
      map[i] = ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
               ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    total += mean_of(map);
  }
  return total / 3.0;
}

std::string MetricReport::to_json() const {
  auto num = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "\"inf\"" : "\"-inf\"");
    if (std::isnan(v)) return std::string("null");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string out = "{\"psnr\":" + num(psnr) + ",\"psnr_quantized\":" + num(psnr_quantized) +
                    ",\"ssim\":" + num(ssim) + ",\"views\":[";
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (i) out += ",";
    out += "{\"psnr\":" + num(views[i].psnr) + ",\"psnr_quantized\":" +
           num(views[i].psnr_quantized) + ",\"ssim\":" + num(views[i].ssim) + "}";
  }
  out += "]}";
  return out;
}

MetricReport evaluate_views(const SparseOctree& tree, std::span<const View> views,
                            const Vec3& background, const RenderOptions& options, int workers,
                            bool with_ssim) {
  MetricReport report;
  if (views.empty()) {
    report.psnr = report.psnr_quantized = report.ssim = std::nan("");
    return report;
  }
  double sum_psnr = 0.0, sum_q = 0.0, sum_ssim = 0.0;
  for (const View& view : views) {
    const Image pred = render_image(tree, view.camera, background, options, workers);
    ViewMetrics m;
    m.psnr = psnr(pred, view.image);
    m.psnr_quantized = psnr(quantize_8bit(pred), quantize_8bit(view.image));
    const bool fits = pred.width >= kWindow && pred.height >= kWindow;
    m.ssim = with_ssim && fits ? ssim(pred, view.image) : std::nan("");
    sum_psnr += m.psnr;
    sum_q += m.psnr_quantized;
    sum_ssim += m.ssim;
    report.views.push_back(m);
  }
  const double n = static_cast<double>(views.size());
  report.psnr = sum_psnr / n;
  report.psnr_quantized = sum_q / n;
  report.ssim = sum_ssim / n;
  return report;
}

}  // namespace dot
