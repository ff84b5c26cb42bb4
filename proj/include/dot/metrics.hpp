#pragma once

#include <span>
#include <string>
#include <vector>

#include "dot/dataset.hpp"
#include "dot/image.hpp"
#include "dot/octree.hpp"
#include "dot/render.hpp"

namespace dot {

double mse(const Image& a, const Image& b);
// -10 log10(MSE) on [0,1] images; +infinity when the images are identical.
double psnr(const Image& a, const Image& b);
// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5) and channels.
double ssim(const Image& a, const Image& b);

struct ViewMetrics {
  double psnr = 0.0;
  double psnr_quantized = 0.0;
  double ssim = 0.0;  // NaN when the view is smaller than the SSIM window
};

struct MetricReport {
  double psnr = 0.0;  // mean of per-view PSNR
  double psnr_quantized = 0.0;
  double ssim = 0.0;
  std::vector<ViewMetrics> views;

  std::string to_json() const;
};

MetricReport evaluate_views(const SparseOctree& tree, std::span<const View> views,
                            const Vec3& background, const RenderOptions& options = {},
                            int workers = 1, bool with_ssim = true);

}  // namespace dot
