#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dot/camera.hpp"
#include "dot/image.hpp"

namespace dot {

// One posed image: target colors already composited over the background.
struct View {
  Camera camera;
  Image image;
};

// Flattened training rays with their target colors, view by view, row-major.
struct RayDataset {
  std::vector<Ray> rays;
  std::vector<Vec3> targets;

  std::size_t size() const { return rays.size(); }
  static RayDataset from_views(std::span<const View> views);
};

struct NerfLoadOptions {
  int downscale = 1;  // integer box-filter factor applied to images and focal
  int max_views = 0;  // 0 keeps every frame
  Vec3 background{1.0, 1.0, 1.0};
};

// Reads <dir>/transforms_<split>.json and the referenced PNGs. Throws
// LoadError (missing file, malformed JSON, image size mismatch).
std::vector<View> load_nerf_synthetic(const std::filesystem::path& dir, const std::string& split,
                                      const NerfLoadOptions& options = {});

// Cameras from a transforms-style JSON (camera_angle_x, frames[].
// transform_matrix). Image size comes from "w"/"h" keys when present,
// else from the defaults.
std::vector<Camera> load_cameras_json(const std::filesystem::path& path, int default_width,
                                      int default_height);

}  // namespace dot
