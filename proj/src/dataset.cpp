#include "dot/dataset.hpp"

#include <fstream>
#include <sstream>

#include "dot/error.hpp"
#include "dot/parallel.hpp"
#include "json.hpp"

namespace dot {

namespace {

using nlohmann::json;

LoadError malformed(const std::string& what) {
  return LoadError(LoadError::Kind::kMalformedJson, what);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::kMissingFile, "missing file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw malformed("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::array<double, 16> parse_matrix(const json& m) {
  if (!m.is_array() || m.size() != 4) throw malformed("transform_matrix must be 4x4");
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r) {
    if (!m[r].is_array() || m[r].size() != 4) throw malformed("transform_matrix must be 4x4");
    for (int c = 0; c < 4; ++c) {
      if (!m[r][c].is_number()) throw malformed("transform_matrix entries must be numbers");
      out[r * 4 + c] = m[r][c].get<double>();
    }
  }
  return out;
}

struct Transforms {
  double camera_angle_x = 0.0;
  int width = 0;  // 0 when the JSON does not say
  int height = 0;
  std::vector<std::pair<std::string, std::array<double, 16>>> frames;
};

Transforms parse_transforms(const json& j) {
  Transforms t;
  try {
    if (!j.is_object() || !j.contains("camera_angle_x") || !j["camera_angle_x"].is_number()) {
      throw malformed("transforms JSON needs a numeric camera_angle_x");
    }
    t.camera_angle_x = j["camera_angle_x"].get<double>();
    if (j.contains("w")) t.width = j["w"].get<int>();
    if (j.contains("h")) t.height = j["h"].get<int>();
    if (!j.contains("frames") || !j["frames"].is_array()) throw malformed("transforms JSON needs frames[]");
    for (const json& f : j["frames"]) {
      if (!f.is_object() || !f.contains("transform_matrix")) {
        throw malformed("frame without transform_matrix");
      }
      std::string file = f.contains("file_path") ? f["file_path"].get<std::string>() : "";
      t.frames.emplace_back(std::move(file), parse_matrix(f["transform_matrix"]));
    }
  } catch (const json::exception& e) {
    throw malformed(std::string("malformed transforms JSON: ") + e.what());
  }
  return t;
}

std::filesystem::path resolve_image(const std::filesystem::path& dir, const std::string& file) {
  std::filesystem::path p = dir / file;
  if (std::filesystem::exists(p)) return p;
  std::filesystem::path with_ext = p;
  with_ext += ".png";
  if (std::filesystem::exists(with_ext)) return with_ext;
  throw LoadError(LoadError::Kind::kMissingFile, "missing image " + p.string());
}

Image box_downscale(const Image& in, int factor) {
  if (factor <= 1) return in;
  Image out(in.width / factor, in.height / factor);
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) acc += in.at(x * factor + dx, y * factor + dy, c);
        }
        out.at(x, y, c) = static_cast<float>(acc * norm);
      }
    }
  }
  return out;
}

}  // namespace

RayDataset RayDataset::from_views(std::span<const View> views) {
  RayDataset out;
  std::size_t total = 0;
  for (const View& v : views) total += static_cast<std::size_t>(v.image.width) * v.image.height;
  out.rays.reserve(total);
  out.targets.reserve(total);
  for (const View& v : views) {
    if (v.camera.width != v.image.width || v.camera.height != v.image.height) {
      throw InputError("view image size does not match its camera");
    }
    for (int y = 0; y < v.image.height; ++y) {
      for (int x = 0; x < v.image.width; ++x) {
        out.rays.push_back(v.camera.pixel_ray(x, y));
        out.targets.push_back(v.image.rgb(x, y));
      }
    }
  }
  return out;
}

std::vector<View> load_nerf_synthetic(const std::filesystem::path& dir, const std::string& split,
                                      const NerfLoadOptions& options) {
  const std::filesystem::path path = dir / ("transforms_" + split + ".json");
  const Transforms t = parse_transforms(read_json(path));
  if (options.downscale < 1) throw ConfigError("downscale must be at least 1");
  std::size_t count = t.frames.size();
  if (options.max_views > 0) count = std::min<std::size_t>(count, options.max_views);

  std::vector<View> views(count);
  parallel_for(count, default_worker_count(), [&](std::size_t i) {
    const RgbaImage rgba = read_png(resolve_image(dir, t.frames[i].first));
    if ((t.width && rgba.width != t.width) || (t.height && rgba.height != t.height)) {
      throw LoadError(LoadError::Kind::kImageSize,
                      "image " + t.frames[i].first + " does not match the declared w/h");
    }
    View& v = views[i];
    v.image = box_downscale(composite_over(rgba, options.background), options.downscale);
    v.camera.width = v.image.width;
    v.camera.height = v.image.height;
    v.camera.focal = Camera::focal_from_angle(rgba.width, t.camera_angle_x) / options.downscale;
    v.camera.cam_to_world = t.frames[i].second;
  });
  for (const View& v : views) {
    if (v.image.width != views.front().image.width || v.image.height != views.front().image.height) {
      throw LoadError(LoadError::Kind::kImageSize, "frames of " + path.string() + " differ in size");
    }
    v.camera.validate();
  }
  return views;
}

std::vector<Camera> load_cameras_json(const std::filesystem::path& path, int default_width,
                                      int default_height) {
  const Transforms t = parse_transforms(read_json(path));
  const int w = t.width ? t.width : default_width;
  const int h = t.height ? t.height : default_height;
  std::vector<Camera> out;
  for (const auto& frame : t.frames) {
    Camera cam;
    cam.width = w;
    cam.height = h;
    cam.focal = Camera::focal_from_angle(w, t.camera_angle_x);
    cam.cam_to_world = frame.second;
    cam.validate();
    out.push_back(cam);
  }
  return out;
}

}  // namespace dot
