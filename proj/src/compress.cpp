#include "dot/compress.hpp"

#include <algorithm>
#include <numeric>

#include "dot/error.hpp"

namespace dot {

namespace {

struct Box {
  std::size_t begin = 0;  // range into the shared index array
  std::size_t end = 0;
  std::size_t axis = 0;
  double range = 0.0;
};

void measure(Box& box, const std::vector<std::uint32_t>& index, std::span<const float> points,
             std::size_t dims) {
  box.range = 0.0;
  box.axis = 0;
  for (std::size_t d = 0; d < dims; ++d) {
    float lo = points[index[box.begin] * dims + d];
    float hi = lo;
    for (std::size_t i = box.begin + 1; i < box.end; ++i) {
      const float v = points[index[i] * dims + d];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double range = static_cast<double>(hi) - lo;
    if (range > box.range) {
      box.range = range;
      box.axis = d;
    }
  }
}

std::size_t index_bytes(std::size_t palette) {
  if (palette <= 256) return 1;
  if (palette <= 65536) return 2;
  return 4;
}

}  // namespace

MedianCutResult median_cut(std::span<const float> points, std::size_t dims, std::size_t palette) {
  if (dims == 0) throw InputError("median cut needs at least one dimension");
  if (points.size() % dims != 0) throw InputError("point buffer is not a multiple of dims");
  if (palette < 1) throw InputError("palette size must be at least 1");
  const std::size_t count = points.size() / dims;
  MedianCutResult out;
  out.dims = dims;
  if (count == 0) return out;
  palette = std::min(palette, count);

  std::vector<std::uint32_t> index(count);
  std::iota(index.begin(), index.end(), 0u);
  std::vector<Box> boxes(1);
  boxes[0].end = count;
  measure(boxes[0], index, points, dims);

  while (boxes.size() < palette) {
    // Widest box first; ties go to the earliest box.
    std::size_t pick = 0;
    for (std::size_t b = 1; b < boxes.size(); ++b) {
      if (boxes[b].range > boxes[pick].range) pick = b;
    }
    Box& box = boxes[pick];
    if (!(box.range > 0.0)) break;  // every box holds identical points
    const std::size_t axis = box.axis;
    auto key = [&](std::uint32_t i) { return points[i * dims + axis]; };
    std::stable_sort(index.begin() + box.begin, index.begin() + box.end,
                     [&](std::uint32_t a, std::uint32_t b) { return key(a) < key(b); });
    // The median, moved to the closest position where the value changes.
    const std::size_t mid = box.begin + (box.end - box.begin) / 2;
    std::size_t cut = box.end;
    for (std::size_t off = 0; off < box.end - box.begin; ++off) {
      const std::size_t up = mid + off;
      if (up > box.begin && up < box.end && key(index[up - 1]) != key(index[up])) {
        cut = up;
        break;
      }
      if (off <= mid && mid - off > box.begin && mid - off < box.end &&
          key(index[mid - off - 1]) != key(index[mid - off])) {
        cut = mid - off;
        break;
      }
    }
    Box right{cut, box.end, 0, 0.0};
    box.end = cut;
    measure(box, index, points, dims);
    measure(right, index, points, dims);
    boxes.push_back(right);
  }

  out.centroids.assign(boxes.size() * dims, 0.0);
  out.assignment.assign(count, 0);
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    double* c = out.centroids.data() + b * dims;
    for (std::size_t i = boxes[b].begin; i < boxes[b].end; ++i) {
      out.assignment[index[i]] = static_cast<std::uint32_t>(b);
      for (std::size_t d = 0; d < dims; ++d) c[d] += points[index[i] * dims + d];
    }
    const double n = static_cast<double>(boxes[b].end - boxes[b].begin);
    for (std::size_t d = 0; d < dims; ++d) c[d] /= n;
  }
  return out;
}

CompressionResult compress_tree(const SparseOctree& tree, std::size_t palette_size) {
  if (palette_size < 1) throw InputError("palette size must be at least 1");
  const std::vector<NodeId> leaves = tree.leaves();
  const std::size_t dims = 3 * static_cast<std::size_t>(tree.basis_count());
  std::vector<float> points;
  points.reserve(leaves.size() * dims);
  for (NodeId leaf : leaves) {
    const auto p = tree.payload(leaf);
    points.insert(points.end(), p.begin() + 1, p.end());
  }
  const MedianCutResult cut = median_cut(points, dims, palette_size);

  CompressionResult out{tree, {}, cut.assignment, 0, 0};
  out.codebook.resize(cut.centroids.size());
  std::transform(cut.centroids.begin(), cut.centroids.end(), out.codebook.begin(),
                 [](double v) { return static_cast<float>(v); });
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    auto p = out.tree.mutable_payload(leaves[i]);
    const float* c = out.codebook.data() + cut.assignment[i] * dims;
    std::copy_n(c, dims, p.begin() + 1);
  }
  out.sh_bytes_before = leaves.size() * dims * sizeof(float);
  out.sh_bytes_after = out.codebook.size() * sizeof(float) +
                       leaves.size() * index_bytes(cut.palette_size());
  return out;
}

}  // namespace dot
