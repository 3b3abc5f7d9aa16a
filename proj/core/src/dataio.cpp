#include "rpnet/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "rpnet/rng.hpp"

namespace rpnet {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803u;
constexpr uint32_t kLabelsMagic = 0x00000801u;

// gzread passes non-gzip bytes through unchanged, which is exactly the
// 0x1f8b-prefix detection the file contract asks for.
std::vector<uint8_t> read_file(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open \"" + path + "\"");
  std::vector<uint8_t> out;
  std::array<uint8_t, 1 << 16> chunk;
  int n;
  while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0)
    out.insert(out.end(), chunk.data(), chunk.data() + n);
  const bool bad = n < 0;
  gzclose(f);
  if (bad) throw DataError("read error in \"" + path + "\"");
  return out;
}

uint32_t read_be32(const std::vector<uint8_t>& buf, size_t pos, const std::string& path,
                   const char* field) {
  if (pos + 4 > buf.size())
    throw DataError("truncated \"" + path + "\": missing " + field);
  return (static_cast<uint32_t>(buf[pos]) << 24) | (static_cast<uint32_t>(buf[pos + 1]) << 16) |
         (static_cast<uint32_t>(buf[pos + 2]) << 8) | static_cast<uint32_t>(buf[pos + 3]);
}

void write_be32(std::ofstream& out, uint32_t v) {
  const uint8_t b[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                        static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::vector<uint8_t> ibuf = read_file(images_path);
  const uint32_t imagic = read_be32(ibuf, 0, images_path, "magic");
  if (imagic != kImagesMagic)
    throw DataError("bad magic in \"" + images_path + "\": got 0x" + [&] {
      char hex[16];
      std::snprintf(hex, sizeof(hex), "%08x", imagic);
      return std::string(hex);
    }() + ", want 0x00000803");
  const uint32_t n = read_be32(ibuf, 4, images_path, "count");
  const uint32_t rows = read_be32(ibuf, 8, images_path, "rows");
  const uint32_t cols = read_be32(ibuf, 12, images_path, "cols");
  const size_t need = 16 + static_cast<size_t>(n) * rows * cols;
  if (ibuf.size() < need)
    throw DataError("truncated \"" + images_path + "\": payload has " +
                    std::to_string(ibuf.size() - 16) + " bytes, header promises " +
                    std::to_string(static_cast<size_t>(n) * rows * cols));

  const std::vector<uint8_t> lbuf = read_file(labels_path);
  const uint32_t lmagic = read_be32(lbuf, 0, labels_path, "magic");
  if (lmagic != kLabelsMagic)
    throw DataError("bad magic in \"" + labels_path + "\": got 0x" + [&] {
      char hex[16];
      std::snprintf(hex, sizeof(hex), "%08x", lmagic);
      return std::string(hex);
    }() + ", want 0x00000801");
  const uint32_t ln = read_be32(lbuf, 4, labels_path, "count");
  if (ln != n)
    throw DataError("count mismatch: \"" + images_path + "\" has " + std::to_string(n) +
                    " images but \"" + labels_path + "\" has " + std::to_string(ln) + " labels");
  if (lbuf.size() < 8 + static_cast<size_t>(ln))
    throw DataError("truncated \"" + labels_path + "\": payload has " +
                    std::to_string(lbuf.size() - 8) + " bytes, header promises " +
                    std::to_string(ln));

  Dataset ds;
  ds.images = Tensor({static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)});
  const int64_t pixels = static_cast<int64_t>(n) * rows * cols;
  for (int64_t i = 0; i < pixels; ++i)
    ds.images[i] = static_cast<float>(ibuf[16 + static_cast<size_t>(i)]) / 255.0f;
  ds.labels.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint8_t l = lbuf[8 + i];
    if (l > 9)
      throw DataError("label " + std::to_string(l) + " out of range in \"" + labels_path + "\"");
    ds.labels[i] = l;
  }
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  const int n = ds.count();
  const int rows = ds.images.shape[2], cols = ds.images.shape[3];
  {
    std::ofstream out(images_path, std::ios::binary);
    if (!out) throw DataError("cannot write \"" + images_path + "\"");
    write_be32(out, kImagesMagic);
    write_be32(out, static_cast<uint32_t>(n));
    write_be32(out, static_cast<uint32_t>(rows));
    write_be32(out, static_cast<uint32_t>(cols));
    std::vector<uint8_t> bytes(static_cast<size_t>(ds.images.numel()));
    for (int64_t i = 0; i < ds.images.numel(); ++i)
      bytes[static_cast<size_t>(i)] =
          static_cast<uint8_t>(std::lround(std::clamp(ds.images[i], 0.0f, 1.0f) * 255.0f));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream out(labels_path, std::ios::binary);
  if (!out) throw DataError("cannot write \"" + labels_path + "\"");
  write_be32(out, kLabelsMagic);
  write_be32(out, static_cast<uint32_t>(n));
  std::vector<uint8_t> bytes(ds.labels.size());
  for (size_t i = 0; i < ds.labels.size(); ++i) bytes[i] = static_cast<uint8_t>(ds.labels[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

std::string find_idx_file(const std::string& dir, const std::string& base) {
  namespace fs = std::filesystem;
  const std::string bare = dir + "/" + base;
  if (fs::exists(bare)) return bare;
  if (fs::exists(bare + ".gz")) return bare + ".gz";
  throw DataError("missing \"" + base + "\" (or .gz) in " + dir);
}

}  // namespace

MnistData load_mnist_dir(const std::string& dir) {
  MnistData data;
  Dataset train = load_idx(find_idx_file(dir, "train-images-idx3-ubyte"),
                           find_idx_file(dir, "train-labels-idx1-ubyte"));
  data.test = load_idx(find_idx_file(dir, "t10k-images-idx3-ubyte"),
                       find_idx_file(dir, "t10k-labels-idx1-ubyte"));
  if (train.count() == 60000) {
    data.validation = slice(train, 55000, 5000);
    data.train = slice(train, 0, 55000);
  } else {
    data.train = std::move(train);
  }
  return data;
}

const std::vector<MnistFileInfo>& mnist_download_info() {
  static const std::vector<MnistFileInfo> info = {
      {"train-images-idx3-ubyte.gz", "https://ossci-datasets.s3.amazonaws.com/mnist/train-images-idx3-ubyte.gz", 9912422},
      {"train-labels-idx1-ubyte.gz", "https://ossci-datasets.s3.amazonaws.com/mnist/train-labels-idx1-ubyte.gz", 28881},
      {"t10k-images-idx3-ubyte.gz", "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-images-idx3-ubyte.gz", 1648877},
      {"t10k-labels-idx1-ubyte.gz", "https://ossci-datasets.s3.amazonaws.com/mnist/t10k-labels-idx1-ubyte.gz", 4542},
  };
  return info;
}

namespace {

Batch gather_rows(const Dataset& ds, const std::vector<int>& order, int start, int count) {
  const int64_t row = ds.images.numel() / ds.count();
  Batch b;
  b.images = Tensor({count, ds.images.shape[1], ds.images.shape[2], ds.images.shape[3]});
  b.labels.resize(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int src = order[static_cast<size_t>(start + i)];
    std::memcpy(b.images.data.data() + static_cast<int64_t>(i) * row,
                ds.images.data.data() + static_cast<int64_t>(src) * row,
                static_cast<size_t>(row) * sizeof(float));
    b.labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
  }
  return b;
}

}  // namespace

std::vector<Batch> make_batches(const Dataset& ds, int batch_size, uint64_t seed, bool shuffle) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1, got " + std::to_string(batch_size));
  const int n = ds.count();
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  if (shuffle) {
    Rng rng(mix_seed(seed, 0x626174636865ull));  // distinct stream per purpose
    for (int i = n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(i + 1))]);
  }
  std::vector<Batch> batches;
  for (int start = 0; start < n; start += batch_size)
    batches.push_back(gather_rows(ds, order, start, std::min(batch_size, n - start)));
  return batches;
}

Dataset subset(const Dataset& ds, int count, uint64_t seed) {
  const int n = ds.count();
  if (count > n)
    throw ConfigError("subset of " + std::to_string(count) + " from dataset of " + std::to_string(n));
  std::vector<int> order(static_cast<size_t>(n));
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 1000) throw DataError("subset: balanced sample not found in 1000 attempts");
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(mix_seed(seed, static_cast<uint64_t>(attempt)));
    for (int i = 0; i < count; ++i) {
      const int j = i + rng.uniform_int(n - i);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    if (count >= 1000) {
      std::array<int, 10> hist{};
      for (int i = 0; i < count; ++i) hist[static_cast<size_t>(ds.labels[static_cast<size_t>(order[static_cast<size_t>(i)])])]++;
      const double lo = 0.8 * count / 10.0, hi = 1.2 * count / 10.0;
      bool ok = true;
      for (int c : hist)
        if (c < lo || c > hi) ok = false;
      if (!ok) continue;
    }
    break;
  }
  Batch rows = gather_rows(ds, order, 0, count);
  Dataset out;
  out.images = std::move(rows.images);
  out.labels = std::move(rows.labels);
  return out;
}

Dataset slice(const Dataset& ds, int start, int count) {
  if (start < 0 || count < 0 || start + count > ds.count())
    throw ConfigError("slice [" + std::to_string(start) + "," + std::to_string(start + count) +
                      ") out of range for dataset of " + std::to_string(ds.count()));
  std::vector<int> order(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<size_t>(i)] = start + i;
  Batch rows = gather_rows(ds, order, 0, count);
  Dataset out;
  out.images = std::move(rows.images);
  out.labels = std::move(rows.labels);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic digits
// ---------------------------------------------------------------------------

namespace {

struct Pt {
  float x, y;
};
using Polyline = std::vector<Pt>;

Polyline arc(float cx, float cy, float rx, float ry, float deg0, float deg1, int segments = 20) {
  Polyline p;
  for (int i = 0; i <= segments; ++i) {
    const float a = (deg0 + (deg1 - deg0) * static_cast<float>(i) / segments) * 3.14159265f / 180.0f;
    p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return p;
}

// Glyphs in a unit box, y pointing down.
const std::vector<std::vector<Polyline>>& glyphs() {
  static const std::vector<std::vector<Polyline>> g = [] {
    std::vector<std::vector<Polyline>> v(10);
    v[0] = {arc(0.5f, 0.5f, 0.27f, 0.38f, 0, 360, 28)};
    v[1] = {{{0.5f, 0.12f}, {0.5f, 0.88f}}, {{0.34f, 0.3f}, {0.5f, 0.12f}}};
    v[2] = {arc(0.5f, 0.32f, 0.25f, 0.2f, 160, 372),
            {{0.73f, 0.44f}, {0.26f, 0.86f}},
            {{0.26f, 0.86f}, {0.78f, 0.86f}}};
    v[3] = {arc(0.47f, 0.3f, 0.24f, 0.18f, 150, 390), arc(0.47f, 0.68f, 0.26f, 0.21f, -30, 210)};
    v[4] = {{{0.62f, 0.1f}, {0.2f, 0.6f}}, {{0.2f, 0.6f}, {0.82f, 0.6f}}, {{0.62f, 0.1f}, {0.62f, 0.9f}}};
    v[5] = {{{0.72f, 0.12f}, {0.3f, 0.12f}},
            {{0.3f, 0.12f}, {0.28f, 0.45f}},
            arc(0.46f, 0.65f, 0.26f, 0.23f, -100, 130)};
    v[6] = {{{0.66f, 0.12f}, {0.45f, 0.22f}, {0.33f, 0.45f}, {0.3f, 0.68f}},
            arc(0.5f, 0.7f, 0.2f, 0.17f, 0, 360, 24)};
    v[7] = {{{0.2f, 0.14f}, {0.8f, 0.14f}}, {{0.8f, 0.14f}, {0.42f, 0.88f}}};
    v[8] = {arc(0.5f, 0.3f, 0.2f, 0.17f, 0, 360, 24), arc(0.5f, 0.69f, 0.24f, 0.2f, 0, 360, 24)};
    v[9] = {arc(0.5f, 0.32f, 0.2f, 0.18f, 0, 360, 24), {{0.7f, 0.32f}, {0.68f, 0.6f}, {0.6f, 0.88f}}};
    return v;
  }();
  return g;
}

float segment_distance(float px, float py, Pt a, Pt b) {
  const float dx = b.x - a.x, dy = b.y - a.y;
  const float len2 = dx * dx + dy * dy;
  float t = len2 > 0.0f ? ((px - a.x) * dx + (py - a.y) * dy) / len2 : 0.0f;
  t = std::clamp(t, 0.0f, 1.0f);
  const float ex = a.x + t * dx - px, ey = a.y + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

void render_digit(int digit, Rng& rng, float* out /* 28x28 */) {
  const float theta = rng.uniform(-0.22f, 0.22f);
  const float scale = rng.uniform(0.82f, 1.12f) * 20.0f;
  const float dx = 14.0f + rng.uniform(-2.2f, 2.2f);
  const float dy = 14.0f + rng.uniform(-2.2f, 2.2f);
  const float shear = rng.uniform(-0.18f, 0.18f);
  const float thick = rng.uniform(0.9f, 1.5f);
  const float ink = rng.uniform(0.82f, 1.0f);
  const float ct = std::cos(theta), st = std::sin(theta);

  auto map = [&](Pt p) -> Pt {
    const float gx = (p.x - 0.5f + shear * (0.5f - p.y)) * scale;
    const float gy = (p.y - 0.5f) * scale;
    return {ct * gx - st * gy + dx, st * gx + ct * gy + dy};
  };

  std::fill(out, out + 28 * 28, 0.0f);
  for (const Polyline& line : glyphs()[static_cast<size_t>(digit)]) {
    std::vector<Pt> pts(line.size());
    for (size_t i = 0; i < line.size(); ++i) pts[i] = map(line[i]);
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      const float margin = thick + 1.5f;
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(pts[i].x, pts[i + 1].x) - margin)));
      const int x1 = std::min(27, static_cast<int>(std::ceil(std::max(pts[i].x, pts[i + 1].x) + margin)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(pts[i].y, pts[i + 1].y) - margin)));
      const int y1 = std::min(27, static_cast<int>(std::ceil(std::max(pts[i].y, pts[i + 1].y) + margin)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const float d = segment_distance(static_cast<float>(x), static_cast<float>(y), pts[i], pts[i + 1]);
          const float v = std::clamp(thick + 0.5f - d, 0.0f, 1.0f) * ink;
          float& px = out[y * 28 + x];
          px = std::max(px, v);
        }
    }
  }
}

}  // namespace

Dataset make_synthetic_digits(int count, uint64_t seed) {
  Dataset ds;
  ds.images = Tensor({count, 1, 28, 28});
  ds.labels.resize(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int digit = i % 10;
    Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
    float* img = ds.images.data.data() + static_cast<int64_t>(i) * 28 * 28;
    render_digit(digit, rng, img);
    for (int p = 0; p < 28 * 28; ++p) {
      float v = img[p] + 0.02f * rng.normal();
      v = std::clamp(v, 0.0f, 1.0f);
      // byte-quantized so IDX round trips are exact
      img[p] = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
    }
    ds.labels[static_cast<size_t>(i)] = digit;
  }
  return ds;
}

}  // namespace rpnet
