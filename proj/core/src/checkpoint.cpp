#include "rpnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace rpnet {

namespace {

constexpr char kMagic[6] = {'R', 'P', 'N', 'E', 'T', '1'};
constexpr uint16_t kVersion = 1;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& out, int32_t v) { put_u32(out, static_cast<uint32_t>(v)); }

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out += s;
}

struct Reader {
  const std::vector<char>& buf;
  size_t pos = 0;
  std::string context;

  void need(size_t n, const char* what) {
    if (pos + n > buf.size())
      throw DataError("truncated checkpoint: missing " + std::string(what) +
                      (context.empty() ? "" : " of " + context));
  }
  uint16_t u16(const char* what) {
    need(2, what);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 2;
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t u32(const char* what) {
    need(4, what);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 4;
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }
  int32_t i32(const char* what) { return static_cast<int32_t>(u32(what)); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const uint32_t n = u32(what);
    need(n, what);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u16(out, kVersion);
  put_i32(out, bundle.spec.input_height);
  put_i32(out, bundle.spec.input_width);
  put_i32(out, bundle.spec.input_channels);
  put_i32(out, bundle.spec.conv1_filters);
  put_i32(out, bundle.spec.conv2_filters);
  put_i32(out, bundle.spec.kernel_size);
  put_i32(out, bundle.spec.dense_units);
  put_i32(out, bundle.spec.num_classes);
  put_string(out, bundle.spec.profile_name);
  put_string(out, make_pipeline_descriptor(bundle.pipeline, bundle.encoded, bundle.adv_trained));
  put_u32(out, static_cast<uint32_t>(bundle.params.tensors.size()));
  for (const auto& [name, tensor] : bundle.params.tensors) {
    put_string(out, name);
    put_u32(out, static_cast<uint32_t>(tensor.shape.size()));
    for (int d : tensor.shape) put_u32(out, static_cast<uint32_t>(d));
    for (float v : tensor.data) put_f32(out, v);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint \"" + path + "\"");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed for checkpoint \"" + path + "\"");
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint \"" + path + "\"");
  std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf, 0, {}};
  r.need(sizeof(kMagic), "magic");
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("bad magic in checkpoint \"" + path + "\" (want RPNET1)");
  r.pos = sizeof(kMagic);
  const uint16_t version = r.u16("version");
  if (version != kVersion)
    throw DataError("checkpoint version " + std::to_string(version) + " unsupported (want " +
                    std::to_string(kVersion) + ")");

  ModelBundle bundle;
  bundle.spec.input_height = r.i32("input_height");
  bundle.spec.input_width = r.i32("input_width");
  bundle.spec.input_channels = r.i32("input_channels");
  bundle.spec.conv1_filters = r.i32("conv1_filters");
  bundle.spec.conv2_filters = r.i32("conv2_filters");
  bundle.spec.kernel_size = r.i32("kernel_size");
  bundle.spec.dense_units = r.i32("dense_units");
  bundle.spec.num_classes = r.i32("num_classes");
  bundle.spec.profile_name = r.str("profile name");
  const PipelineDescriptor desc = parse_pipeline_descriptor(r.str("pipeline descriptor"));
  bundle.pipeline = desc.pipeline;
  bundle.encoded = desc.encoded;
  bundle.adv_trained = desc.adv_trained;

  const uint32_t count = r.u32("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str("tensor name");
    r.context = "tensor \"" + name + "\"";
    const uint32_t rank = r.u32("rank");
    std::vector<int> shape;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(r.u32("dims")));
      numel *= shape.back();
    }
    Tensor t(shape);
    for (int64_t j = 0; j < numel; ++j) t[j] = r.f32("data");
    bundle.params.tensors[name] = std::move(t);
    r.context.clear();
  }
  if (r.pos != buf.size())
    throw DataError("checkpoint \"" + path + "\" has " + std::to_string(buf.size() - r.pos) +
                    " trailing bytes");
  return bundle;
}

}  // namespace rpnet
