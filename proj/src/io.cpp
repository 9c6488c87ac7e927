#include "visocc/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace visocc {

namespace fs = std::filesystem;

// ---- sha256 -----------------------------------------------------------------

namespace {

constexpr std::uint32_t kSha256K[64] = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
    0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
    0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
    0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
    0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

inline std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

}  // namespace

void Sha256::block(const std::uint8_t* p) {
  std::uint32_t w[64];
  for (int i = 0; i < 16; ++i)
    w[i] = std::uint32_t(p[4 * i]) << 24 | std::uint32_t(p[4 * i + 1]) << 16 |
           std::uint32_t(p[4 * i + 2]) << 8 | std::uint32_t(p[4 * i + 3]);
  for (int i = 16; i < 64; ++i) {
    const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
    const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
    w[i] = w[i - 16] + s0 + w[i - 7] + s1;
  }
  std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3];
  std::uint32_t e = h_[4], f = h_[5], g = h_[6], h = h_[7];
  for (int i = 0; i < 64; ++i) {
    const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
    const std::uint32_t ch = (e & f) ^ (~e & g);
    const std::uint32_t t1 = h + s1 + ch + kSha256K[i] + w[i];
    const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
    const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
    const std::uint32_t t2 = s0 + maj;
    h = g; g = f; f = e; e = d + t1;
    d = c; c = b; b = a; a = t1 + t2;
  }
  h_[0] += a; h_[1] += b; h_[2] += c; h_[3] += d;
  h_[4] += e; h_[5] += f; h_[6] += g; h_[7] += h;
}

void Sha256::update(const void* data, std::size_t len) {
  const std::uint8_t* p = static_cast<const std::uint8_t*>(data);
  total_ += len;
  while (len > 0) {
    const std::size_t take = std::min(len, sizeof(buf_) - buf_len_);
    std::memcpy(buf_ + buf_len_, p, take);
    buf_len_ += take;
    p += take;
    len -= take;
    if (buf_len_ == sizeof(buf_)) {
      block(buf_);
      buf_len_ = 0;
    }
  }
}

std::array<std::uint8_t, 32> Sha256::finish() {
  const std::uint64_t bits = total_ * 8;
  const std::uint8_t one = 0x80, zero = 0;
  update(&one, 1);
  while (buf_len_ != 56) update(&zero, 1);
  std::uint8_t len_be[8];
  for (int i = 0; i < 8; ++i) len_be[i] = std::uint8_t(bits >> (56 - 8 * i));
  update(len_be, 8);
  std::array<std::uint8_t, 32> out;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 4; ++j) out[std::size_t(4 * i + j)] = std::uint8_t(h_[i] >> (24 - 8 * j));
  return out;
}

std::string Sha256::hex(const std::array<std::uint8_t, 32>& digest) {
  static const char* kHex = "0123456789abcdef";
  std::string s(64, '0');
  for (std::size_t i = 0; i < 32; ++i) {
    s[2 * i] = kHex[digest[i] >> 4];
    s[2 * i + 1] = kHex[digest[i] & 0xf];
  }
  return s;
}

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return Sha256::hex(h.finish());
}

std::string sha256_file_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h.update(buf, std::size_t(in.gcount()));
  return Sha256::hex(h.finish());
}

// ---- little-endian byte stream helpers ---------------------------------------

namespace {

struct ByteWriter {
  std::string bytes;
  void u8(std::uint8_t v) { bytes.push_back(char(v)); }
  void u16(std::uint16_t v) { for (int i = 0; i < 2; ++i) u8(std::uint8_t(v >> (8 * i))); }
  void u32(std::uint32_t v) { for (int i = 0; i < 4; ++i) u8(std::uint8_t(v >> (8 * i))); }
  void u64(std::uint64_t v) { for (int i = 0; i < 8; ++i) u8(std::uint8_t(v >> (8 * i))); }
  void i64(std::int64_t v) { u64(std::uint64_t(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); }
};

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;
  const char* what;

  void need(std::size_t n) const {
    if (pos + n > bytes.size())
      throw std::runtime_error(std::string(what) + ": truncated file");
  }
  std::uint8_t u8() { need(1); return std::uint8_t(bytes[pos++]); }
  std::uint16_t u16() { std::uint16_t v = 0; for (int i = 0; i < 2; ++i) v |= std::uint16_t(u8()) << (8 * i); return v; }
  std::uint32_t u32() { std::uint32_t v = 0; for (int i = 0; i < 4; ++i) v |= std::uint32_t(u8()) << (8 * i); return v; }
  std::uint64_t u64() { std::uint64_t v = 0; for (int i = 0; i < 8; ++i) v |= std::uint64_t(u8()) << (8 * i); return v; }
  std::int64_t i64() { return std::int64_t(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) { need(n); std::string s = bytes.substr(pos, n); pos += n; return s; }
};

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

// Appends sha256(payload) and, on read, verifies and strips it.
void append_checksum(std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  const auto digest = h.finish();
  bytes.append(reinterpret_cast<const char*>(digest.data()), digest.size());
}

std::string verify_checksum(std::string bytes, const char* what) {
  if (bytes.size() < 32)
    throw std::runtime_error(std::string(what) + ": truncated file");
  const std::string payload = bytes.substr(0, bytes.size() - 32);
  Sha256 h;
  h.update(payload.data(), payload.size());
  const auto digest = h.finish();
  if (std::memcmp(digest.data(), bytes.data() + payload.size(), 32) != 0)
    throw std::runtime_error(std::string(what) + ": checksum mismatch");
  return payload;
}

}  // namespace

// ---- storage precision --------------------------------------------------------

void snap_to_storage(PointCloud& cloud) {
  auto snap = [](double v) { return double(float(v)); };
  cloud.sensor_origin = {snap(cloud.sensor_origin.x), snap(cloud.sensor_origin.y),
                         snap(cloud.sensor_origin.z)};
  for (Vec3& p : cloud.points) p = {snap(p.x), snap(p.y), snap(p.z)};
  for (double& v : cloud.intensities) v = snap(v);
}

void snap_to_storage(QuerySet& queries) {
  auto snap = [](double v) { return double(float(v)); };
  for (Vec3& p : queries.positions) p = {snap(p.x), snap(p.y), snap(p.z)};
  for (double& v : queries.intensity_target)
    if (v != kNoIntensity) v = snap(v);
}

// ---- scan files ----------------------------------------------------------------

void write_scan(const fs::path& stem, const PointCloud& cloud) {
  cloud.validate();
  ByteWriter payload;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    payload.f32(float(cloud.points[i].x));
    payload.f32(float(cloud.points[i].y));
    payload.f32(float(cloud.points[i].z));
    payload.f32(cloud.has_intensity() ? float(cloud.intensities[i]) : 0.0f);
  }
  write_file(fs::path(stem).concat(".bin"), payload.bytes);

  std::ostringstream meta;
  meta << "format = scan-meta-v1\n";
  meta << "point_count = " << cloud.size() << "\n";
  meta << "sensor_origin = " << format_double(cloud.sensor_origin.x) << " "
       << format_double(cloud.sensor_origin.y) << " "
       << format_double(cloud.sensor_origin.z) << "\n";
  meta << "has_intensity = " << (cloud.has_intensity() ? 1 : 0) << "\n";
  meta << "has_labels = " << (cloud.has_labels() ? 1 : 0) << "\n";
  write_file(fs::path(stem).concat(".meta"), meta.str());

  if (cloud.has_labels()) {
    ByteWriter labels;
    for (std::uint32_t l : cloud.labels) labels.u32(l);
    write_file(fs::path(stem).concat(".labels"), labels.bytes);
  }
}

PointCloud read_scan(const fs::path& stem) {
  const std::string payload = read_file(fs::path(stem).concat(".bin"));
  if (payload.empty()) throw std::runtime_error("scan: empty scan");
  if (payload.size() % 16 != 0) throw std::runtime_error("scan: truncated record");
  const std::size_t n = payload.size() / 16;

  // Sidecar header.
  const std::string meta_text = read_file(fs::path(stem).concat(".meta"));
  std::map<std::string, std::string> meta;
  std::istringstream lines(meta_text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (meta["format"] != "scan-meta-v1")
    throw std::runtime_error("scan: unsupported sidecar format");
  if (std::stoull(meta.at("point_count")) != n)
    throw std::runtime_error("scan: point count mismatch between payload and sidecar");
  const bool has_intensity = meta.at("has_intensity") == "1";
  const bool has_labels = meta.at("has_labels") == "1";

  Vec3 origin;
  {
    std::istringstream os(meta.at("sensor_origin"));
    if (!(os >> origin.x >> origin.y >> origin.z))
      throw std::runtime_error("scan: bad sensor_origin in sidecar");
  }

  ByteReader r{payload, 0, "scan"};
  std::vector<Vec3> pts(n);
  std::vector<double> intens;
  if (has_intensity) intens.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i].x = double(r.f32());
    pts[i].y = double(r.f32());
    pts[i].z = double(r.f32());
    const float it = r.f32();
    if (has_intensity) intens[i] = double(it);
  }

  std::vector<std::uint32_t> labels;
  if (has_labels) {
    const std::string lb = read_file(fs::path(stem).concat(".labels"));
    if (lb.size() != n * 4)
      throw std::runtime_error("scan: label file length mismatch");
    ByteReader lr{lb, 0, "scan labels"};
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = lr.u32();
  }
  return PointCloud::make(origin, std::move(pts), std::move(intens), std::move(labels));
}

// ---- query files ----------------------------------------------------------------

namespace {
constexpr std::uint32_t kQueryMagic = 0x59525156;  // "VQRY" little-endian
constexpr std::uint32_t kQueryVersion = 1;
constexpr std::uint32_t kCheckpointMagic = 0x504b4356;  // "VCKP"
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void write_queries(const fs::path& path, const QuerySet& queries) {
  queries.validate();
  ByteWriter w;
  w.u32(kQueryMagic);
  w.u32(kQueryVersion);
  w.u64(queries.size());
  w.f64(queries.delta);
  w.u8(std::uint8_t(queries.mode));
  w.u64(queries.seed);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    w.f32(float(queries.positions[i].x));
    w.f32(float(queries.positions[i].y));
    w.f32(float(queries.positions[i].z));
    w.u8(queries.occupancy[i]);
    w.f32(float(queries.intensity_target[i]));
    w.u8(std::uint8_t(queries.kind[i]));
    w.u32(queries.source_index[i]);
  }
  append_checksum(w.bytes);
  write_file(path, w.bytes);
}

QuerySet read_queries(const fs::path& path) {
  const std::string payload = verify_checksum(read_file(path), "query set");
  ByteReader r{payload, 0, "query set"};
  if (r.u32() != kQueryMagic) throw std::runtime_error("query set: bad magic");
  if (r.u32() != kQueryVersion) throw std::runtime_error("query set: unsupported version");
  const std::uint64_t n = r.u64();
  QuerySet q;
  q.delta = r.f64();
  q.mode = OffsetMode(r.u8());
  q.seed = r.u64();
  q.positions.resize(n);
  q.occupancy.resize(n);
  q.intensity_target.resize(n);
  q.kind.resize(n);
  q.source_index.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    q.positions[i].x = double(r.f32());
    q.positions[i].y = double(r.f32());
    q.positions[i].z = double(r.f32());
    q.occupancy[i] = r.u8();
    q.intensity_target[i] = double(r.f32());
    q.kind[i] = QueryKind(r.u8());
    q.source_index[i] = r.u32();
  }
  if (r.pos != payload.size()) throw std::runtime_error("query set: trailing bytes");
  q.validate();
  return q;
}

// ---- checkpoints ----------------------------------------------------------------

namespace {

struct NamedTensor {
  std::string name;
  std::uint32_t rows = 0, cols = 0;
  const float* data = nullptr;
  std::size_t size() const { return std::size_t(rows) * cols; }
};

std::vector<NamedTensor> checkpoint_layout(Checkpoint& ckpt) {
  std::vector<NamedTensor> tensors;
  ckpt.model.for_each_layer([&](const std::string& name, Linear<float>& l) {
    tensors.push_back({name + ".weight", std::uint32_t(l.weight.rows),
                       std::uint32_t(l.weight.cols), l.weight.data.data()});
    tensors.push_back({name + ".bias", 1, std::uint32_t(l.bias.size()), l.bias.data()});
  });
  if (ckpt.has_optimizer) {
    // Moments follow param_views() order: weight then bias per layer.
    std::size_t vi = 0;
    ckpt.model.for_each_layer([&](const std::string& name, Linear<float>& l) {
      tensors.push_back({"opt.m." + name + ".weight", std::uint32_t(l.weight.rows),
                         std::uint32_t(l.weight.cols), ckpt.first_moments[vi].data()});
      tensors.push_back({"opt.v." + name + ".weight", std::uint32_t(l.weight.rows),
                         std::uint32_t(l.weight.cols), ckpt.second_moments[vi].data()});
      ++vi;
      tensors.push_back({"opt.m." + name + ".bias", 1, std::uint32_t(l.bias.size()),
                         ckpt.first_moments[vi].data()});
      tensors.push_back({"opt.v." + name + ".bias", 1, std::uint32_t(l.bias.size()),
                         ckpt.second_moments[vi].data()});
      ++vi;
    });
  }
  return tensors;
}

}  // namespace

void write_checkpoint(const fs::path& path, Checkpoint& ckpt) {
  if (ckpt.has_optimizer) {
    const std::size_t groups = ckpt.model.param_views().size();
    if (ckpt.first_moments.size() != groups || ckpt.second_moments.size() != groups)
      throw std::invalid_argument("checkpoint: optimizer moment count mismatch");
  }
  ByteWriter w;
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(std::uint32_t(ckpt.model.encoder.neighbor_k));
  w.u32(std::uint32_t(kLatentDim));
  w.u8(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    w.i64(ckpt.optimizer_step);
    w.f64(ckpt.optimizer_config.lr);
    w.f64(ckpt.optimizer_config.beta1);
    w.f64(ckpt.optimizer_config.beta2);
    w.f64(ckpt.optimizer_config.eps);
    w.f64(ckpt.optimizer_config.weight_decay);
  }
  const auto tensors = checkpoint_layout(ckpt);
  w.u32(std::uint32_t(tensors.size()));
  for (const NamedTensor& t : tensors) {
    w.u16(std::uint16_t(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u32(t.rows);
    w.u32(t.cols);
    for (std::size_t i = 0; i < t.size(); ++i) w.f32(t.data[i]);
  }
  append_checksum(w.bytes);
  write_file(path, w.bytes);
}

Checkpoint read_checkpoint(const fs::path& path, int neighbor_k) {
  const std::string payload = verify_checksum(read_file(path), "checkpoint");
  ByteReader r{payload, 0, "checkpoint"};
  if (r.u32() != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic");
  if (r.u32() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");

  Checkpoint ckpt;
  ckpt.model.encoder.neighbor_k = neighbor_k;
  const std::uint32_t file_k = r.u32();
  if (file_k != std::uint32_t(neighbor_k))
    throw std::runtime_error("checkpoint: architecture mismatch (neighbor_k)");
  if (r.u32() != std::uint32_t(kLatentDim))
    throw std::runtime_error("checkpoint: architecture mismatch (latent dim)");
  ckpt.has_optimizer = r.u8() != 0;
  if (ckpt.has_optimizer) {
    ckpt.optimizer_step = r.i64();
    ckpt.optimizer_config.lr = r.f64();
    ckpt.optimizer_config.beta1 = r.f64();
    ckpt.optimizer_config.beta2 = r.f64();
    ckpt.optimizer_config.eps = r.f64();
    ckpt.optimizer_config.weight_decay = r.f64();
    const std::size_t groups = ckpt.model.param_views().size();
    ckpt.first_moments.resize(groups);
    ckpt.second_moments.resize(groups);
    std::size_t vi = 0;
    ckpt.model.for_each_layer([&](const std::string&, Linear<float>& l) {
      ckpt.first_moments[vi].resize(l.weight.data.size());
      ckpt.second_moments[vi].resize(l.weight.data.size());
      ++vi;
      ckpt.first_moments[vi].resize(l.bias.size());
      ckpt.second_moments[vi].resize(l.bias.size());
      ++vi;
    });
  }

  // The layout is derived from the expected architecture; every stored
  // tensor must match it in name, order and shape.
  std::vector<NamedTensor> expected = checkpoint_layout(ckpt);
  std::vector<float*> dests;
  dests.reserve(expected.size());
  for (NamedTensor& t : expected) dests.push_back(const_cast<float*>(t.data));

  const std::uint32_t count = r.u32();
  if (count != expected.size())
    throw std::runtime_error("checkpoint: architecture mismatch (tensor count)");
  for (std::size_t ti = 0; ti < expected.size(); ++ti) {
    const std::uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (name != expected[ti].name || rows != expected[ti].rows ||
        cols != expected[ti].cols)
      throw std::runtime_error("checkpoint: architecture mismatch (" + name + ")");
    float* dst = dests[ti];
    for (std::size_t i = 0; i < expected[ti].size(); ++i) dst[i] = r.f32();
  }
  if (r.pos != payload.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

// ---- metrics --------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_metrics_csv(const fs::path& path, const MetricsReport& report) {
  std::ostringstream out;
  out << "epoch,lr,loss,occupancy_loss,intensity_loss\n";
  for (const EpochRow& row : report.epochs)
    out << row.epoch << "," << format_double(row.lr) << "," << format_double(row.loss)
        << "," << format_double(row.occupancy_loss) << ","
        << format_double(row.intensity_loss) << "\n";
  write_file(path, out.str());
}

namespace {

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (std::uint8_t(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

bool looks_like_json_scalar(const std::string& v) {
  if (v == "true" || v == "false" || v == "null") return true;
  if (v.empty()) return false;
  double d;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), d);
  // nan/inf parse as doubles but are not valid JSON tokens; quote them.
  return res.ec == std::errc() && res.ptr == v.data() + v.size() && std::isfinite(d);
}

}  // namespace

void write_summary_json(const fs::path& path, const SummaryMap& summary) {
  std::ostringstream out;
  out << "{\n";
  bool first = true;
  for (const auto& [k, v] : summary) {
    if (!first) out << ",\n";
    first = false;
    out << "  \"" << json_escape(k) << "\": ";
    if (looks_like_json_scalar(v))
      out << v;
    else
      out << "\"" << json_escape(v) << "\"";
  }
  out << "\n}\n";
  write_file(path, out.str());
}

// ---- manifest -------------------------------------------------------------------

void write_manifest(const fs::path& dir, const std::vector<fs::path>& files) {
  std::vector<std::pair<std::string, std::string>> rows;
  rows.reserve(files.size());
  for (const fs::path& f : files) {
    const fs::path rel = f.lexically_relative(dir);
    rows.emplace_back(rel.generic_string(), sha256_file_hex(f));
  }
  std::sort(rows.begin(), rows.end());
  std::ostringstream out;
  for (const auto& [rel, hash] : rows) out << hash << "  " << rel << "\n";
  write_file(dir / "manifest.txt", out.str());
}

// ---- PLY ------------------------------------------------------------------------

void export_ply(const fs::path& path, const PointCloud& cloud,
                const std::vector<Vec3>& sample_positions,
                const std::vector<double>& sample_occupancy) {
  if (sample_positions.size() != sample_occupancy.size())
    throw std::invalid_argument("export_ply: sample array mismatch");

  // Fixed palette per semantic class; unlabeled input points render gray.
  static constexpr std::uint8_t kPalette[kNumClasses][3] = {
      {120, 120, 120}, {230, 160, 60}, {70, 170, 90}, {80, 120, 220}};

  std::ostringstream out;
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() + sample_positions.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";

  auto emit = [&](const Vec3& p, int rr, int gg, int bb) {
    out << format_double(float(p.x)) << " " << format_double(float(p.y)) << " "
        << format_double(float(p.z)) << " " << rr << " " << gg << " " << bb << "\n";
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.has_labels() && cloud.labels[i] < kNumClasses) {
      const auto& c = kPalette[cloud.labels[i]];
      emit(cloud.points[i], c[0], c[1], c[2]);
    } else {
      emit(cloud.points[i], 200, 200, 200);
    }
  }
  for (std::size_t i = 0; i < sample_positions.size(); ++i) {
    // Blue (empty) to red (occupied).
    const double o = std::clamp(sample_occupancy[i], 0.0, 1.0);
    emit(sample_positions[i], int(255 * o), 40, int(255 * (1 - o)));
  }
  write_file(path, out.str());
}

}  // namespace visocc
