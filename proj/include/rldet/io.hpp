#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rldet/optim.hpp"
#include "rldet/sim.hpp"
#include "rldet/tensor.hpp"

namespace rldet {

// ---- label text format ----
// One object per line: class x y z l w h theta moving(0|1), whitespace
// separated. Numbers are written with %.17g so the round trip is exact.

inline ObjectSpec parse_label_line(const std::string& line, int line_number) {
  std::istringstream is(line);
  std::vector<std::string> fields;
  std::string tok;
  while (is >> tok) fields.push_back(tok);
  if (fields.size() != 9)
    throw std::runtime_error("label line " + std::to_string(line_number) + ": expected 9 fields, got " +
                             std::to_string(fields.size()));
  ObjectSpec o;
  o.cls = [&] {
    try {
      return class_from_name(fields[0]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("label line " + std::to_string(line_number) + " field 1: " + e.what());
    }
  }();
  double num[7];
  for (int i = 0; i < 7; ++i) {
    const std::string& f = fields[static_cast<size_t>(i + 1)];
    char* end = nullptr;
    num[i] = std::strtod(f.c_str(), &end);
    if (end == f.c_str() || *end != '\0')
      throw std::runtime_error("label line " + std::to_string(line_number) + " field " +
                               std::to_string(i + 2) + ": unparseable number '" + f + "'");
  }
  const std::string& mv = fields[8];
  if (mv != "0" && mv != "1")
    throw std::runtime_error("label line " + std::to_string(line_number) +
                             " field 9: moving flag must be 0 or 1, got '" + mv + "'");
  o.box = Box7{num[0], num[1], num[2], num[3], num[4], num[5], wrap_angle(num[6])};
  o.box.validate();
  o.moving = mv == "1";
  // the text format does not carry the velocity vector; only the flag survives
  o.velocity = {0.0, 0.0, 0.0};
  return o;
}

inline std::vector<ObjectSpec> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label file '" + path + "'");
  std::vector<ObjectSpec> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (blank) continue;
    out.push_back(parse_label_line(line, lineno));
  }
  return out;
}

inline void write_labels(const std::string& path, const std::vector<ObjectSpec>& objects) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write label file '" + path + "'");
  char buf[512];
  for (const ObjectSpec& o : objects) {
    std::snprintf(buf, sizeof(buf), "%s %.17g %.17g %.17g %.17g %.17g %.17g %.17g %d\n",
                  class_name(o.cls), o.box.x, o.box.y, o.box.z, o.box.l, o.box.w, o.box.h,
                  o.box.theta, o.moving ? 1 : 0);
    out << buf;
  }
}

// ---- binary cloud format ----
// Little-endian 32-bit float records; LiDAR stride 4 (x,y,z,intensity),
// radar stride 6 (x,y,z,v_rel,v_abs,rcs).

namespace detail {

inline void put_f32_le(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline float get_f32_le(const unsigned char* p) {
  const uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                        (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <int Stride>
std::vector<std::array<float, Stride>> read_records(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  const size_t record = Stride * 4;
  if (bytes.size() % record != 0) {
    const size_t offset = bytes.size() - bytes.size() % record;
    throw std::runtime_error("'" + path + "': truncated record at byte offset " +
                             std::to_string(offset) + " (file size " + std::to_string(bytes.size()) +
                             " is not a multiple of " + std::to_string(record) + ")");
  }
  std::vector<std::array<float, Stride>> out(bytes.size() / record);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (auto& rec : out) {
    for (int j = 0; j < Stride; ++j) {
      rec[static_cast<size_t>(j)] = get_f32_le(p);
      p += 4;
    }
  }
  return out;
}

}  // namespace detail

inline LidarCloud read_lidar_cloud(const std::string& path) {
  LidarCloud c;
  for (const auto& r : detail::read_records<4>(path))
    c.points.push_back(LidarPoint{r[0], r[1], r[2], r[3]});
  return c;
}

inline void write_lidar_cloud(const std::string& path, const LidarCloud& c) {
  std::string bytes;
  bytes.reserve(c.points.size() * 16);
  for (const LidarPoint& p : c.points) {
    detail::put_f32_le(bytes, p.x);
    detail::put_f32_le(bytes, p.y);
    detail::put_f32_le(bytes, p.z);
    detail::put_f32_le(bytes, p.intensity);
  }
  detail::write_file_bytes(path, bytes);
}

inline RadarCloud read_radar_cloud(const std::string& path) {
  RadarCloud c;
  for (const auto& r : detail::read_records<6>(path))
    c.points.push_back(RadarPoint{r[0], r[1], r[2], r[3], r[4], r[5]});
  return c;
}

inline void write_radar_cloud(const std::string& path, const RadarCloud& c) {
  std::string bytes;
  bytes.reserve(c.points.size() * 24);
  for (const RadarPoint& p : c.points) {
    detail::put_f32_le(bytes, p.x);
    detail::put_f32_le(bytes, p.y);
    detail::put_f32_le(bytes, p.z);
    detail::put_f32_le(bytes, p.v_rel);
    detail::put_f32_le(bytes, p.v_abs);
    detail::put_f32_le(bytes, p.rcs);
  }
  detail::write_file_bytes(path, bytes);
}

// ---- checkpoints ----
// Binary, little-endian, byte-exact round trip. Layout: magic, version,
// config hash, epoch, named f64 tensors, then optional optimizer state.

struct Checkpoint {
  uint32_t version = 1;
  std::string config_hash;
  int32_t epoch = 0;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, AdamState>> opt_state;
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'R', 'L', 'D', 'E', 'T', 'C', 'K', '1'};

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_i64(std::string& out, int64_t v) {
  const uint64_t u = static_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.append(s);
}

inline void put_tensor(std::string& out, const Tensor& t) {
  put_u32(out, static_cast<uint32_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_u32(out, static_cast<uint32_t>(t.dim(i)));
  for (int64_t i = 0; i < t.count(); ++i) put_f64(out, t[static_cast<size_t>(i)]);
}

struct ByteReader {
  const unsigned char* p;
  const unsigned char* end;
  const std::string& path;

  void need(size_t n) const {
    if (static_cast<size_t>(end - p) < n)
      throw std::runtime_error("'" + path + "': checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(*p++) << (8 * i);
    return v;
  }
  int64_t i64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(*p++) << (8 * i);
    return static_cast<int64_t>(v);
  }
  double f64() {
    need(8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(*p++) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
  Tensor tensor() {
    const uint32_t nd = u32();
    std::vector<int> shape;
    for (uint32_t i = 0; i < nd; ++i) shape.push_back(static_cast<int>(u32()));
    Tensor t(shape);
    for (int64_t i = 0; i < t.count(); ++i) t[static_cast<size_t>(i)] = f64();
    return t;
  }
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::string out;
  out.append(detail::kCkptMagic, 8);
  detail::put_u32(out, ck.version);
  detail::put_str(out, ck.config_hash);
  detail::put_u32(out, static_cast<uint32_t>(ck.epoch));
  detail::put_u32(out, static_cast<uint32_t>(ck.params.size()));
  for (const auto& [name, tensor] : ck.params) {
    detail::put_str(out, name);
    detail::put_tensor(out, tensor);
  }
  detail::put_u32(out, static_cast<uint32_t>(ck.opt_state.size()));
  for (const auto& [name, st] : ck.opt_state) {
    detail::put_str(out, name);
    detail::put_i64(out, st.step);
    detail::put_tensor(out, st.m);
    detail::put_tensor(out, st.v);
  }
  detail::write_file_bytes(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), detail::kCkptMagic, 8) != 0)
    throw std::runtime_error("'" + path + "': not a checkpoint file");
  detail::ByteReader r{reinterpret_cast<const unsigned char*>(bytes.data()) + 8,
                       reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size(), path};
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != 1)
    throw std::runtime_error("'" + path + "': unsupported checkpoint version " +
                             std::to_string(ck.version));
  ck.config_hash = r.str();
  ck.epoch = static_cast<int32_t>(r.u32());
  const uint32_t np = r.u32();
  for (uint32_t i = 0; i < np; ++i) {
    std::string name = r.str();
    ck.params.emplace_back(std::move(name), r.tensor());
  }
  const uint32_t ns = r.u32();
  for (uint32_t i = 0; i < ns; ++i) {
    std::string name = r.str();
    AdamState st;
    st.step = r.i64();
    st.m = r.tensor();
    st.v = r.tensor();
    ck.opt_state.emplace_back(std::move(name), std::move(st));
  }
  return ck;
}

// ---- hashing ----

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hash_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(s)));
  return std::string(buf);
}

}  // namespace rldet
