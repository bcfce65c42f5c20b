#pragma once

#include "geolabel/boxes.hpp"
#include "geolabel/densify.hpp"
#include "geolabel/lifting.hpp"
#include "geolabel/movers.hpp"
#include "geolabel/propagation.hpp"
#include "geolabel/refine.hpp"
#include "geolabel/synth.hpp"

#include <json.hpp>
#include <png.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace geolabel {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Little-endian primitives
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return byteswap_if_big(v);
}

template <class T>
void store_le(std::string& out, T v) {
  v = byteswap_if_big(v);
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace detail

/// Six-digit frame file stem.
inline std::string frame_name(std::int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(t));
  return buf;
}

// ---------------------------------------------------------------------------
// Scans (.bin) and labels (.label)
// ---------------------------------------------------------------------------

inline Scan parse_scan(const std::string& bytes, std::int64_t t = 0) {
  if (bytes.size() % 16 != 0)
    throw FormatError("scan truncated: " + std::to_string(bytes.size()) + " bytes is not a multiple of 16",
                      static_cast<std::int64_t>(bytes.size() / 16 * 16));
  Scan s;
  s.timestamp_index = t;
  const std::size_t n = bytes.size() / 16;
  s.points.reserve(n);
  s.intensities.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = bytes.data() + 16 * i;
    const float x = detail::load_le<float>(p), y = detail::load_le<float>(p + 4), z = detail::load_le<float>(p + 8),
                w = detail::load_le<float>(p + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(w))
      throw FormatError("non-finite value in scan record " + std::to_string(i), static_cast<std::int64_t>(16 * i));
    s.points.emplace_back(x, y, z);
    s.intensities.push_back(w);
  }
  return s;
}

inline Scan read_scan(const fs::path& path, std::int64_t t = 0) {
  try {
    return parse_scan(detail::read_file(path), t);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.location());
  }
}

/// Coordinates are stored as float32.
inline std::string serialize_scan(const Scan& s) {
  if (s.points.size() != s.intensities.size())
    throw AlignmentError("scan intensities do not match points", s.points.size(), s.intensities.size());
  std::string out;
  out.reserve(16 * s.points.size());
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    detail::store_le(out, static_cast<float>(s.points[i].x()));
    detail::store_le(out, static_cast<float>(s.points[i].y()));
    detail::store_le(out, static_cast<float>(s.points[i].z()));
    detail::store_le(out, s.intensities[i]);
  }
  return out;
}

inline void write_scan(const fs::path& path, const Scan& s) { detail::write_file(path, serialize_scan(s)); }

/// Raw uint32 records; the class id is the lower 16 bits.
struct LabelFile {
  std::vector<std::uint32_t> raw;

  std::size_t size() const noexcept { return raw.size(); }
  std::vector<ClassId> classes() const {
    std::vector<ClassId> c(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) c[i] = static_cast<ClassId>(raw[i] & 0xffffu);
    return c;
  }
  std::vector<std::uint16_t> upper() const {
    std::vector<std::uint16_t> c(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) c[i] = static_cast<std::uint16_t>(raw[i] >> 16);
    return c;
  }

  static LabelFile from_classes(std::span<const ClassId> classes, std::span<const std::uint16_t> upper = {}) {
    if (!upper.empty() && upper.size() != classes.size())
      throw AlignmentError("upper label bits do not match classes", classes.size(), upper.size());
    LabelFile f;
    f.raw.resize(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i)
      f.raw[i] = classes[i] | (upper.empty() ? 0u : static_cast<std::uint32_t>(upper[i]) << 16);
    return f;
  }
};

inline LabelFile parse_labels(const std::string& bytes) {
  if (bytes.size() % 4 != 0)
    throw FormatError("label file truncated", static_cast<std::int64_t>(bytes.size() / 4 * 4));
  LabelFile f;
  f.raw.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < f.raw.size(); ++i) f.raw[i] = detail::load_le<std::uint32_t>(bytes.data() + 4 * i);
  return f;
}

/// `expected_count` < 0 skips the alignment check.
inline LabelFile read_labels(const fs::path& path, std::int64_t expected_count = -1) {
  LabelFile f;
  try {
    f = parse_labels(detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.location());
  }
  if (expected_count >= 0 && f.size() != static_cast<std::size_t>(expected_count))
    throw AlignmentError(path.string() + ": label count does not match scan", static_cast<std::size_t>(expected_count),
                         f.size());
  return f;
}

inline void write_labels(const fs::path& path, const LabelFile& f) {
  std::string out;
  out.reserve(4 * f.raw.size());
  for (auto v : f.raw) detail::store_le(out, v);
  detail::write_file(path, out);
}

inline void write_labels(const fs::path& path, std::span<const ClassId> classes) {
  write_labels(path, LabelFile::from_classes(classes));
}

/// Per-point flags stored as 0/1 uint32 records.
inline void write_mask(const fs::path& path, std::span<const std::uint8_t> mask) {
  LabelFile f;
  f.raw.assign(mask.begin(), mask.end());
  write_labels(path, f);
}

inline std::vector<std::uint8_t> read_mask(const fs::path& path, std::int64_t expected_count = -1) {
  const LabelFile f = read_labels(path, expected_count);
  std::vector<std::uint8_t> m(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) m[i] = f.raw[i] != 0;
  return m;
}

// ---------------------------------------------------------------------------
// Poses
// ---------------------------------------------------------------------------

/// Tolerances for rotation drift in pose files.
inline constexpr double kPoseRepairTolerance = 1e-9;
inline constexpr double kPoseRejectTolerance = 1e-3;

inline std::vector<Pose> parse_poses(const std::string& text, const std::string& origin = "poses") {
  std::vector<Pose> poses;
  std::istringstream in(text);
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError(origin + ":" + std::to_string(lineno) + ": bad number '" + tok + "'", lineno);
      }
    }
    if (v.size() != 12)
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 12 fields, got " + std::to_string(v.size()),
                        lineno);
    Pose p;
    p.rotation << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    p.translation = Point3(v[3], v[7], v[11]);
    p.timestamp_index = static_cast<std::int64_t>(poses.size());
    if (!is_finite(p.translation) || !p.rotation.allFinite())
      throw FormatError(origin + ":" + std::to_string(lineno) + ": non-finite value", lineno);
    if (p.rotation.determinant() <= 0.0)
      throw FormatError(origin + ":" + std::to_string(lineno) + ": rotation is a reflection (det <= 0)", lineno);
    const double drift = (p.rotation.transpose() * p.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (drift > kPoseRejectTolerance)
      throw FormatError(origin + ":" + std::to_string(lineno) + ": rotation is not orthonormal", lineno);
    if (drift > kPoseRepairTolerance) {
      Eigen::JacobiSVD<Eigen::Matrix3d> svd(p.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
      p.rotation = svd.matrixU() * svd.matrixV().transpose();
    }
    poses.push_back(p);
  }
  return poses;
}

inline std::vector<Pose> read_poses(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError("missing poses file " + path.string());
  return parse_poses(detail::read_file(path), path.string());
}

inline std::string format_poses(std::span<const Pose> poses) {
  std::string out;
  char buf[64];
  for (const auto& p : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double v = c < 3 ? p.rotation(r, c) : p.translation[r];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        if (!out.empty() && out.back() != '\n') out += ' ';
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

inline void write_poses(const fs::path& path, std::span<const Pose> poses) {
  detail::write_file(path, format_poses(poses));
}

// ---------------------------------------------------------------------------
// Label images (16-bit grayscale PNG)
// ---------------------------------------------------------------------------

namespace detail {

struct PngReadBuffer {
  const std::string* data;
  std::size_t pos = 0;
};

inline void png_read_from_string(png_structp png, png_bytep out, png_size_t n) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + n > buf->data->size()) png_error(png, "unexpected end of file");
  std::memcpy(out, buf->data->data() + buf->pos, n);
  buf->pos += n;
}

inline void png_write_to_string(png_structp png, png_bytep in, png_size_t n) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(in), n);
}

inline void png_flush_noop(png_structp) {}

[[noreturn]] inline void png_throw(png_structp, png_const_charp msg) { throw FormatError(std::string("png: ") + msg); }
inline void png_warn(png_structp, png_const_charp) {}

}  // namespace detail

inline LabelImage parse_label_image(const std::string& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw FormatError("not a PNG file", 0);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_throw, detail::png_warn);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  detail::PngReadBuffer buf{&bytes, 0};
  png_set_read_fn(png, &buf, detail::png_read_from_string);
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info), color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) throw FormatError("label image must be single-channel grayscale");
  if (depth != 16) throw FormatError("label image must be 16-bit, got " + std::to_string(depth) + "-bit");
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) png_set_interlace_handling(png);
  png_read_update_info(png, info);
  LabelImage img(static_cast<int>(w), static_cast<int>(h));
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (png_uint_32 v = 0; v < h; ++v) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 u = 0; u < w; ++u)
      img.at(static_cast<int>(u), static_cast<int>(v)) = static_cast<ClassId>((row[2 * u] << 8) | row[2 * u + 1]);
  }
  return img;
}

inline LabelImage read_label_image(const fs::path& path) {
  try {
    return parse_label_image(detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.location());
  }
}

inline std::string serialize_label_image(const LabelImage& img) {
  if (img.width < 1 || img.height < 1) throw ParameterError("label image has no pixels");
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_throw, detail::png_warn);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_set_write_fn(png, &out, detail::png_write_to_string, detail::png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 3);
  png_write_info(png, info);
  std::vector<png_byte> row(2 * static_cast<std::size_t>(img.width));
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const ClassId c = img.at(u, v);
      row[2 * u] = static_cast<png_byte>(c >> 8);
      row[2 * u + 1] = static_cast<png_byte>(c & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  return out;
}

inline void write_label_image(const fs::path& path, const LabelImage& img) {
  detail::write_file(path, serialize_label_image(img));
}

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

struct NamedCamera {
  std::string name;
  CameraModel model;
};

inline std::vector<NamedCamera> parse_cameras(const json& j) {
  if (!j.is_array()) throw FormatError("cameras must be a JSON array");
  std::vector<NamedCamera> out;
  for (const auto& c : j) {
    for (auto it = c.begin(); it != c.end(); ++it)
      if (it.key() != "name" && it.key() != "width" && it.key() != "height" && it.key() != "P")
        throw FormatError("unknown camera key '" + it.key() + "'");
    NamedCamera nc;
    nc.name = c.at("name").get<std::string>();
    nc.model.width = c.at("width").get<int>();
    nc.model.height = c.at("height").get<int>();
    const auto p = c.at("P").get<std::vector<double>>();
    if (p.size() != 12) throw FormatError("camera '" + nc.name + "': P needs 12 values");
    if (nc.model.width < 1 || nc.model.height < 1) throw FormatError("camera '" + nc.name + "': bad size");
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 4; ++k) nc.model.projection(r, k) = p[4 * r + k];
    out.push_back(std::move(nc));
  }
  return out;
}

inline std::vector<NamedCamera> read_cameras(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError("missing cameras file " + path.string());
  try {
    return parse_cameras(json::parse(detail::read_file(path)));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline json cameras_to_json(std::span<const NamedCamera> cams) {
  json arr = json::array();
  for (const auto& c : cams) {
    std::vector<double> p;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 4; ++k) p.push_back(c.model.projection(r, k));
    arr.push_back({{"name", c.name}, {"width", c.model.width}, {"height", c.model.height}, {"P", p}});
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Boxes (JSONL)
// ---------------------------------------------------------------------------

/// Rounds to 6 decimals while staying inside (-pi, pi].
inline double yaw_for_output(double yaw) {
  double r = std::round(wrap_angle(yaw) * 1e6) / 1e6;
  if (r > M_PI) r -= 1e-6;
  if (r <= -M_PI) r += 1e-6;
  return r;
}

/// Optional per-box point count (ground-truth files carry it).
struct BoxRecord {
  Box3D box;
  std::int64_t num_points = -1;
};

inline std::string format_box(const BoxRecord& r) {
  const Box3D& b = r.box;
  char buf[512];
  int n = std::snprintf(buf, sizeof buf,
                        "{\"t\":%lld,\"track_id\":%lld,\"center\":[%.6f,%.6f,%.6f],\"dims\":[%.6f,%.6f,%.6f],"
                        "\"yaw\":%.6f,\"score\":%.6f",
                        static_cast<long long>(b.timestamp_index), static_cast<long long>(b.track_id), b.center.x(),
                        b.center.y(), b.center.z(), b.dims.x(), b.dims.y(), b.dims.z(), yaw_for_output(b.yaw),
                        b.score);
  std::string s(buf, static_cast<std::size_t>(n));
  if (r.num_points >= 0) s += ",\"num_points\":" + std::to_string(r.num_points);
  s += "}";
  // printf may emit "-0.000000"; normalize for byte-stable output.
  for (std::size_t pos; (pos = s.find("-0.000000")) != std::string::npos;) s.erase(pos, 1);
  return s;
}

inline std::string format_boxes(std::vector<BoxRecord> recs) {
  std::sort(recs.begin(), recs.end(), [](const BoxRecord& a, const BoxRecord& b) {
    return std::tie(a.box.timestamp_index, a.box.track_id) < std::tie(b.box.timestamp_index, b.box.track_id);
  });
  std::string out;
  for (const auto& r : recs) out += format_box(r) + "\n";
  return out;
}

inline void write_boxes(const fs::path& path, std::span<const Track> tracks) {
  std::vector<BoxRecord> recs;
  for (const auto& t : tracks)
    for (const auto& b : t.boxes) recs.push_back({b, -1});
  detail::write_file(path, format_boxes(std::move(recs)));
}

inline void write_box_records(const fs::path& path, std::span<const BoxRecord> recs) {
  detail::write_file(path, format_boxes({recs.begin(), recs.end()}));
}

inline std::vector<BoxRecord> parse_boxes(const std::string& text, const std::string& origin = "boxes") {
  std::vector<BoxRecord> out;
  std::istringstream in(text);
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      BoxRecord r;
      r.box.timestamp_index = j.at("t").get<std::int64_t>();
      r.box.track_id = j.at("track_id").get<std::int64_t>();
      const auto c = j.at("center").get<std::vector<double>>();
      const auto d = j.at("dims").get<std::vector<double>>();
      if (c.size() != 3 || d.size() != 3) throw FormatError("center and dims need 3 values");
      r.box.center = Point3(c[0], c[1], c[2]);
      r.box.dims = Eigen::Vector3d(d[0], d[1], d[2]);
      r.box.yaw = j.at("yaw").get<double>();
      r.box.score = j.at("score").get<double>();
      if (j.contains("num_points")) r.num_points = j.at("num_points").get<std::int64_t>();
      out.push_back(r);
    } catch (const json::exception& e) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
    } catch (const FormatError& e) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  return out;
}

inline std::vector<BoxRecord> read_boxes(const fs::path& path) {
  return parse_boxes(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Map snapshots
// ---------------------------------------------------------------------------

inline constexpr char kMapMagic[8] = {'G', 'L', 'M', 'A', 'P', 0, 0, 0};
inline constexpr std::uint32_t kMapVersion = 1;

inline std::string serialize_map(const SemanticMap& map) {
  std::string out(kMapMagic, 8);
  detail::store_le(out, kMapVersion);
  detail::store_le(out, static_cast<std::uint64_t>(map.size()));
  for (const auto& mp : map.points()) {
    for (int a = 0; a < 3; ++a) detail::store_le(out, mp.position[a]);
    detail::store_le(out, mp.static_prob);
    detail::store_le(out, mp.label);
    const auto entries = mp.histogram.entries();
    if (entries.size() > 0xffff) throw Error("histogram too large to serialize");
    detail::store_le(out, static_cast<std::uint16_t>(entries.size()));
    for (const auto& e : entries) {
      detail::store_le(out, e.label);
      detail::store_le(out, e.count);
    }
  }
  return out;
}

inline SemanticMap parse_map(const std::string& bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw FormatError("map file truncated", static_cast<std::int64_t>(pos));
  };
  need(20);
  if (std::memcmp(bytes.data(), kMapMagic, 8) != 0) throw FormatError("bad map magic", 0);
  pos = 8;
  const auto version = detail::load_le<std::uint32_t>(bytes.data() + pos);
  if (version != kMapVersion) throw FormatError("unsupported map version " + std::to_string(version), 8);
  pos += 4;
  const auto count = detail::load_le<std::uint64_t>(bytes.data() + pos);
  pos += 8;
  std::vector<MapPoint> pts;
  pts.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, bytes.size() / 36)));
  for (std::uint64_t i = 0; i < count; ++i) {
    need(36);
    MapPoint mp;
    for (int a = 0; a < 3; ++a) mp.position[a] = detail::load_le<double>(bytes.data() + pos + 8 * a);
    mp.static_prob = detail::load_le<double>(bytes.data() + pos + 24);
    mp.label = detail::load_le<std::uint16_t>(bytes.data() + pos + 32);
    const auto n = detail::load_le<std::uint16_t>(bytes.data() + pos + 34);
    pos += 36;
    need(6 * static_cast<std::size_t>(n));
    for (std::uint16_t e = 0; e < n; ++e) {
      mp.histogram.add(detail::load_le<std::uint16_t>(bytes.data() + pos), detail::load_le<std::uint32_t>(bytes.data() + pos + 2));
      pos += 6;
    }
    pts.push_back(std::move(mp));
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after map", static_cast<std::int64_t>(pos));
  return SemanticMap(std::move(pts));
}

inline void write_map(const fs::path& path, const SemanticMap& map) { detail::write_file(path, serialize_map(map)); }

inline SemanticMap read_map(const fs::path& path) {
  try {
    return parse_map(detail::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.location());
  }
}

// ---------------------------------------------------------------------------
// Strict JSON helpers
// ---------------------------------------------------------------------------

namespace detail {

/// Reads known keys of one JSON object and rejects anything else.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ParameterError(where_ + ": expected a JSON object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ParameterError(where_ + ": unknown key '" + it.key() + "'");
  }
  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParameterError(where_ + "." + key + ": " + e.what());
    }
  }

  void get(const std::string& key, Eigen::Vector3d& out) { get_vec<3>(key, out); }
  void get(const std::string& key, Eigen::Vector2d& out) { get_vec<2>(key, out); }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  const std::string& where() const { return where_; }

 private:
  template <int N, class V>
  void get_vec(const std::string& key, V& out) {
    std::vector<double> v;
    get(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != N) throw ParameterError(where_ + "." + key + ": expected " + std::to_string(N) + " numbers");
    for (int i = 0; i < N; ++i) out[i] = v[i];
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

inline json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json vec_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline configuration
// ---------------------------------------------------------------------------

struct PipelineConfig {
  // lifting
  int window_half_width = 2;
  double visibility_slack = kVisibilitySlack;
  // map accumulation
  double map_voxel = 0.1;
  PropagationConfig propagation;
  IwuConfig iwu;
  MoverConfig movers;
  int cluster_window = 3;
  // boxes
  TrackerConfig tracker;
  double knot_spacing = 5.0;  ///< frames
  Eigen::Vector3d min_dims = Eigen::Vector3d::Ones();
  int min_detection_points = 3;
  // densify
  DensifyConfig densify;
  int densify_stride = 1;
  // evaluation
  int eval_min_gt_points = 50;
  std::vector<double> ap_thresholds{0.5, 1.0, 2.0, 4.0};
  std::uint64_t seed = 0;

  void validate() const {
    using detail::require;
    require(window_half_width >= 0, "lifting.window_half_width must be >= 0");
    require(visibility_slack >= 0.0, "lifting.visibility_slack must be >= 0");
    require(map_voxel > 0.0, "map.voxel must be positive");
    require(propagation.radius > 0.0, "propagation.radius must be positive");
    require(propagation.passes >= 1, "propagation.passes must be >= 1");
    iwu.validate();
    require(movers.corr_radius > 0.0, "movers.corr_radius must be positive");
    require(movers.support_radius > 0.0, "movers.support_radius must be positive");
    require(movers.min_support >= 0, "movers.min_support must be >= 0");
    require(movers.eps > 0.0, "movers.eps must be positive");
    require(movers.min_pts >= 1, "movers.min_pts must be >= 1");
    require(cluster_window >= 1 && cluster_window % 2 == 1, "movers.window must be a positive odd number");
    require(tracker.gate > 0.0, "boxes.gate must be positive");
    require(tracker.max_age >= 0, "boxes.max_age must be >= 0");
    require(tracker.min_track_length >= 1, "boxes.min_track_length must be >= 1");
    require(tracker.dt > 0.0, "boxes.dt must be positive");
    require(knot_spacing > 0.0, "boxes.knot_spacing must be positive");
    require(min_dims.minCoeff() >= 0.0, "boxes.min_dims must be >= 0");
    require(min_detection_points >= 3, "boxes.min_detection_points must be >= 3");
    const auto& n = tracker.noise;
    require(n.q_pos >= 0 && n.q_yaw >= 0 && n.q_vel >= 0 && n.q_omega >= 0 && n.r_pos >= 0 && n.r_yaw >= 0,
            "boxes noise sigmas must be >= 0");
    require(densify.delta_theta > 0.0 && densify.delta_phi > 0.0, "densify angular resolution must be positive");
    require(densify.alpha_cull >= 0.0, "densify.alpha_cull must be >= 0");
    require(densify.max_range > 0.0, "densify.max_range must be positive");
    require(densify_stride >= 1, "densify.stride must be >= 1");
    require(eval_min_gt_points >= 0, "eval.min_gt_points must be >= 0");
    require(!ap_thresholds.empty(), "eval.ap_thresholds must not be empty");
    for (double t : ap_thresholds) require(t > 0.0, "eval.ap_thresholds must be positive");
  }
};

inline PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  detail::ObjectReader root(j, "config");
  root.get("seed", c.seed);
  if (root.has("lifting")) {
    detail::ObjectReader r(root.at("lifting"), "lifting");
    r.get("window_half_width", c.window_half_width);
    r.get("visibility_slack", c.visibility_slack);
  }
  if (root.has("map")) {
    detail::ObjectReader r(root.at("map"), "map");
    r.get("voxel", c.map_voxel);
  }
  if (root.has("propagation")) {
    detail::ObjectReader r(root.at("propagation"), "propagation");
    r.get("radius", c.propagation.radius);
    r.get("passes", c.propagation.passes);
    r.get("sequential", c.propagation.sequential);
  }
  if (root.has("refine")) {
    detail::ObjectReader r(root.at("refine"), "refine");
    r.get("alpha", c.iwu.alpha);
    r.get("tau_s", c.iwu.tau_s);
    r.get("r_max", c.iwu.r_max);
    r.get("match_radius", c.iwu.match_radius);
    r.get("initial_prob", c.iwu.initial_prob);
    r.get("sweeps", c.iwu.sweeps);
    if (r.has("movable_classes")) {
      std::vector<ClassId> m;
      r.get("movable_classes", m);
      c.iwu.movable = {m.begin(), m.end()};
    }
    double dt = c.iwu.coverage_delta_theta / kDegToRad, dp = c.iwu.coverage_delta_phi / kDegToRad;
    r.get("coverage_delta_theta_deg", dt);
    r.get("coverage_delta_phi_deg", dp);
    detail::require(dt > 0 && dp > 0, "refine coverage resolution must be positive");
    c.iwu.coverage_delta_theta = dt * kDegToRad;
    c.iwu.coverage_delta_phi = dp * kDegToRad;
    r.get("coverage_alpha", c.iwu.coverage_alpha);
    r.get("coverage_ray_tolerance", c.iwu.coverage_ray_tolerance);
  }
  if (root.has("movers")) {
    detail::ObjectReader r(root.at("movers"), "movers");
    r.get("corr_radius", c.movers.corr_radius);
    r.get("support_radius", c.movers.support_radius);
    r.get("min_support", c.movers.min_support);
    r.get("eps", c.movers.eps);
    r.get("min_pts", c.movers.min_pts);
    r.get("window", c.cluster_window);
  }
  if (root.has("boxes")) {
    detail::ObjectReader r(root.at("boxes"), "boxes");
    r.get("knot_spacing", c.knot_spacing);
    r.get("min_dims", c.min_dims);
    r.get("min_detection_points", c.min_detection_points);
    r.get("gate", c.tracker.gate);
    r.get("max_age", c.tracker.max_age);
    r.get("min_track_length", c.tracker.min_track_length);
    r.get("dt", c.tracker.dt);
    r.get("flip_speed", c.tracker.flip_speed);
    r.get("q_pos", c.tracker.noise.q_pos);
    r.get("q_yaw", c.tracker.noise.q_yaw);
    r.get("q_vel", c.tracker.noise.q_vel);
    r.get("q_omega", c.tracker.noise.q_omega);
    r.get("r_pos", c.tracker.noise.r_pos);
    r.get("r_yaw", c.tracker.noise.r_yaw);
  }
  if (root.has("densify")) {
    detail::ObjectReader r(root.at("densify"), "densify");
    double dt = c.densify.delta_theta / kDegToRad, dp = c.densify.delta_phi / kDegToRad;
    r.get("delta_theta_deg", dt);
    r.get("delta_phi_deg", dp);
    detail::require(dt > 0 && dp > 0, "densify angular resolution must be positive");
    c.densify.delta_theta = dt * kDegToRad;
    c.densify.delta_phi = dp * kDegToRad;
    r.get("alpha_cull", c.densify.alpha_cull);
    r.get("max_range", c.densify.max_range);
    r.get("stride", c.densify_stride);
  }
  if (root.has("eval")) {
    detail::ObjectReader r(root.at("eval"), "eval");
    r.get("min_gt_points", c.eval_min_gt_points);
    r.get("ap_thresholds", c.ap_thresholds);
  }
  c.validate();
  return c;
}

inline json config_to_json(const PipelineConfig& c) {
  std::vector<int> movable(c.iwu.movable.begin(), c.iwu.movable.end());
  return {
      {"seed", c.seed},
      {"lifting", {{"window_half_width", c.window_half_width}, {"visibility_slack", c.visibility_slack}}},
      {"map", {{"voxel", c.map_voxel}}},
      {"propagation",
       {{"radius", c.propagation.radius}, {"passes", c.propagation.passes}, {"sequential", c.propagation.sequential}}},
      {"refine",
       {{"alpha", c.iwu.alpha},
        {"tau_s", c.iwu.tau_s},
        {"r_max", c.iwu.r_max},
        {"match_radius", c.iwu.match_radius},
        {"initial_prob", c.iwu.initial_prob},
        {"sweeps", c.iwu.sweeps},
        {"movable_classes", movable},
        {"coverage_delta_theta_deg", c.iwu.coverage_delta_theta / kDegToRad},
        {"coverage_delta_phi_deg", c.iwu.coverage_delta_phi / kDegToRad},
        {"coverage_alpha", c.iwu.coverage_alpha},
        {"coverage_ray_tolerance", c.iwu.coverage_ray_tolerance}}},
      {"movers",
       {{"corr_radius", c.movers.corr_radius},
        {"support_radius", c.movers.support_radius},
        {"min_support", c.movers.min_support},
        {"eps", c.movers.eps},
        {"min_pts", c.movers.min_pts},
        {"window", c.cluster_window}}},
      {"boxes",
       {{"knot_spacing", c.knot_spacing},
        {"min_dims", detail::vec_json(c.min_dims)},
        {"min_detection_points", c.min_detection_points},
        {"gate", c.tracker.gate},
        {"max_age", c.tracker.max_age},
        {"min_track_length", c.tracker.min_track_length},
        {"dt", c.tracker.dt},
        {"flip_speed", c.tracker.flip_speed},
        {"q_pos", c.tracker.noise.q_pos},
        {"q_yaw", c.tracker.noise.q_yaw},
        {"q_vel", c.tracker.noise.q_vel},
        {"q_omega", c.tracker.noise.q_omega},
        {"r_pos", c.tracker.noise.r_pos},
        {"r_yaw", c.tracker.noise.r_yaw}}},
      {"densify",
       {{"delta_theta_deg", c.densify.delta_theta / kDegToRad},
        {"delta_phi_deg", c.densify.delta_phi / kDegToRad},
        {"alpha_cull", c.densify.alpha_cull},
        {"max_range", c.densify.max_range},
        {"stride", c.densify_stride}}},
      {"eval", {{"min_gt_points", c.eval_min_gt_points}, {"ap_thresholds", c.ap_thresholds}}},
  };
}

inline PipelineConfig read_config(const fs::path& path) {
  try {
    return config_from_json(json::parse(detail::read_file(path)));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), static_cast<std::int64_t>(e.byte));
  }
}

// ---------------------------------------------------------------------------
// Scene specification
// ---------------------------------------------------------------------------

inline SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  detail::ObjectReader root(j, "scene");
  root.get("range_sigma", s.range_sigma);
  root.get("label_flip", s.label_flip);
  root.get("seed", s.seed);
  if (root.has("planes")) {
    for (const auto& pj : root.at("planes")) {
      detail::ObjectReader r(pj, "scene.planes[]");
      PlanePrimitive p;
      r.get("point", p.point);
      r.get("normal", p.normal);
      r.get("class", p.class_id);
      s.planes.push_back(p);
    }
  }
  if (root.has("boxes")) {
    for (const auto& bj : root.at("boxes")) {
      detail::ObjectReader r(bj, "scene.boxes[]");
      CuboidPrimitive b;
      r.get("center", b.center);
      r.get("dims", b.dims);
      r.get("yaw", b.yaw);
      r.get("class", b.class_id);
      s.boxes.push_back(b);
    }
  }
  if (root.has("movers")) {
    for (const auto& mj : root.at("movers")) {
      detail::ObjectReader r(mj, "scene.movers[]");
      MoverSpec m;
      std::string motion = "linear";
      r.get("motion", motion);
      if (motion == "linear")
        m.motion = MoverSpec::Motion::Linear;
      else if (motion == "turn")
        m.motion = MoverSpec::Motion::Turn;
      else
        throw ParameterError("scene.movers[].motion must be 'linear' or 'turn'");
      r.get("dims", m.dims);
      r.get("class", m.class_id);
      r.get("z_min", m.z_min);
      r.get("start", m.start);
      r.get("velocity", m.velocity);
      r.get("center", m.center);
      r.get("radius", m.radius);
      r.get("phase", m.phase);
      r.get("omega", m.omega);
      s.movers.push_back(m);
    }
  }
  if (root.has("sensor")) {
    detail::ObjectReader r(root.at("sensor"), "scene.sensor");
    auto& z = s.sensor;
    r.get("beams", z.beams);
    r.get("elevation_min_deg", z.elevation_min_deg);
    r.get("elevation_max_deg", z.elevation_max_deg);
    r.get("azimuth_columns", z.azimuth_columns);
    r.get("max_range", z.max_range);
    r.get("height", z.height);
    r.get("start", z.start);
    r.get("velocity", z.velocity);
    r.get("yaw", z.yaw);
    r.get("yaw_rate", z.yaw_rate);
    r.get("frames", z.frames);
    r.get("dt", z.dt);
  }
  if (root.has("cameras")) {
    for (const auto& cj : root.at("cameras")) {
      detail::ObjectReader r(cj, "scene.cameras[]");
      CameraSpec c;
      r.get("name", c.name);
      r.get("yaw_deg", c.yaw_deg);
      r.get("width", c.width);
      r.get("height", c.height);
      r.get("f", c.f);
      r.get("cx", c.cx);
      r.get("cy", c.cy);
      s.cameras.push_back(c);
    }
  }
  s.validate();
  return s;
}

inline json scene_to_json(const SceneSpec& s) {
  using detail::vec_json;
  json planes = json::array(), boxes = json::array(), movers = json::array(), cams = json::array();
  for (const auto& p : s.planes) planes.push_back({{"point", vec_json(p.point)}, {"normal", vec_json(p.normal)}, {"class", p.class_id}});
  for (const auto& b : s.boxes)
    boxes.push_back({{"center", vec_json(b.center)}, {"dims", vec_json(b.dims)}, {"yaw", b.yaw}, {"class", b.class_id}});
  for (const auto& m : s.movers) {
    json mj = {{"dims", vec_json(m.dims)}, {"class", m.class_id}, {"z_min", m.z_min}};
    if (m.motion == MoverSpec::Motion::Linear) {
      mj["motion"] = "linear";
      mj["start"] = vec_json(m.start);
      mj["velocity"] = vec_json(m.velocity);
    } else {
      mj["motion"] = "turn";
      mj["center"] = vec_json(m.center);
      mj["radius"] = m.radius;
      mj["phase"] = m.phase;
      mj["omega"] = m.omega;
    }
    movers.push_back(mj);
  }
  for (const auto& c : s.cameras)
    cams.push_back({{"name", c.name}, {"yaw_deg", c.yaw_deg}, {"width", c.width}, {"height", c.height}, {"f", c.f},
                    {"cx", c.cx}, {"cy", c.cy}});
  const auto& z = s.sensor;
  return {{"planes", planes},
          {"boxes", boxes},
          {"movers", movers},
          {"cameras", cams},
          {"sensor",
           {{"beams", z.beams},
            {"elevation_min_deg", z.elevation_min_deg},
            {"elevation_max_deg", z.elevation_max_deg},
            {"azimuth_columns", z.azimuth_columns},
            {"max_range", z.max_range},
            {"height", z.height},
            {"start", vec_json(z.start)},
            {"velocity", vec_json(z.velocity)},
            {"yaw", z.yaw},
            {"yaw_rate", z.yaw_rate},
            {"frames", z.frames},
            {"dt", z.dt}}},
          {"range_sigma", s.range_sigma},
          {"label_flip", s.label_flip},
          {"seed", s.seed}};
}

inline SceneSpec read_scene(const fs::path& path) {
  try {
    return scene_from_json(json::parse(detail::read_file(path)));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), static_cast<std::int64_t>(e.byte));
  }
}

inline void write_json(const fs::path& path, const json& j) { detail::write_file(path, j.dump(2) + "\n"); }

}  // namespace geolabel
