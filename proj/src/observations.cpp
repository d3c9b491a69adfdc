#include "percap/observations.hpp"

#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "percap/raster.hpp"

namespace percap {

using nlohmann::json;

void ObservationSet::validate(int landmark_count) const {
  for (int c = 0; c < camera_count(); ++c) {
    const auto& v = views[c];
    const std::string where = "observations.views[" + std::to_string(c) + "]";
    if (v.detections.rows() != landmark_count || v.confidences.size() != landmark_count) {
      throw InvalidInput(where + ": detection count does not match landmark count");
    }
    if ((v.confidences.array() < 0.0).any() || (v.confidences.array() > 1.0).any()) {
      throw InvalidInput(where + ".confidences: outside [0, 1]");
    }
    if (v.mask.size() > 0 && (v.mask.rows() != v.distance.rows() || v.mask.cols() != v.distance.cols())) {
      throw InvalidInput(where + ": mask and distance image dimensions differ");
    }
  }
}

std::string frame_name(int frame) {
  std::ostringstream ss;
  ss << "frame_" << std::setw(4) << std::setfill('0') << frame;
  return ss.str();
}

void save_mask_pgm(const Mask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << mask.cols() << ' ' << mask.rows() << "\n255\n";
  std::vector<char> bytes(static_cast<std::size_t>(mask.size()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) bytes[i] = mask.data()[i] ? static_cast<char>(255) : 0;
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> tok;
  return tok;
}

}  // namespace

Mask load_mask_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open mask " + path.string());
  if (next_token(in) != "P5") throw LoadError(path.string() + ": magic: expected P5");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw LoadError(path.string() + ": header: malformed");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw LoadError(path.string() + ": header: unsupported dimensions or maxval");
  in.get();
  std::vector<char> bytes(static_cast<std::size_t>(w) * h);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw LoadError(path.string() + ": data: truncated");
  Mask mask(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.data()[i] = bytes[i] != 0 ? 1 : 0;
  return mask;
}

void save_distance_image(const DistanceImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto put_u32 = [&out](std::uint32_t v) {
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                         static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b.data()), 4);
  };
  out.write("DTF1", 4);
  put_u32(static_cast<std::uint32_t>(image.cols()));
  put_u32(static_cast<std::uint32_t>(image.rows()));
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    std::uint32_t bits = 0;
    const float v = image.data()[i];
    std::memcpy(&bits, &v, 4);
    put_u32(bits);
  }
}

DistanceImage load_distance_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open distance image " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "DTF1", 4) != 0) throw LoadError(path.string() + ": magic: expected DTF1");
  const auto get_u32 = [&in, &path]() {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (in.gcount() != 4) throw LoadError(path.string() + ": data: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const std::uint32_t w = get_u32();
  const std::uint32_t h = get_u32();
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) throw LoadError(path.string() + ": header: bad dimensions");
  DistanceImage image(h, w);
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const std::uint32_t bits = get_u32();
    float v = 0.0f;
    std::memcpy(&v, &bits, 4);
    image.data()[i] = v;
  }
  return image;
}

namespace {

std::string cam_suffix(int c) {
  std::ostringstream ss;
  ss << std::setw(2) << std::setfill('0') << c;
  return ss.str();
}

}  // namespace

void save_observations(const ObservationSet& obs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["cameras"] = json::array();
  for (int c = 0; c < obs.camera_count(); ++c) {
    const auto& v = obs.views[c];
    json det = json::array();
    for (Eigen::Index m = 0; m < v.detections.rows(); ++m) det.push_back({v.detections(m, 0), v.detections(m, 1)});
    j["cameras"].push_back({{"detections", det},
                            {"confidences", std::vector<double>(v.confidences.data(), v.confidences.data() + v.confidences.size())}});
    save_mask_pgm(v.mask, dir / ("mask_" + cam_suffix(c) + ".pgm"));
    save_distance_image(v.distance, dir / ("dt_" + cam_suffix(c) + ".dtf"));
  }
  std::ofstream out(dir / "detections.json");
  if (!out) throw Error("cannot write " + (dir / "detections.json").string());
  out << j.dump(1) << '\n';
}

ObservationSet load_observations(const std::filesystem::path& dir) {
  const auto path = dir / "detections.json";
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  if (!j.contains("cameras")) throw LoadError(path.string() + ": cameras: missing");
  ObservationSet obs;
  int c = 0;
  for (const auto& cj : j["cameras"]) {
    CameraObservation v;
    try {
      const auto det = cj.at("detections").get<std::vector<std::vector<double>>>();
      const auto conf = cj.at("confidences").get<std::vector<double>>();
      if (det.size() != conf.size()) throw LoadError(path.string() + ": cameras[" + std::to_string(c) + "]: detections/confidences length mismatch");
      v.detections.resize(static_cast<Eigen::Index>(det.size()), 2);
      v.confidences.resize(static_cast<Eigen::Index>(conf.size()));
      for (std::size_t m = 0; m < det.size(); ++m) {
        if (det[m].size() != 2) throw LoadError(path.string() + ": cameras[" + std::to_string(c) + "].detections: expected [u, v]");
        v.detections(static_cast<Eigen::Index>(m), 0) = det[m][0];
        v.detections(static_cast<Eigen::Index>(m), 1) = det[m][1];
        v.confidences(static_cast<Eigen::Index>(m)) = conf[m];
      }
    } catch (const json::exception& e) {
      throw LoadError(path.string() + ": cameras[" + std::to_string(c) + "]: " + e.what());
    }
    v.mask = load_mask_pgm(dir / ("mask_" + cam_suffix(c) + ".pgm"));
    const auto dt_path = dir / ("dt_" + cam_suffix(c) + ".dtf");
    v.distance = std::filesystem::exists(dt_path) ? load_distance_image(dt_path) : distance_transform(v.mask);
    obs.views.push_back(std::move(v));
    ++c;
  }
  return obs;
}

void save_observation_sequence(const std::vector<ObservationSet>& frames, const std::filesystem::path& dir) {
  for (std::size_t f = 0; f < frames.size(); ++f) save_observations(frames[f], dir / frame_name(static_cast<int>(f)));
}

std::vector<ObservationSet> load_observation_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw LoadError("observation directory " + dir.string() + " does not exist");
  std::vector<ObservationSet> frames;
  for (int f = 0;; ++f) {
    const auto fd = dir / frame_name(f);
    if (!std::filesystem::is_directory(fd)) break;
    frames.push_back(load_observations(fd));
  }
  return frames;
}

}  // namespace percap
