#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "format.hpp"
#include "racelab/errors.hpp"
#include "racelab/track.hpp"

namespace racelab {
namespace {

using nlohmann::json;
using detail::fmt_exact;

Vec2 read_point(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ParseError("expected [x, y] pair, got " + j.dump());
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Vec2> read_polyline(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array()) {
    throw ParseError(std::string("missing array '") + key + "'");
  }
  std::vector<Vec2> out;
  out.reserve(doc[key].size());
  for (const auto& p : doc[key]) out.push_back(read_point(p));
  return out;
}

std::string point_text(Vec2 p) { return "[" + fmt_exact(p.x) + ", " + fmt_exact(p.y) + "]"; }

void write_polyline(std::ostringstream& os, const std::vector<Vec2>& line) {
  os << "[";
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (i) os << ",";
    os << (i % 4 == 0 ? "\n    " : " ") << point_text(line[i]);
  }
  os << "\n  ]";
}

}  // namespace

Track parse_track(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("track file: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("track file: top level must be an object");

  try {
    std::string name = doc.value("name", "");
    auto left = read_polyline(doc, "left_barrier");
    auto right = read_polyline(doc, "right_barrier");

    if (!doc.contains("checkpoints") || !doc["checkpoints"].is_array()) {
      throw ParseError("missing array 'checkpoints'");
    }
    std::vector<Gate> gates;
    for (const auto& g : doc["checkpoints"]) {
      const auto id = g.at("id").get<std::string>();
      if (id.size() != 1) throw ParseError("gate id must be a single letter, got '" + id + "'");
      gates.push_back({id[0], read_point(g.at("p0")), read_point(g.at("p1"))});
    }

    const auto& sp = doc.at("spawn");
    Pose2D spawn{sp.at("x").get<double>(), sp.at("y").get<double>(), sp.at("heading").get<double>()};

    std::map<std::string, std::string> metadata;
    if (doc.contains("metadata")) {
      for (const auto& [k, v] : doc["metadata"].items()) metadata[k] = v.get<std::string>();
    }
    return Track(std::move(name), std::move(left), std::move(right), std::move(gates), spawn,
                 std::move(metadata));
  } catch (const json::exception& e) {
    throw ParseError(std::string("track file: ") + e.what());
  }
}

std::string track_to_text(const Track& track) {
  std::ostringstream os;
  os << "{\n  \"name\": " << json(track.name()).dump() << ",\n";
  os << "  \"left_barrier\": ";
  write_polyline(os, track.left_barrier());
  os << ",\n  \"right_barrier\": ";
  write_polyline(os, track.right_barrier());
  os << ",\n  \"checkpoints\": [";
  const auto& gates = track.checkpoints();
  for (std::size_t i = 0; i < gates.size(); ++i) {
    os << (i ? "," : "") << "\n    {\"id\": \"" << gates[i].id << "\", \"p0\": " << point_text(gates[i].p0)
       << ", \"p1\": " << point_text(gates[i].p1) << "}";
  }
  os << "\n  ],\n";
  const auto& s = track.spawn();
  os << "  \"spawn\": {\"x\": " << fmt_exact(s.x) << ", \"y\": " << fmt_exact(s.y)
     << ", \"heading\": " << fmt_exact(s.heading) << "},\n";
  os << "  \"metadata\": " << json(track.metadata()).dump() << "\n}\n";
  return os.str();
}

Track load_track(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open track file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_track(ss.str());
}

void save_track(const Track& track, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write track file " + path.string());
  out << track_to_text(track);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace racelab
