#include "aviary/wild.hpp"

#include <fstream>

#include <json.hpp>

#include "aviary/errors.hpp"

namespace aviary {

using nlohmann::json;

std::string bucket_name(LengthBucket b) {
  switch (b) {
    case LengthBucket::Short:
      return "<=100";
    case LengthBucket::Medium:
      return "100-300";
    case LengthBucket::Long:
      return ">300";
  }
  throw DataError("unknown bucket");
}

LengthBucket bucket_for_frames(int n_frames) {
  if (n_frames <= 100) return LengthBucket::Short;
  if (n_frames <= 300) return LengthBucket::Medium;
  return LengthBucket::Long;
}

namespace {

LengthBucket bucket_from_name(const std::string& name) {
  if (name == "<=100") return LengthBucket::Short;
  if (name == "100-300") return LengthBucket::Medium;
  if (name == ">300") return LengthBucket::Long;
  throw DataError("unknown bucket label: " + name);
}

json point_to_json(const Vec3& p) { return json::array({p.x(), p.y(), p.z()}); }

Vec3 point_from_json(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 3)
    throw DataError(std::string("manifest field ") + field +
                    " must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

WildManifest load_wild_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("examples") ||
      !doc["examples"].is_array())
    throw DataError("manifest must be an object with an examples array");

  WildManifest manifest;
  manifest.fps = doc.value("fps", 40.0);
  if (!(manifest.fps > 0.0)) throw DataError("manifest fps must be positive");
  for (const json& je : doc["examples"]) {
    WildExample ex;
    try {
      ex.index = je.at("index").get<int>();
      ex.target_id = je.at("target_id").get<int>();
      ex.frame_start = je.at("frame_start").get<int>();
      ex.frame_end = je.at("frame_end").get<int>();
      ex.start_head = point_from_json(je.at("start_head"), "start_head");
      ex.start_tail = point_from_json(je.at("start_tail"), "start_tail");
      ex.end_head = point_from_json(je.at("end_head"), "end_head");
      ex.end_tail = point_from_json(je.at("end_tail"), "end_tail");
      ex.bucket = bucket_from_name(je.at("bucket").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError("malformed example in " + path + ": " + e.what());
    }
    if (ex.frame_end <= ex.frame_start)
      throw DataError("example " + std::to_string(ex.index) +
                      ": frame_end must exceed frame_start");
    if (ex.bucket != bucket_for_frames(ex.n_frames()))
      throw ManifestError("example " + std::to_string(ex.index) +
                          ": bucket does not match frame count");
    manifest.examples.push_back(ex);
  }
  return manifest;
}

void save_wild_manifest(const std::string& path,
                        const WildManifest& manifest) {
  json doc;
  doc["fps"] = manifest.fps;
  doc["examples"] = json::array();
  for (const WildExample& ex : manifest.examples) {
    doc["examples"].push_back({{"index", ex.index},
                               {"target_id", ex.target_id},
                               {"frame_start", ex.frame_start},
                               {"frame_end", ex.frame_end},
                               {"start_head", point_to_json(ex.start_head)},
                               {"start_tail", point_to_json(ex.start_tail)},
                               {"end_head", point_to_json(ex.end_head)},
                               {"end_tail", point_to_json(ex.end_tail)},
                               {"bucket", bucket_name(ex.bucket)}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace aviary
