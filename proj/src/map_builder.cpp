#include "thermloc/map_builder.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace thermloc {

MarkerMap::MarkerMap(int anchor_id, const Pose& anchor_pose, double side_length)
    : anchor_id_(anchor_id) {
    if (!(side_length > 0.0)) throw NonPositiveSide("anchor side_length must be positive");
    MarkerMapEntry e;
    e.id = anchor_id;
    e.pose = anchor_pose;
    e.side_length = side_length;
    e.quality_error = 0.0;
    e.observation_count = 0;
    entries_[anchor_id] = e;
}

void MarkerMap::add_entry(const MarkerMapEntry& e) {
    if (entries_.count(e.id))
        throw Error("marker id already present in map: " + std::to_string(e.id));
    if (!(e.side_length > 0.0)) throw NonPositiveSide("entry side_length must be positive");
    entries_[e.id] = e;
}

void MarkerMap::update_quality(int id, double frame_error, double alpha) {
    auto& e = entries_.at(id);
    e.quality_error = (1.0 - alpha) * e.quality_error + alpha * frame_error;
    ++e.observation_count;
}

void MarkerMap::restore_stats(int id, double quality_error, long observation_count) {
    auto& e = entries_.at(id);
    e.quality_error = quality_error;
    e.observation_count = observation_count;
}

std::map<int, MapEntryForPose> MarkerMap::pose_entries() const {
    std::map<int, MapEntryForPose> out;
    for (const auto& [id, e] : entries_)
        out[id] = MapEntryForPose{e.pose, e.side_length, e.quality_error};
    return out;
}

MarkerMap init_map(int anchor_id, const Pose& anchor_pose, double side_length) {
    return MarkerMap(anchor_id, anchor_pose, side_length);
}

FrameResult process_frame(MarkerMap& map, const std::vector<MarkerObservation>& detections,
                          const CameraIntrinsics& intr, const MapBuildParams& params) {
    FrameResult result;

    std::vector<MarkerObservation> known, fresh;
    for (const auto& det : detections)
        (map.contains(det.id) ? known : fresh).push_back(det);

    // camera pose is undefined without a known marker; nothing can be added
    if (known.empty()) {
        for (const auto& det : fresh) result.skipped.emplace_back(det.id, "no known marker in frame");
        return result;
    }

    CameraPoseEstimate cam;
    try {
        cam = estimate_camera_pose(known, map.pose_entries(), intr);
    } catch (const Error& e) {
        for (const auto& det : detections) result.skipped.emplace_back(det.id, e.what());
        return result;
    }
    result.camera_pose = cam;

    for (const auto& [id, err] : cam.per_marker_errors)
        map.update_quality(id, err, params.ema_alpha);

    for (const auto& det : fresh) {
        if (cam.rms_reprojection > params.camera_rms_gate) {
            result.skipped.emplace_back(det.id, "camera pose rms above gate");
            continue;
        }
        MarkerPoseResult mp;
        try {
            mp = estimate_marker_pose(det, params.marker_side, intr);
        } catch (const Error& e) {
            result.skipped.emplace_back(det.id, e.what());
            continue;
        }
        if (mp.ambiguity_ratio > params.ambiguity_gate) {
            result.skipped.emplace_back(det.id, "planar ambiguity above gate");
            continue;
        }
        MarkerMapEntry entry;
        entry.id = det.id;
        entry.pose = compose(cam.T_WC, mp.T_CM);
        entry.side_length = params.marker_side;
        entry.quality_error = mp.rms_px;
        entry.observation_count = 1;
        map.add_entry(entry);
        result.added_ids.push_back(det.id);
    }
    return result;
}

std::optional<CameraPoseEstimate> localize(const MarkerMap& map,
                                           const std::vector<MarkerObservation>& detections,
                                           const CameraIntrinsics& intr) {
    std::vector<MarkerObservation> known;
    for (const auto& det : detections)
        if (map.contains(det.id)) known.push_back(det);
    if (known.empty()) return std::nullopt;
    try {
        return estimate_camera_pose(known, map.pose_entries(), intr);
    } catch (const Error&) {
        return std::nullopt;
    }
}

void save_map(const MarkerMap& map, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["anchor_id"] = map.anchor_id();
    auto& markers = j["markers"] = nlohmann::json::array();
    for (const auto& [id, e] : map.entries()) {
        const auto pose = e.pose.to_array();
        markers.push_back({{"id", id},
                           {"side_length", e.side_length},
                           {"pose", pose},
                           {"quality_error", e.quality_error},
                           {"observation_count", e.observation_count}});
    }
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open map file for writing: " + path);
    f << j.dump(2) << "\n";
}

MarkerMap load_map(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MalformedMapFile("cannot open map file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedMapFile("map file " + path + ": " + e.what());
    }
    auto field_error = [&](const std::string& what) {
        return MalformedMapFile("map file " + path + ": " + what);
    };
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw field_error("missing or unsupported 'version'");
    if (!j.contains("anchor_id")) throw field_error("missing 'anchor_id'");
    if (!j.contains("markers") || !j["markers"].is_array())
        throw field_error("missing 'markers' array");

    const int anchor_id = j["anchor_id"].get<int>();
    MarkerMap map;
    bool anchor_seen = false;
    for (const auto& m : j["markers"]) {
        try {
            MarkerMapEntry e;
            e.id = m.at("id").get<int>();
            e.side_length = m.at("side_length").get<double>();
            const auto pose = m.at("pose");
            if (!pose.is_array() || pose.size() != 7)
                throw field_error("marker pose must be 7 numbers");
            std::array<double, 7> a;
            for (int i = 0; i < 7; ++i) a[i] = pose[i].get<double>();
            e.pose = Pose::from_array(a);
            e.quality_error = m.at("quality_error").get<double>();
            e.observation_count = m.at("observation_count").get<long>();
            if (e.id == anchor_id) {
                if (anchor_seen) throw field_error("duplicate anchor entry");
                map = MarkerMap(anchor_id, e.pose, e.side_length);
                anchor_seen = true;
            }
        } catch (const nlohmann::json::exception& e) {
            throw field_error(std::string("marker entry: ") + e.what());
        }
    }
    if (!anchor_seen) throw field_error("anchor_id has no matching marker entry");
    // second pass for non-anchor entries, preserving all stored fields
    for (const auto& m : j["markers"]) {
        MarkerMapEntry e;
        e.id = m.at("id").get<int>();
        if (e.id == anchor_id) {
            map.restore_stats(anchor_id, m.at("quality_error").get<double>(),
                              m.at("observation_count").get<long>());
            continue;
        }
        e.side_length = m.at("side_length").get<double>();
        std::array<double, 7> a;
        for (int i = 0; i < 7; ++i) a[i] = m.at("pose")[i].get<double>();
        e.pose = Pose::from_array(a);
        e.quality_error = m.at("quality_error").get<double>();
        e.observation_count = m.at("observation_count").get<long>();
        map.add_entry(e);
    }
    return map;
}

}  // namespace thermloc
