#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "thermloc/pose_solver.hpp"

namespace thermloc {

struct MarkerMapEntry {
    int id = -1;
    Pose pose;  // T_WM
    double side_length = 0.2;
    double quality_error = 0.0;  // running reprojection error, pixels
    long observation_count = 0;
};

// Incremental marker map. The anchor entry seeds the map; its pose never
// changes and entries are never removed.
class MarkerMap {
public:
    MarkerMap() = default;
    MarkerMap(int anchor_id, const Pose& anchor_pose, double side_length);

    int anchor_id() const { return anchor_id_; }
    const std::map<int, MarkerMapEntry>& entries() const { return entries_; }
    bool contains(int id) const { return entries_.count(id) != 0; }
    const MarkerMapEntry& entry(int id) const { return entries_.at(id); }
    size_t size() const { return entries_.size(); }

    void add_entry(const MarkerMapEntry& e);          // throws on duplicates
    void update_quality(int id, double frame_error, double alpha);
    void restore_stats(int id, double quality_error, long observation_count);

    std::map<int, MapEntryForPose> pose_entries() const;

private:
    int anchor_id_ = -1;
    std::map<int, MarkerMapEntry> entries_;
};

MarkerMap init_map(int anchor_id, const Pose& anchor_pose, double side_length);

struct MapBuildParams {
    double ema_alpha = 0.1;          // quality error update rate
    double ambiguity_gate = 0.8;     // new-marker admission: planar ambiguity
    double camera_rms_gate = 2.0;    // new-marker admission: camera pose RMS, px
    double marker_side = 0.2;        // side length assigned to new markers, m
};

struct FrameResult {
    std::optional<CameraPoseEstimate> camera_pose;
    std::vector<int> added_ids;
    std::vector<std::pair<int, std::string>> skipped;  // id -> reason
};

// One Algorithm-1 step: split known/new, weighted camera pose from the known
// markers, EMA quality update, then admission of new markers via
// T_WM = T_WC * T_CM. Soft-fails (no known marker, gated candidates) never
// throw.
FrameResult process_frame(MarkerMap& map, const std::vector<MarkerObservation>& detections,
                          const CameraIntrinsics& intr, const MapBuildParams& params);

// Frozen-map localization; never mutates the map.
std::optional<CameraPoseEstimate> localize(const MarkerMap& map,
                                           const std::vector<MarkerObservation>& detections,
                                           const CameraIntrinsics& intr);

// Structured-text map file, lossless round trip.
void save_map(const MarkerMap& map, const std::string& path);
MarkerMap load_map(const std::string& path);  // throws MalformedMapFile

}  // namespace thermloc
