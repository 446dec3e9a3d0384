#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "thermloc/dictionary.hpp"
#include "thermloc/ekf.hpp"
#include "thermloc/geometry.hpp"
#include "thermloc/map_builder.hpp"
#include "thermloc/pose_solver.hpp"

namespace thermloc {

// ----------------------------------------------------------- ground truth

struct TrajectorySpec {
    enum class Kind { Circle, Lissajous, WaypointSmooth };
    enum class YawPolicy { Fixed, Tangent, RadialOut };

    Kind kind = Kind::Circle;
    double duration = 60.0;  // seconds
    YawPolicy yaw_policy = YawPolicy::RadialOut;
    double fixed_yaw = 0.0;

    // circle
    Vec3 center{0.0, 0.0, 1.5};
    double radius = 1.0;
    double angular_rate = 0.2;  // rad/s
    double phase = 0.0;

    // lissajous, per axis around center: c + A*sin(rate*t + phase)
    Vec3 amplitude{1.0, 1.0, 0.2};
    Vec3 rates{0.2, 0.4, 0.6};
    Vec3 phases{0.0, 0.0, 0.0};

    // waypoint-smooth: closed periodic cubic spline over [0, duration]
    std::vector<Vec3> waypoints;
};

struct GroundTruthSample {
    Pose T_WR;
    Vec3 v_W = Vec3::Zero();
    Vec3 a_W = Vec3::Zero();
    Vec3 omega_R = Vec3::Zero();
};

// Precomputes spline coefficients once; evaluation is analytic and C^2.
class Trajectory {
public:
    explicit Trajectory(const TrajectorySpec& spec);
    GroundTruthSample sample(double t) const;  // throws OutOfRange outside [0, duration]
    double duration() const { return spec_.duration; }

private:
    TrajectorySpec spec_;
    // periodic cubic spline data (waypoint kind)
    std::vector<Vec3> spline_m_;  // second derivatives at knots
    double knot_dt_ = 0.0;

    void position_derivatives(double t, Vec3* p, Vec3* v, Vec3* a) const;
    void yaw_and_rate(double t, const Vec3& p, const Vec3& v, const Vec3& a, double* yaw,
                      double* yaw_rate) const;
};

GroundTruthSample ground_truth(const TrajectorySpec& spec, double t);

// ------------------------------------------------------------ configuration

struct MarkerLayoutEntry {
    int id = 0;
    Pose T_WM;
    double side = 0.2;
};

struct SimNoise {
    double pixel_sigma = 0.0;
    double accel_noise_density = 0.02;
    double gyro_noise_density = 0.002;
    double accel_bias_walk = 0.0005;
    double gyro_bias_walk = 5e-5;
    Vec3 initial_accel_bias = Vec3::Zero();
    Vec3 initial_gyro_bias = Vec3::Zero();
    double meas_sigma_p = 0.02;      // EKF pose-measurement noise model
    double meas_sigma_theta = 0.01;
};

struct VisibilityGates {
    double min_range = 0.1;
    double max_range = 8.0;
    double max_view_angle_deg = 70.0;
    double dropout_prob = 0.0;
};

struct RenderSettings {
    double background = 60.0;
    double hot_intensity = 200.0;
    double noise_sigma = 2.0;
    double attenuation = 1.0;
};

struct EkfInitSettings {
    double gate_threshold = 22.46;
    double sigma_p = 0.02;
    double sigma_v = 0.3;
    double sigma_theta = 0.02;
    double sigma_bf = 0.05;
    double sigma_bw = 0.01;
};

struct SimConfig {
    uint64_t seed = 0;
    double imu_hz = 200.0;
    double camera_hz = 30.0;
    TrajectorySpec trajectory;
    CameraIntrinsics intrinsics;
    Pose T_RC;
    int anchor_id = 0;
    std::vector<MarkerLayoutEntry> markers;
    SimNoise noise;
    VisibilityGates visibility;
    enum class ObsMode { Corners, Render } mode = ObsMode::Corners;
    RenderSettings render;
    MapBuildParams map_params;
    EkfInitSettings ekf;

    void validate() const;  // throws ConfigError
    const MarkerLayoutEntry* find_marker(int id) const;
    EkfNoiseConfig ekf_noise() const;
};

// Strict JSON config I/O; unknown keys are rejected.
SimConfig load_sim_config(const std::string& path);
void save_sim_config(const SimConfig& cfg, const std::string& path);
SimConfig parse_sim_config_json(const std::string& text, const std::string& origin);
std::string sim_config_to_json(const SimConfig& cfg);

// 10 markers on the walls of a 6x6x3 m room, circle trajectory; the default
// evaluation scene.
SimConfig make_room_config();

// ----------------------------------------------------------- synthesized data

struct SynthImu {
    std::vector<ImuSample> samples;     // t = k/imu_hz, k = 1..N
    std::vector<Vec3> true_accel_bias;  // bias value used at each sample
    std::vector<Vec3> true_gyro_bias;

    Vec3 accel_bias_at(double t, const SimConfig& cfg) const;
    Vec3 gyro_bias_at(double t, const SimConfig& cfg) const;
};

SynthImu synth_imu(const SimConfig& cfg);

struct ObservationFrame {
    int frame_id = 0;
    double t = 0.0;
    std::vector<MarkerObservation> observations;
    // render-mode extras mirrored from the detector (0 in corners mode)
    std::vector<int> rotations;
    std::vector<int> bit_errors;
};

std::vector<ObservationFrame> synth_observations(const SimConfig& cfg);

// Pose measurements made from ground truth corrupted by the configured
// sigma_p / sigma_theta; used for filter-consistency evaluation.
std::vector<PoseMeasurement> synth_pose_measurements(const SimConfig& cfg, uint64_t seed);

// ------------------------------------------------------------- closed loop

struct FiducialPoseEntry {
    int frame_id = 0;
    double t = 0.0;
    Pose T_WR;
    double rms_px = 0.0;
    int markers_used = 0;
};

struct RunMetrics {
    double fiducial_rmse = 0.0;
    double ekf_rmse = 0.0;
    double fiducial_jitter = 0.0;
    double ekf_jitter = 0.0;
    double map_max_pos_err = 0.0;
    double map_max_rot_err = 0.0;
    int markers_mapped = 0;
    int frames_total = 0;
    int frames_with_pose = 0;
    bool empty_run = false;  // no usable detections
};

struct SimRun {
    SimConfig config;
    SynthImu imu;
    std::vector<ObservationFrame> frames;
    MarkerMap map;
    std::vector<FiducialPoseEntry> fiducial_log;
    std::vector<NavState> ekf_log;
    RunMetrics metrics;
};

// Map-building pass, frozen-map localization pass, EKF pass, metrics.
SimRun run_closed_loop(const SimConfig& cfg);

// Replay pieces used by the CLI (and the closed loop itself).
MarkerMap build_map_from_frames(const SimConfig& cfg,
                                const std::vector<ObservationFrame>& frames);
std::vector<FiducialPoseEntry> localize_frames(const SimConfig& cfg, const MarkerMap& map,
                                               const std::vector<ObservationFrame>& frames);
std::vector<NavState> run_ekf_pass(const SimConfig& cfg, const SynthImu& imu,
                                   const std::vector<FiducialPoseEntry>& fiducial);
RunMetrics compute_metrics(const SimConfig& cfg, const MarkerMap& map,
                           const std::vector<FiducialPoseEntry>& fiducial,
                           const std::vector<NavState>& ekf_log, int frames_total);

// ------------------------------------------------------------- persistence

void save_run(const SimRun& run, const std::string& dir);
std::vector<ObservationFrame> load_observations_csv(const std::string& path,
                                                    double camera_hz);
SynthImu load_imu_csv(const std::string& path);
std::vector<FiducialPoseEntry> load_fiducial_csv(const std::string& path);
std::vector<NavState> load_ekf_csv(const std::string& path);
void save_metrics(const RunMetrics& m, const std::string& path);

// --------------------------------------------------------- consistency (NEES)

struct ConsistencyResult {
    double avg_nees = 0.0;
    double max_asymmetry = 0.0;   // max ||P - P^T||_inf over every step
    bool psd_ok = true;           // P + 1e-12 I admitted a Cholesky factor throughout
    int runs = 0;
    long nees_count = 0;
};

// Monte-Carlo filter consistency with matched noise and P0-sampled initial
// errors; NEES accumulated at every correction.
ConsistencyResult run_filter_consistency(const SimConfig& cfg, int runs, uint64_t seed0);

// Deterministic stream split for all simulator randomness.
uint64_t derive_seed(uint64_t base, uint64_t stream);

}  // namespace thermloc
