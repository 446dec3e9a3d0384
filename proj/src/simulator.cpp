#include "thermloc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "thermloc/detector.hpp"
#include "thermloc/render.hpp"

namespace thermloc {

uint64_t derive_seed(uint64_t base, uint64_t stream) {
    auto splitmix = [](uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    };
    return splitmix(base ^ splitmix(stream + 0x5150A5B1D0F0C0E3ull));
}

// --------------------------------------------------------------- trajectory

Trajectory::Trajectory(const TrajectorySpec& spec) : spec_(spec) {
    if (!(spec_.duration > 0.0)) throw ConfigError("trajectory duration must be positive");
    if (spec_.kind == TrajectorySpec::Kind::WaypointSmooth) {
        const int K = static_cast<int>(spec_.waypoints.size());
        if (K < 3) throw ConfigError("waypoint trajectory needs at least 3 waypoints");
        knot_dt_ = spec_.duration / K;
        // periodic cubic spline: solve the cyclic system for the knot second
        // derivatives, one dense solve per axis
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K, K);
        Eigen::MatrixXd rhs(K, 3);
        const double h = knot_dt_;
        for (int i = 0; i < K; ++i) {
            A(i, (i + K - 1) % K) += h / 6.0;
            A(i, i) += 2.0 * h / 3.0;
            A(i, (i + 1) % K) += h / 6.0;
            const Vec3 d = (spec_.waypoints[(i + 1) % K] - 2.0 * spec_.waypoints[i] +
                            spec_.waypoints[(i + K - 1) % K]) /
                           h;
            rhs.row(i) = d.transpose();
        }
        const Eigen::MatrixXd m = A.partialPivLu().solve(rhs);
        spline_m_.resize(K);
        for (int i = 0; i < K; ++i) spline_m_[i] = m.row(i).transpose();
    }
}

void Trajectory::position_derivatives(double t, Vec3* p, Vec3* v, Vec3* a) const {
    switch (spec_.kind) {
        case TrajectorySpec::Kind::Circle: {
            const double ang = spec_.angular_rate * t + spec_.phase;
            const double r = spec_.radius, w = spec_.angular_rate;
            *p = spec_.center + r * Vec3(std::cos(ang), std::sin(ang), 0.0);
            *v = r * w * Vec3(-std::sin(ang), std::cos(ang), 0.0);
            *a = -r * w * w * Vec3(std::cos(ang), std::sin(ang), 0.0);
            break;
        }
        case TrajectorySpec::Kind::Lissajous: {
            for (int i = 0; i < 3; ++i) {
                const double ph = spec_.rates[i] * t + spec_.phases[i];
                (*p)[i] = spec_.center[i] + spec_.amplitude[i] * std::sin(ph);
                (*v)[i] = spec_.amplitude[i] * spec_.rates[i] * std::cos(ph);
                (*a)[i] = -spec_.amplitude[i] * spec_.rates[i] * spec_.rates[i] * std::sin(ph);
            }
            break;
        }
        case TrajectorySpec::Kind::WaypointSmooth: {
            const int K = static_cast<int>(spec_.waypoints.size());
            double tw = std::fmod(t, spec_.duration);
            if (tw < 0.0) tw += spec_.duration;
            int i = std::min(static_cast<int>(tw / knot_dt_), K - 1);
            const double s = tw - i * knot_dt_;
            const double h = knot_dt_;
            const Vec3& P0 = spec_.waypoints[i];
            const Vec3& P1 = spec_.waypoints[(i + 1) % K];
            const Vec3& M0 = spline_m_[i];
            const Vec3& M1 = spline_m_[(i + 1) % K];
            const Vec3 b = (P1 - P0) / h - h * (2.0 * M0 + M1) / 6.0;
            const Vec3 d = (M1 - M0) / (6.0 * h);
            *p = P0 + b * s + 0.5 * M0 * s * s + d * s * s * s;
            *v = b + M0 * s + 3.0 * d * s * s;
            *a = M0 + 6.0 * d * s;
            break;
        }
    }
}

void Trajectory::yaw_and_rate(double /*t*/, const Vec3& p, const Vec3& v, const Vec3& a,
                              double* yaw, double* yaw_rate) const {
    switch (spec_.yaw_policy) {
        case TrajectorySpec::YawPolicy::Fixed:
            *yaw = spec_.fixed_yaw;
            *yaw_rate = 0.0;
            break;
        case TrajectorySpec::YawPolicy::Tangent: {
            const double den = v.x() * v.x() + v.y() * v.y();
            if (den < 1e-12) {  // undefined heading; hold zero
                *yaw = 0.0;
                *yaw_rate = 0.0;
            } else {
                *yaw = std::atan2(v.y(), v.x());
                *yaw_rate = (v.x() * a.y() - v.y() * a.x()) / den;
            }
            break;
        }
        case TrajectorySpec::YawPolicy::RadialOut: {
            const Vec3 r = p - spec_.center;
            const double den = r.x() * r.x() + r.y() * r.y();
            if (den < 1e-12) {
                *yaw = 0.0;
                *yaw_rate = 0.0;
            } else {
                *yaw = std::atan2(r.y(), r.x());
                *yaw_rate = (r.x() * v.y() - r.y() * v.x()) / den;
            }
            break;
        }
    }
}

GroundTruthSample Trajectory::sample(double t) const {
    if (t < -1e-12 || t > spec_.duration + 1e-12)
        throw OutOfRange("trajectory time outside [0, duration]");
    GroundTruthSample out;
    Vec3 p, v, a;
    position_derivatives(t, &p, &v, &a);
    double yaw, yaw_rate;
    yaw_and_rate(t, p, v, a, &yaw, &yaw_rate);
    out.T_WR.rotation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    out.T_WR.translation = p;
    out.v_W = v;
    out.a_W = a;
    out.omega_R = Vec3(0.0, 0.0, yaw_rate);  // level flight, yaw-only attitude
    return out;
}

GroundTruthSample ground_truth(const TrajectorySpec& spec, double t) {
    return Trajectory(spec).sample(t);
}

// ------------------------------------------------------------ configuration

void SimConfig::validate() const {
    if (!(imu_hz > 0.0) || !(camera_hz > 0.0)) throw ConfigError("rates must be positive");
    if (imu_hz < camera_hz) throw ConfigError("imu_hz must be >= camera_hz");
    intrinsics.validate();
    if (markers.empty()) throw ConfigError("marker layout is empty");
    if (!find_marker(anchor_id)) throw ConfigError("anchor_id not present in the layout");
    for (const auto& m : markers)
        if (!(m.side > 0.0)) throw ConfigError("marker side must be positive");
    if (visibility.dropout_prob < 0.0 || visibility.dropout_prob > 1.0)
        throw ConfigError("dropout_prob must be in [0,1]");
    if (mode == ObsMode::Render) {
        for (const auto& m : markers)
            if (m.id < 0 || m.id >= static_cast<int>(default_dictionary().entries.size()))
                throw ConfigError("render mode requires ids within the default dictionary");
    }
    Trajectory traj(trajectory);  // validates trajectory parameters
}

const MarkerLayoutEntry* SimConfig::find_marker(int id) const {
    for (const auto& m : markers)
        if (m.id == id) return &m;
    return nullptr;
}

EkfNoiseConfig SimConfig::ekf_noise() const {
    EkfNoiseConfig n;
    n.accel_noise_density = noise.accel_noise_density;
    n.gyro_noise_density = noise.gyro_noise_density;
    n.accel_bias_walk = noise.accel_bias_walk;
    n.gyro_bias_walk = noise.gyro_bias_walk;
    return n;
}

// --------------------------------------------------------------- synth IMU

SynthImu synth_imu(const SimConfig& cfg) {
    const Trajectory traj(cfg.trajectory);
    const double dt = 1.0 / cfg.imu_hz;
    const long N = std::lround(cfg.trajectory.duration * cfg.imu_hz);
    const Vec3 gravity(0.0, 0.0, -9.81);

    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto draw3 = [&]() { return Vec3(gauss(rng), gauss(rng), gauss(rng)); };

    const double f_noise_std = cfg.noise.accel_noise_density * std::sqrt(cfg.imu_hz);
    const double w_noise_std = cfg.noise.gyro_noise_density * std::sqrt(cfg.imu_hz);
    const double bf_walk_std = cfg.noise.accel_bias_walk * std::sqrt(dt);
    const double bw_walk_std = cfg.noise.gyro_bias_walk * std::sqrt(dt);

    SynthImu out;
    out.samples.reserve(N);
    out.true_accel_bias.reserve(N);
    out.true_gyro_bias.reserve(N);

    Vec3 b_f = cfg.noise.initial_accel_bias;
    Vec3 b_w = cfg.noise.initial_gyro_bias;
    for (long k = 1; k <= N; ++k) {
        const double t = static_cast<double>(k) / cfg.imu_hz;
        b_f += bf_walk_std * draw3();
        b_w += bw_walk_std * draw3();
        const GroundTruthSample gt = traj.sample(std::min(t, cfg.trajectory.duration));
        ImuSample s;
        s.t = t;
        s.f = gt.T_WR.rotation.conjugate() * (gt.a_W - gravity) + b_f + f_noise_std * draw3();
        s.w = gt.omega_R + b_w + w_noise_std * draw3();
        out.samples.push_back(s);
        out.true_accel_bias.push_back(b_f);
        out.true_gyro_bias.push_back(b_w);
    }
    return out;
}

Vec3 SynthImu::accel_bias_at(double t, const SimConfig& cfg) const {
    if (samples.empty()) return cfg.noise.initial_accel_bias;
    const long k = std::lround(t * cfg.imu_hz);
    if (k < 1) return cfg.noise.initial_accel_bias;
    return true_accel_bias[std::min<size_t>(k - 1, true_accel_bias.size() - 1)];
}

Vec3 SynthImu::gyro_bias_at(double t, const SimConfig& cfg) const {
    if (samples.empty()) return cfg.noise.initial_gyro_bias;
    const long k = std::lround(t * cfg.imu_hz);
    if (k < 1) return cfg.noise.initial_gyro_bias;
    return true_gyro_bias[std::min<size_t>(k - 1, true_gyro_bias.size() - 1)];
}

// -------------------------------------------------------------- observations

namespace {

bool marker_visible(const SimConfig& cfg, const Pose& T_CW, const Pose& T_WC,
                    const MarkerLayoutEntry& m, std::array<Vec2, 4>* corners) {
    const Vec3 center_C = T_CW.apply(m.T_WM.translation);
    if (center_C.z() < cfg.visibility.min_range || center_C.z() > cfg.visibility.max_range)
        return false;
    const Vec3 normal_W = m.T_WM.rotation * Vec3::UnitZ();
    const Vec3 to_cam = T_WC.translation - m.T_WM.translation;
    const double dist = to_cam.norm();
    if (dist < 1e-9) return false;
    const double cos_view = normal_W.dot(to_cam / dist);
    if (cos_view < std::cos(cfg.visibility.max_view_angle_deg * M_PI / 180.0)) return false;

    const auto local = marker_corners_local(m.side);
    for (int i = 0; i < 4; ++i) {
        Vec2 px;
        try {
            px = project(cfg.intrinsics, T_CW, m.T_WM.apply(local[i]));
        } catch (const BehindCamera&) {
            return false;
        }
        if (px.x() < 0.0 || px.y() < 0.0 || px.x() > cfg.intrinsics.width - 1 ||
            px.y() > cfg.intrinsics.height - 1)
            return false;
        (*corners)[i] = px;
    }
    return true;
}

}  // namespace

std::vector<ObservationFrame> synth_observations(const SimConfig& cfg) {
    const Trajectory traj(cfg.trajectory);
    const long frames_n = std::lround(std::floor(cfg.trajectory.duration * cfg.camera_hz)) + 1;

    std::mt19937_64 rng(derive_seed(cfg.seed, 2));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    std::vector<ObservationFrame> out;
    out.reserve(frames_n);

    DetectorParams det_params;  // defaults; render-mode pipeline

    for (long j = 0; j < frames_n; ++j) {
        ObservationFrame frame;
        frame.frame_id = static_cast<int>(j);
        frame.t = static_cast<double>(j) / cfg.camera_hz;
        const GroundTruthSample gt = traj.sample(std::min(frame.t, cfg.trajectory.duration));
        const Pose T_WC = compose(gt.T_WR, cfg.T_RC);
        const Pose T_CW = T_WC.inverse();

        if (cfg.mode == SimConfig::ObsMode::Corners) {
            for (const auto& m : cfg.markers) {
                std::array<Vec2, 4> corners;
                if (!marker_visible(cfg, T_CW, T_WC, m, &corners)) continue;
                if (cfg.visibility.dropout_prob > 0.0 &&
                    uniform(rng) < cfg.visibility.dropout_prob)
                    continue;
                MarkerObservation obs;
                obs.id = m.id;
                for (int i = 0; i < 4; ++i)
                    obs.corners[i] =
                        corners[i] + cfg.noise.pixel_sigma * Vec2(gauss(rng), gauss(rng));
                frame.observations.push_back(obs);
                frame.rotations.push_back(0);
                frame.bit_errors.push_back(0);
            }
        } else {
            std::vector<SceneMarker> scene;
            scene.reserve(cfg.markers.size());
            for (const auto& m : cfg.markers) {
                SceneMarker sm;
                sm.spec = MarkerSpec::for_grid(m.id, m.side, default_dictionary().n);
                sm.grid = default_dictionary().entries[m.id];
                sm.T_WM = m.T_WM;
                sm.hot_intensity = cfg.render.hot_intensity;
                scene.push_back(sm);
            }
            RenderOptions ropt;
            ropt.noise_sigma = cfg.render.noise_sigma;
            ropt.contrast_attenuation = cfg.render.attenuation;
            ropt.noise_seed = derive_seed(cfg.seed, 0x100000 + j);
            const GrayImage img =
                render_scene(scene, cfg.render.background, cfg.intrinsics, T_WC, ropt);
            for (const auto& det : detect(img, default_dictionary(), det_params)) {
                if (cfg.visibility.dropout_prob > 0.0 &&
                    uniform(rng) < cfg.visibility.dropout_prob)
                    continue;
                MarkerObservation obs;
                obs.id = det.id;
                obs.corners = det.corners;
                frame.observations.push_back(obs);
                frame.rotations.push_back(det.rotation);
                frame.bit_errors.push_back(det.bit_errors);
            }
        }
        out.push_back(std::move(frame));
    }
    return out;
}

std::vector<PoseMeasurement> synth_pose_measurements(const SimConfig& cfg, uint64_t seed) {
    const Trajectory traj(cfg.trajectory);
    const long frames_n = std::lround(std::floor(cfg.trajectory.duration * cfg.camera_hz)) + 1;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<PoseMeasurement> out;
    out.reserve(frames_n);
    for (long j = 0; j < frames_n; ++j) {
        const double t = static_cast<double>(j) / cfg.camera_hz;
        const GroundTruthSample gt = traj.sample(std::min(t, cfg.trajectory.duration));
        const Quat q_true = gt.T_WR.rotation;
        const Vec3 p_true = q_true.conjugate() * gt.T_WR.translation;

        const Vec3 dtheta(gauss(rng), gauss(rng), gauss(rng));
        const Vec3 dp(gauss(rng), gauss(rng), gauss(rng));
        Pose T_WR_meas;
        T_WR_meas.rotation = (q_true * so3_exp(cfg.noise.meas_sigma_theta * dtheta)).normalized();
        T_WR_meas.translation = T_WR_meas.rotation * (p_true + cfg.noise.meas_sigma_p * dp);

        PoseMeasurement m;
        m.T_WC = compose(T_WR_meas, cfg.T_RC);
        m.t = t;
        m.sigma_p = cfg.noise.meas_sigma_p;
        m.sigma_theta = cfg.noise.meas_sigma_theta;
        out.push_back(m);
    }
    return out;
}

// -------------------------------------------------------------- closed loop

MarkerMap build_map_from_frames(const SimConfig& cfg,
                                const std::vector<ObservationFrame>& frames) {
    const MarkerLayoutEntry* anchor = cfg.find_marker(cfg.anchor_id);
    if (!anchor) throw ConfigError("anchor_id not present in the layout");
    MarkerMap map = init_map(anchor->id, anchor->T_WM, anchor->side);
    MapBuildParams params = cfg.map_params;
    params.marker_side = anchor->side;
    for (const auto& frame : frames) process_frame(map, frame.observations, cfg.intrinsics, params);
    return map;
}

std::vector<FiducialPoseEntry> localize_frames(const SimConfig& cfg, const MarkerMap& map,
                                               const std::vector<ObservationFrame>& frames) {
    std::vector<FiducialPoseEntry> out;
    const Pose T_CR = cfg.T_RC.inverse();
    for (const auto& frame : frames) {
        const auto est = localize(map, frame.observations, cfg.intrinsics);
        if (!est) continue;
        FiducialPoseEntry e;
        e.frame_id = frame.frame_id;
        e.t = frame.t;
        e.T_WR = compose(est->T_WC, T_CR);
        e.rms_px = est->rms_reprojection;
        e.markers_used = est->markers_used;
        out.push_back(e);
    }
    return out;
}

std::vector<NavState> run_ekf_pass(const SimConfig& cfg, const SynthImu& imu,
                                   const std::vector<FiducialPoseEntry>& fiducial) {
    if (fiducial.empty()) return {};

    EkfConfig ekf_cfg;
    ekf_cfg.noise = cfg.ekf_noise();
    ekf_cfg.T_RC = cfg.T_RC;
    ekf_cfg.gate_threshold = cfg.ekf.gate_threshold;

    const FiducialPoseEntry& first = fiducial.front();
    NavState x0;
    x0.q = first.T_WR.rotation;
    x0.p = x0.q.conjugate() * first.T_WR.translation;
    x0.v = Vec3::Zero();
    x0.t = first.t;

    ErrorCov P0 = ErrorCov::Zero();
    P0.block<3, 3>(0, 0) = cfg.ekf.sigma_p * cfg.ekf.sigma_p * Mat3::Identity();
    P0.block<3, 3>(3, 3) = cfg.ekf.sigma_v * cfg.ekf.sigma_v * Mat3::Identity();
    P0.block<3, 3>(6, 6) = cfg.ekf.sigma_theta * cfg.ekf.sigma_theta * Mat3::Identity();
    P0.block<3, 3>(9, 9) = cfg.ekf.sigma_bf * cfg.ekf.sigma_bf * Mat3::Identity();
    P0.block<3, 3>(12, 12) = cfg.ekf.sigma_bw * cfg.ekf.sigma_bw * Mat3::Identity();

    std::vector<PoseMeasurement> meas;
    meas.reserve(fiducial.size());
    for (size_t i = 1; i < fiducial.size(); ++i) {  // first entry seeds the state
        PoseMeasurement m;
        m.T_WC = compose(fiducial[i].T_WR, cfg.T_RC);
        m.t = fiducial[i].t;
        m.sigma_p = cfg.noise.meas_sigma_p;
        m.sigma_theta = cfg.noise.meas_sigma_theta;
        meas.push_back(m);
    }
    return process_stream(imu.samples, meas, x0, P0, ekf_cfg);
}

RunMetrics compute_metrics(const SimConfig& cfg, const MarkerMap& map,
                           const std::vector<FiducialPoseEntry>& fiducial,
                           const std::vector<NavState>& ekf_log, int frames_total) {
    const Trajectory traj(cfg.trajectory);
    RunMetrics m;
    m.frames_total = frames_total;
    m.frames_with_pose = static_cast<int>(fiducial.size());
    m.markers_mapped = static_cast<int>(map.size());
    m.empty_run = fiducial.empty();

    auto gt_pos = [&](double t) {
        return traj.sample(std::min(t, cfg.trajectory.duration)).T_WR.translation;
    };

    if (!fiducial.empty()) {
        double acc = 0.0;
        for (const auto& e : fiducial) acc += (e.T_WR.translation - gt_pos(e.t)).squaredNorm();
        m.fiducial_rmse = std::sqrt(acc / fiducial.size());

        double jit = 0.0;
        long pairs = 0;
        for (size_t i = 1; i < fiducial.size(); ++i) {
            if (fiducial[i].frame_id != fiducial[i - 1].frame_id + 1) continue;
            const Vec3 d_est = fiducial[i].T_WR.translation - fiducial[i - 1].T_WR.translation;
            const Vec3 d_gt = gt_pos(fiducial[i].t) - gt_pos(fiducial[i - 1].t);
            jit += (d_est - d_gt).norm();
            ++pairs;
        }
        m.fiducial_jitter = pairs > 0 ? jit / pairs : 0.0;
    }

    if (!ekf_log.empty()) {
        double acc = 0.0;
        for (const auto& x : ekf_log)
            acc += (x.world_position() - gt_pos(x.t)).squaredNorm();
        m.ekf_rmse = std::sqrt(acc / ekf_log.size());

        // EKF positions sampled at camera frame times (nearest log entry)
        double jit = 0.0;
        long pairs = 0;
        size_t li = 0;
        bool have_prev = false;
        Vec3 prev_est = Vec3::Zero(), prev_gt = Vec3::Zero();
        for (int j = 0; j < frames_total; ++j) {
            const double t = static_cast<double>(j) / cfg.camera_hz;
            while (li + 1 < ekf_log.size() &&
                   std::abs(ekf_log[li + 1].t - t) <= std::abs(ekf_log[li].t - t))
                ++li;
            if (std::abs(ekf_log[li].t - t) > 1.0 / cfg.camera_hz) {
                have_prev = false;
                continue;
            }
            const Vec3 est = ekf_log[li].world_position();
            const Vec3 gt = gt_pos(ekf_log[li].t);
            if (have_prev) {
                jit += ((est - prev_est) - (gt - prev_gt)).norm();
                ++pairs;
            }
            prev_est = est;
            prev_gt = gt;
            have_prev = true;
        }
        m.ekf_jitter = pairs > 0 ? jit / pairs : 0.0;
    }

    for (const auto& [id, entry] : map.entries()) {
        const MarkerLayoutEntry* gt = cfg.find_marker(id);
        if (!gt) continue;
        m.map_max_pos_err =
            std::max(m.map_max_pos_err, (entry.pose.translation - gt->T_WM.translation).norm());
        m.map_max_rot_err = std::max(
            m.map_max_rot_err, rotation_angle_between(entry.pose.rotation, gt->T_WM.rotation));
    }
    return m;
}

SimRun run_closed_loop(const SimConfig& cfg) {
    cfg.validate();
    SimRun run;
    run.config = cfg;
    run.imu = synth_imu(cfg);
    run.frames = synth_observations(cfg);
    run.map = build_map_from_frames(cfg, run.frames);
    run.fiducial_log = localize_frames(cfg, run.map, run.frames);
    run.ekf_log = run_ekf_pass(cfg, run.imu, run.fiducial_log);
    run.metrics = compute_metrics(cfg, run.map, run.fiducial_log, run.ekf_log,
                                  static_cast<int>(run.frames.size()));
    return run;
}

// ------------------------------------------------------- filter consistency

ConsistencyResult run_filter_consistency(const SimConfig& cfg, int runs, uint64_t seed0) {
    ConsistencyResult result;
    result.runs = runs;

    const Trajectory traj(cfg.trajectory);
    EkfConfig ekf_cfg;
    ekf_cfg.noise = cfg.ekf_noise();
    ekf_cfg.T_RC = cfg.T_RC;
    ekf_cfg.gate_threshold = cfg.ekf.gate_threshold;

    ErrorCov P0 = ErrorCov::Zero();
    P0.block<3, 3>(0, 0) = cfg.ekf.sigma_p * cfg.ekf.sigma_p * Mat3::Identity();
    P0.block<3, 3>(3, 3) = cfg.ekf.sigma_v * cfg.ekf.sigma_v * Mat3::Identity();
    P0.block<3, 3>(6, 6) = cfg.ekf.sigma_theta * cfg.ekf.sigma_theta * Mat3::Identity();
    P0.block<3, 3>(9, 9) = cfg.ekf.sigma_bf * cfg.ekf.sigma_bf * Mat3::Identity();
    P0.block<3, 3>(12, 12) = cfg.ekf.sigma_bw * cfg.ekf.sigma_bw * Mat3::Identity();

    double nees_acc = 0.0;
    long nees_n = 0;

    auto check_P = [&](const ErrorCov& P) {
        result.max_asymmetry =
            std::max(result.max_asymmetry, (P - P.transpose()).cwiseAbs().maxCoeff());
        ErrorCov shifted = P + 1e-12 * ErrorCov::Identity();
        Eigen::LLT<ErrorCov> llt(shifted);
        if (llt.info() != Eigen::Success) result.psd_ok = false;
    };

    for (int run = 0; run < runs; ++run) {
        const uint64_t run_seed = derive_seed(seed0, run);
        SimConfig run_cfg = cfg;
        run_cfg.seed = run_seed;
        const SynthImu imu = synth_imu(run_cfg);
        const auto poses = synth_pose_measurements(run_cfg, derive_seed(run_seed, 77));

        // truth at t = 0
        const GroundTruthSample gt0 = traj.sample(0.0);
        NavState truth0;
        truth0.q = gt0.T_WR.rotation;
        truth0.p = truth0.q.conjugate() * gt0.T_WR.translation;
        truth0.v = truth0.q.conjugate() * gt0.v_W;
        truth0.b_f = cfg.noise.initial_accel_bias;
        truth0.b_w = cfg.noise.initial_gyro_bias;
        truth0.t = 0.0;

        // initial estimate drawn from P0 around the truth
        std::mt19937_64 rng(derive_seed(run_seed, 88));
        std::normal_distribution<double> gauss(0.0, 1.0);
        ErrorVec dx0;
        for (int i = 0; i < 15; ++i) dx0[i] = gauss(rng);
        const Eigen::LLT<ErrorCov> chol(P0);
        NavState x = inject_error(truth0, chol.matrixL() * dx0);
        x.t = 0.0;
        ErrorCov P = P0;

        size_t pose_idx = 0;
        // skip the measurement at t=0 (the filter starts there)
        if (!poses.empty() && poses.front().t == 0.0) pose_idx = 1;

        for (const auto& sample : imu.samples) {
            propagate(x, P, sample, ekf_cfg.noise, ekf_cfg.max_dt);
            check_P(P);
            while (pose_idx < poses.size() && poses[pose_idx].t <= x.t + 1e-9) {
                const auto& m = poses[pose_idx++];
                if (m.t < x.t - 1e-9) continue;
                correct(x, P, m, ekf_cfg);
                check_P(P);

                // truth at the correction time
                const GroundTruthSample gt = traj.sample(std::min(m.t, cfg.trajectory.duration));
                NavState truth;
                truth.q = gt.T_WR.rotation;
                truth.p = truth.q.conjugate() * gt.T_WR.translation;
                truth.v = truth.q.conjugate() * gt.v_W;
                truth.b_f = imu.accel_bias_at(m.t, run_cfg);
                truth.b_w = imu.gyro_bias_at(m.t, run_cfg);
                truth.t = m.t;

                const ErrorVec err = lift_error(x, truth);
                Eigen::LDLT<ErrorCov> ldlt(P);
                nees_acc += err.dot(ldlt.solve(err));
                ++nees_n;
            }
        }
    }
    result.avg_nees = nees_n > 0 ? nees_acc / nees_n : 0.0;
    result.nees_count = nees_n;
    return result;
}

}  // namespace thermloc
