#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "thermloc/simulator.hpp"

namespace thermloc {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in " + context);
    }
}

Vec3 to_vec3(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be 3 numbers");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Pose to_pose(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 7) throw ConfigError(what + " must be 7 numbers");
    std::array<double, 7> a;
    for (int i = 0; i < 7; ++i) a[i] = j[i].get<double>();
    return Pose::from_array(a);
}

json from_vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json from_pose(const Pose& p) {
    const auto a = p.to_array();
    return json::array({a[0], a[1], a[2], a[3], a[4], a[5], a[6]});
}

template <typename T>
void read_if(const json& j, const char* key, T* out) {
    if (j.contains(key)) *out = j.at(key).get<T>();
}

TrajectorySpec parse_trajectory(const json& j) {
    reject_unknown_keys(j,
                        {"kind", "duration_s", "yaw_policy", "fixed_yaw_rad", "center",
                         "radius_m", "angular_rate_rad_s", "phase_rad", "amplitude_m",
                         "rates_rad_s", "phases_rad", "waypoints"},
                        "trajectory");
    TrajectorySpec t;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "circle")
        t.kind = TrajectorySpec::Kind::Circle;
    else if (kind == "lissajous")
        t.kind = TrajectorySpec::Kind::Lissajous;
    else if (kind == "waypoint-smooth")
        t.kind = TrajectorySpec::Kind::WaypointSmooth;
    else
        throw ConfigError("unknown trajectory kind: " + kind);
    t.duration = j.at("duration_s").get<double>();
    if (j.contains("yaw_policy")) {
        const std::string yp = j.at("yaw_policy").get<std::string>();
        if (yp == "fixed")
            t.yaw_policy = TrajectorySpec::YawPolicy::Fixed;
        else if (yp == "tangent")
            t.yaw_policy = TrajectorySpec::YawPolicy::Tangent;
        else if (yp == "radial_out")
            t.yaw_policy = TrajectorySpec::YawPolicy::RadialOut;
        else
            throw ConfigError("unknown yaw_policy: " + yp);
    }
    read_if(j, "fixed_yaw_rad", &t.fixed_yaw);
    if (j.contains("center")) t.center = to_vec3(j.at("center"), "trajectory.center");
    read_if(j, "radius_m", &t.radius);
    read_if(j, "angular_rate_rad_s", &t.angular_rate);
    read_if(j, "phase_rad", &t.phase);
    if (j.contains("amplitude_m")) t.amplitude = to_vec3(j.at("amplitude_m"), "amplitude_m");
    if (j.contains("rates_rad_s")) t.rates = to_vec3(j.at("rates_rad_s"), "rates_rad_s");
    if (j.contains("phases_rad")) t.phases = to_vec3(j.at("phases_rad"), "phases_rad");
    if (j.contains("waypoints")) {
        for (const auto& w : j.at("waypoints")) t.waypoints.push_back(to_vec3(w, "waypoint"));
    }
    return t;
}

json trajectory_to_json(const TrajectorySpec& t) {
    json j;
    switch (t.kind) {
        case TrajectorySpec::Kind::Circle: j["kind"] = "circle"; break;
        case TrajectorySpec::Kind::Lissajous: j["kind"] = "lissajous"; break;
        case TrajectorySpec::Kind::WaypointSmooth: j["kind"] = "waypoint-smooth"; break;
    }
    j["duration_s"] = t.duration;
    switch (t.yaw_policy) {
        case TrajectorySpec::YawPolicy::Fixed: j["yaw_policy"] = "fixed"; break;
        case TrajectorySpec::YawPolicy::Tangent: j["yaw_policy"] = "tangent"; break;
        case TrajectorySpec::YawPolicy::RadialOut: j["yaw_policy"] = "radial_out"; break;
    }
    j["fixed_yaw_rad"] = t.fixed_yaw;
    j["center"] = from_vec3(t.center);
    if (t.kind == TrajectorySpec::Kind::Circle) {
        j["radius_m"] = t.radius;
        j["angular_rate_rad_s"] = t.angular_rate;
        j["phase_rad"] = t.phase;
    } else if (t.kind == TrajectorySpec::Kind::Lissajous) {
        j["amplitude_m"] = from_vec3(t.amplitude);
        j["rates_rad_s"] = from_vec3(t.rates);
        j["phases_rad"] = from_vec3(t.phases);
    } else {
        json w = json::array();
        for (const auto& p : t.waypoints) w.push_back(from_vec3(p));
        j["waypoints"] = w;
    }
    return j;
}

}  // namespace

SimConfig parse_sim_config_json(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("config " + origin + ": " + e.what());
    }
    try {
        reject_unknown_keys(j,
                            {"seed", "imu_hz", "camera_hz", "trajectory", "camera",
                             "extrinsics_T_RC", "anchor_id", "markers", "noise", "visibility",
                             "observation_mode", "render", "map", "ekf"},
                            "config root");
        SimConfig cfg;
        read_if(j, "seed", &cfg.seed);
        read_if(j, "imu_hz", &cfg.imu_hz);
        read_if(j, "camera_hz", &cfg.camera_hz);
        cfg.trajectory = parse_trajectory(j.at("trajectory"));

        const json& cam = j.at("camera");
        reject_unknown_keys(
            cam, {"width", "height", "fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2"}, "camera");
        read_if(cam, "width", &cfg.intrinsics.width);
        read_if(cam, "height", &cfg.intrinsics.height);
        read_if(cam, "fx", &cfg.intrinsics.fx);
        read_if(cam, "fy", &cfg.intrinsics.fy);
        read_if(cam, "cx", &cfg.intrinsics.cx);
        read_if(cam, "cy", &cfg.intrinsics.cy);
        read_if(cam, "k1", &cfg.intrinsics.k1);
        read_if(cam, "k2", &cfg.intrinsics.k2);
        read_if(cam, "p1", &cfg.intrinsics.p1);
        read_if(cam, "p2", &cfg.intrinsics.p2);

        cfg.T_RC = to_pose(j.at("extrinsics_T_RC"), "extrinsics_T_RC");
        cfg.anchor_id = j.at("anchor_id").get<int>();

        for (const auto& m : j.at("markers")) {
            reject_unknown_keys(m, {"id", "side_m", "pose"}, "marker");
            MarkerLayoutEntry e;
            e.id = m.at("id").get<int>();
            e.side = m.at("side_m").get<double>();
            e.T_WM = to_pose(m.at("pose"), "marker pose");
            cfg.markers.push_back(e);
        }

        if (j.contains("noise")) {
            const json& n = j.at("noise");
            reject_unknown_keys(n,
                                {"pixel_sigma", "accel_noise_density", "gyro_noise_density",
                                 "accel_bias_walk", "gyro_bias_walk", "initial_accel_bias",
                                 "initial_gyro_bias", "meas_sigma_p", "meas_sigma_theta"},
                                "noise");
            read_if(n, "pixel_sigma", &cfg.noise.pixel_sigma);
            read_if(n, "accel_noise_density", &cfg.noise.accel_noise_density);
            read_if(n, "gyro_noise_density", &cfg.noise.gyro_noise_density);
            read_if(n, "accel_bias_walk", &cfg.noise.accel_bias_walk);
            read_if(n, "gyro_bias_walk", &cfg.noise.gyro_bias_walk);
            if (n.contains("initial_accel_bias"))
                cfg.noise.initial_accel_bias = to_vec3(n.at("initial_accel_bias"), "initial_accel_bias");
            if (n.contains("initial_gyro_bias"))
                cfg.noise.initial_gyro_bias = to_vec3(n.at("initial_gyro_bias"), "initial_gyro_bias");
            read_if(n, "meas_sigma_p", &cfg.noise.meas_sigma_p);
            read_if(n, "meas_sigma_theta", &cfg.noise.meas_sigma_theta);
        }

        if (j.contains("visibility")) {
            const json& v = j.at("visibility");
            reject_unknown_keys(
                v, {"min_range_m", "max_range_m", "max_view_angle_deg", "dropout_prob"},
                "visibility");
            read_if(v, "min_range_m", &cfg.visibility.min_range);
            read_if(v, "max_range_m", &cfg.visibility.max_range);
            read_if(v, "max_view_angle_deg", &cfg.visibility.max_view_angle_deg);
            read_if(v, "dropout_prob", &cfg.visibility.dropout_prob);
        }

        if (j.contains("observation_mode")) {
            const std::string mode = j.at("observation_mode").get<std::string>();
            if (mode == "corners")
                cfg.mode = SimConfig::ObsMode::Corners;
            else if (mode == "render")
                cfg.mode = SimConfig::ObsMode::Render;
            else
                throw ConfigError("unknown observation_mode: " + mode);
        }

        if (j.contains("render")) {
            const json& r = j.at("render");
            reject_unknown_keys(r, {"background", "hot_intensity", "noise_sigma", "attenuation"},
                                "render");
            read_if(r, "background", &cfg.render.background);
            read_if(r, "hot_intensity", &cfg.render.hot_intensity);
            read_if(r, "noise_sigma", &cfg.render.noise_sigma);
            read_if(r, "attenuation", &cfg.render.attenuation);
        }

        if (j.contains("map")) {
            const json& m = j.at("map");
            reject_unknown_keys(m, {"ema_alpha", "ambiguity_gate", "camera_rms_gate_px"}, "map");
            read_if(m, "ema_alpha", &cfg.map_params.ema_alpha);
            read_if(m, "ambiguity_gate", &cfg.map_params.ambiguity_gate);
            read_if(m, "camera_rms_gate_px", &cfg.map_params.camera_rms_gate);
        }

        if (j.contains("ekf")) {
            const json& e = j.at("ekf");
            reject_unknown_keys(e,
                                {"gate_threshold", "init_sigma_p", "init_sigma_v",
                                 "init_sigma_theta", "init_sigma_bf", "init_sigma_bw"},
                                "ekf");
            read_if(e, "gate_threshold", &cfg.ekf.gate_threshold);
            read_if(e, "init_sigma_p", &cfg.ekf.sigma_p);
            read_if(e, "init_sigma_v", &cfg.ekf.sigma_v);
            read_if(e, "init_sigma_theta", &cfg.ekf.sigma_theta);
            read_if(e, "init_sigma_bf", &cfg.ekf.sigma_bf);
            read_if(e, "init_sigma_bw", &cfg.ekf.sigma_bw);
        }

        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError("config " + origin + ": " + e.what());
    }
}

std::string sim_config_to_json(const SimConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["imu_hz"] = cfg.imu_hz;
    j["camera_hz"] = cfg.camera_hz;
    j["trajectory"] = trajectory_to_json(cfg.trajectory);
    j["camera"] = {{"width", cfg.intrinsics.width}, {"height", cfg.intrinsics.height},
                   {"fx", cfg.intrinsics.fx},       {"fy", cfg.intrinsics.fy},
                   {"cx", cfg.intrinsics.cx},       {"cy", cfg.intrinsics.cy},
                   {"k1", cfg.intrinsics.k1},       {"k2", cfg.intrinsics.k2},
                   {"p1", cfg.intrinsics.p1},       {"p2", cfg.intrinsics.p2}};
    j["extrinsics_T_RC"] = from_pose(cfg.T_RC);
    j["anchor_id"] = cfg.anchor_id;
    json markers = json::array();
    for (const auto& m : cfg.markers)
        markers.push_back({{"id", m.id}, {"side_m", m.side}, {"pose", from_pose(m.T_WM)}});
    j["markers"] = markers;
    j["noise"] = {{"pixel_sigma", cfg.noise.pixel_sigma},
                  {"accel_noise_density", cfg.noise.accel_noise_density},
                  {"gyro_noise_density", cfg.noise.gyro_noise_density},
                  {"accel_bias_walk", cfg.noise.accel_bias_walk},
                  {"gyro_bias_walk", cfg.noise.gyro_bias_walk},
                  {"initial_accel_bias", from_vec3(cfg.noise.initial_accel_bias)},
                  {"initial_gyro_bias", from_vec3(cfg.noise.initial_gyro_bias)},
                  {"meas_sigma_p", cfg.noise.meas_sigma_p},
                  {"meas_sigma_theta", cfg.noise.meas_sigma_theta}};
    j["visibility"] = {{"min_range_m", cfg.visibility.min_range},
                       {"max_range_m", cfg.visibility.max_range},
                       {"max_view_angle_deg", cfg.visibility.max_view_angle_deg},
                       {"dropout_prob", cfg.visibility.dropout_prob}};
    j["observation_mode"] = cfg.mode == SimConfig::ObsMode::Corners ? "corners" : "render";
    j["render"] = {{"background", cfg.render.background},
                   {"hot_intensity", cfg.render.hot_intensity},
                   {"noise_sigma", cfg.render.noise_sigma},
                   {"attenuation", cfg.render.attenuation}};
    j["map"] = {{"ema_alpha", cfg.map_params.ema_alpha},
                {"ambiguity_gate", cfg.map_params.ambiguity_gate},
                {"camera_rms_gate_px", cfg.map_params.camera_rms_gate}};
    j["ekf"] = {{"gate_threshold", cfg.ekf.gate_threshold},
                {"init_sigma_p", cfg.ekf.sigma_p},
                {"init_sigma_v", cfg.ekf.sigma_v},
                {"init_sigma_theta", cfg.ekf.sigma_theta},
                {"init_sigma_bf", cfg.ekf.sigma_bf},
                {"init_sigma_bw", cfg.ekf.sigma_bw}};
    return j.dump(2) + "\n";
}

SimConfig load_sim_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream oss;
    oss << f.rdbuf();
    return parse_sim_config_json(oss.str(), path);
}

void save_sim_config(const SimConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open config file for writing: " + path);
    f << sim_config_to_json(cfg);
}

SimConfig make_room_config() {
    SimConfig cfg;
    cfg.seed = 1;
    cfg.imu_hz = 200.0;
    cfg.camera_hz = 30.0;

    cfg.trajectory.kind = TrajectorySpec::Kind::Circle;
    cfg.trajectory.duration = 60.0;
    cfg.trajectory.center = Vec3(0.0, 0.0, 1.5);
    cfg.trajectory.radius = 1.0;
    cfg.trajectory.angular_rate = 2.0 * M_PI * 2.0 / 60.0;  // two laps, closed
    cfg.trajectory.phase = 0.0;
    cfg.trajectory.yaw_policy = TrajectorySpec::YawPolicy::RadialOut;

    // forward-looking camera: optical axis along robot +x
    Mat3 R_RC;
    R_RC << 0.0, 0.0, 1.0,
            -1.0, 0.0, 0.0,
            0.0, -1.0, 0.0;
    cfg.T_RC.rotation = Quat(R_RC).normalized();
    cfg.T_RC.translation = Vec3(0.1, 0.0, 0.0);

    // 10 markers on the walls of a 6x6x3 m room, normals into the room,
    // pattern-up along world z
    auto wall_marker = [](int id, const Vec3& pos, const Vec3& normal) {
        MarkerLayoutEntry e;
        e.id = id;
        e.side = 0.2;
        const Vec3 z = normal.normalized();
        const Vec3 y(0.0, 0.0, 1.0);
        const Vec3 x = y.cross(z);
        Mat3 R;
        R.col(0) = x;
        R.col(1) = y;
        R.col(2) = z;
        e.T_WM.rotation = Quat(R).normalized();
        e.T_WM.translation = pos;
        return e;
    };
    const double h = 1.5;
    cfg.markers = {
        wall_marker(0, {3.0, 0.0, h}, {-1.0, 0.0, 0.0}),   // anchor, +x wall center
        wall_marker(1, {3.0, -1.8, h}, {-1.0, 0.0, 0.0}),
        wall_marker(2, {3.0, 1.8, h}, {-1.0, 0.0, 0.0}),
        wall_marker(3, {-3.0, 0.0, h}, {1.0, 0.0, 0.0}),
        wall_marker(4, {-3.0, -1.8, h}, {1.0, 0.0, 0.0}),
        wall_marker(5, {-3.0, 1.8, h}, {1.0, 0.0, 0.0}),
        wall_marker(6, {1.0, 3.0, h}, {0.0, -1.0, 0.0}),
        wall_marker(7, {-1.0, 3.0, h}, {0.0, -1.0, 0.0}),
        wall_marker(8, {1.0, -3.0, h}, {0.0, 1.0, 0.0}),
        wall_marker(9, {-1.0, -3.0, h}, {0.0, 1.0, 0.0}),
    };
    cfg.anchor_id = 0;

    cfg.visibility.min_range = 0.1;
    cfg.visibility.max_range = 6.0;
    cfg.visibility.max_view_angle_deg = 70.0;
    cfg.visibility.dropout_prob = 0.0;
    return cfg;
}

}  // namespace thermloc
