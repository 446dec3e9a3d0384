#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "thermloc/simulator.hpp"

namespace thermloc {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CsvWriter {
    std::ofstream f;
    explicit CsvWriter(const std::string& path, const std::string& header) : f(path) {
        if (!f) throw ConfigError("cannot open for writing: " + path);
        f << header << "\n";
    }
    void row(const std::vector<double>& values, const std::vector<long>& ints = {},
             bool ints_first = false) {
        std::string line;
        auto append = [&](const std::string& s) {
            if (!line.empty()) line += ",";
            line += s;
        };
        if (ints_first)
            for (long v : ints) append(std::to_string(v));
        for (double v : values) append(fmt(v));
        if (!ints_first)
            for (long v : ints) append(std::to_string(v));
        f << line << "\n";
    }
};

std::vector<std::vector<double>> read_csv(const std::string& path, size_t min_cols) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open: " + path);
    std::string line;
    std::getline(f, line);  // header
    std::vector<std::vector<double>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        if (row.size() < min_cols)
            throw ConfigError("short row in " + path + ": " + line);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void save_metrics(const RunMetrics& m, const std::string& path) {
    nlohmann::json j;
    j["fiducial"] = {{"rmse_m", m.fiducial_rmse}, {"jitter_m", m.fiducial_jitter}};
    j["ekf"] = {{"rmse_m", m.ekf_rmse}, {"jitter_m", m.ekf_jitter}};
    j["map"] = {{"markers_mapped", m.markers_mapped},
                {"max_pos_err_m", m.map_max_pos_err},
                {"max_rot_err_rad", m.map_max_rot_err}};
    j["frames"] = {{"total", m.frames_total}, {"with_pose", m.frames_with_pose}};
    j["empty_run"] = m.empty_run;
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

void save_run(const SimRun& run, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const SimConfig& cfg = run.config;

    save_sim_config(cfg, dir + "/config.json");

    {
        const Trajectory traj(cfg.trajectory);
        CsvWriter w(dir + "/ground_truth.csv", "t,tx,ty,tz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz");
        auto write_at = [&](double t) {
            const GroundTruthSample g = traj.sample(std::min(t, cfg.trajectory.duration));
            const auto a = g.T_WR.to_array();
            w.row({t, a[0], a[1], a[2], a[3], a[4], a[5], a[6], g.v_W.x(), g.v_W.y(), g.v_W.z(),
                   g.omega_R.x(), g.omega_R.y(), g.omega_R.z()});
        };
        write_at(0.0);
        for (const auto& s : run.imu.samples) write_at(s.t);
    }

    {
        CsvWriter w(dir + "/imu.csv", "t,fx,fy,fz,wx,wy,wz,bfx,bfy,bfz,bwx,bwy,bwz");
        for (size_t i = 0; i < run.imu.samples.size(); ++i) {
            const auto& s = run.imu.samples[i];
            const Vec3& bf = run.imu.true_accel_bias[i];
            const Vec3& bw = run.imu.true_gyro_bias[i];
            w.row({s.t, s.f.x(), s.f.y(), s.f.z(), s.w.x(), s.w.y(), s.w.z(), bf.x(), bf.y(),
                   bf.z(), bw.x(), bw.y(), bw.z()});
        }
    }

    {
        CsvWriter w(dir + "/observations.csv",
                    "frame_id,marker_id,rotation,bit_errors,x0,y0,x1,y1,x2,y2,x3,y3");
        for (const auto& frame : run.frames) {
            for (size_t i = 0; i < frame.observations.size(); ++i) {
                const auto& obs = frame.observations[i];
                std::vector<double> vals;
                for (int c = 0; c < 4; ++c) {
                    vals.push_back(obs.corners[c].x());
                    vals.push_back(obs.corners[c].y());
                }
                w.row(vals,
                      {frame.frame_id, obs.id, frame.rotations[i], frame.bit_errors[i]},
                      /*ints_first=*/true);
            }
        }
    }

    save_map(run.map, dir + "/map.json");

    {
        CsvWriter w(dir + "/fiducial_pose.csv",
                    "frame_id,t,tx,ty,tz,qw,qx,qy,qz,rms_px,markers_used");
        for (const auto& e : run.fiducial_log) {
            const auto a = e.T_WR.to_array();
            std::vector<double> vals{e.t, a[0], a[1], a[2], a[3], a[4], a[5], a[6], e.rms_px};
            std::string line = std::to_string(e.frame_id);
            for (double v : vals) line += "," + fmt(v);
            line += "," + std::to_string(e.markers_used);
            w.f << line << "\n";
        }
    }

    {
        CsvWriter w(dir + "/ekf_state.csv",
                    "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,bfx,bfy,bfz,bwx,bwy,bwz,pWx,pWy,pWz");
        for (const auto& x : run.ekf_log) {
            Quat q = x.q;
            if (q.w() < 0.0) q.coeffs() = -q.coeffs();
            const Vec3 pw = x.world_position();
            w.row({x.t, x.p.x(), x.p.y(), x.p.z(), x.v.x(), x.v.y(), x.v.z(), q.w(), q.x(),
                   q.y(), q.z(), x.b_f.x(), x.b_f.y(), x.b_f.z(), x.b_w.x(), x.b_w.y(),
                   x.b_w.z(), pw.x(), pw.y(), pw.z()});
        }
    }

    save_metrics(run.metrics, dir + "/metrics.json");
}

std::vector<ObservationFrame> load_observations_csv(const std::string& path,
                                                    double camera_hz) {
    const auto rows = read_csv(path, 12);
    std::vector<ObservationFrame> frames;
    for (const auto& r : rows) {
        const int frame_id = static_cast<int>(r[0]);
        if (frames.empty() || frames.back().frame_id != frame_id) {
            if (!frames.empty() && frames.back().frame_id > frame_id)
                throw ConfigError("observations not sorted by frame_id in " + path);
            ObservationFrame f;
            f.frame_id = frame_id;
            f.t = frame_id / camera_hz;
            frames.push_back(f);
        }
        MarkerObservation obs;
        obs.id = static_cast<int>(r[1]);
        for (int c = 0; c < 4; ++c) obs.corners[c] = Vec2(r[4 + 2 * c], r[5 + 2 * c]);
        frames.back().observations.push_back(obs);
        frames.back().rotations.push_back(static_cast<int>(r[2]));
        frames.back().bit_errors.push_back(static_cast<int>(r[3]));
    }
    return frames;
}

SynthImu load_imu_csv(const std::string& path) {
    const auto rows = read_csv(path, 13);
    SynthImu out;
    for (const auto& r : rows) {
        ImuSample s;
        s.t = r[0];
        s.f = Vec3(r[1], r[2], r[3]);
        s.w = Vec3(r[4], r[5], r[6]);
        out.samples.push_back(s);
        out.true_accel_bias.emplace_back(r[7], r[8], r[9]);
        out.true_gyro_bias.emplace_back(r[10], r[11], r[12]);
    }
    return out;
}

std::vector<FiducialPoseEntry> load_fiducial_csv(const std::string& path) {
    const auto rows = read_csv(path, 11);
    std::vector<FiducialPoseEntry> out;
    for (const auto& r : rows) {
        FiducialPoseEntry e;
        e.frame_id = static_cast<int>(r[0]);
        e.t = r[1];
        e.T_WR = Pose::from_array({r[2], r[3], r[4], r[5], r[6], r[7], r[8]});
        e.rms_px = r[9];
        e.markers_used = static_cast<int>(r[10]);
        out.push_back(e);
    }
    return out;
}

std::vector<NavState> load_ekf_csv(const std::string& path) {
    const auto rows = read_csv(path, 20);
    std::vector<NavState> out;
    for (const auto& r : rows) {
        NavState x;
        x.t = r[0];
        x.p = Vec3(r[1], r[2], r[3]);
        x.v = Vec3(r[4], r[5], r[6]);
        x.q = Quat(r[7], r[8], r[9], r[10]).normalized();
        x.b_f = Vec3(r[11], r[12], r[13]);
        x.b_w = Vec3(r[14], r[15], r[16]);
        out.push_back(x);
    }
    return out;
}

}  // namespace thermloc
