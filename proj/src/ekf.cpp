#include "thermloc/ekf.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

namespace thermloc {

namespace {

constexpr double kGravityZ = -9.81;

void symmetrize(ErrorCov& P) { P = 0.5 * (P + P.transpose()).eval(); }

Mat3 so3_right_jacobian_inv(const Vec3& phi) {
    const double theta = phi.norm();
    const Mat3 S = skew(phi);
    if (theta < 1e-6)
        return Mat3::Identity() + 0.5 * S + S * S / 12.0;
    const double s = std::sin(theta);
    // (1/theta^2 - (1+cos)/(2 theta sin)) -> 1/theta^2 as theta -> pi
    const double cot_term =
        std::abs(s) < 1e-9 ? 1.0 / (theta * theta)
                           : 1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * s);
    return Mat3::Identity() + 0.5 * S + cot_term * S * S;
}

}  // namespace

NavState inject_error(const NavState& nominal, const ErrorVec& dx) {
    NavState out = nominal;
    out.p += dx.segment<3>(0);
    out.v += dx.segment<3>(3);
    out.q = (nominal.q * so3_exp(dx.segment<3>(6))).normalized();
    out.b_f += dx.segment<3>(9);
    out.b_w += dx.segment<3>(12);
    return out;
}

ErrorVec lift_error(const NavState& nominal, const NavState& other) {
    ErrorVec dx;
    dx.segment<3>(0) = other.p - nominal.p;
    dx.segment<3>(3) = other.v - nominal.v;
    dx.segment<3>(6) = so3_log(nominal.q.conjugate() * other.q);
    dx.segment<3>(9) = other.b_f - nominal.b_f;
    dx.segment<3>(12) = other.b_w - nominal.b_w;
    return dx;
}

ErrorCov error_dynamics_jacobian(const NavState& x, const Vec3& /*f_hat*/, const Vec3& w_hat,
                                 const Vec3& gravity) {
    ErrorCov F = ErrorCov::Zero();
    const Mat3 W = skew(w_hat);
    const Vec3 g_body = x.q.conjugate() * gravity;

    // dp-dot = -[w]x dp + dv - [p]x db_w
    F.block<3, 3>(0, 0) = -W;
    F.block<3, 3>(0, 3) = Mat3::Identity();
    F.block<3, 3>(0, 12) = -skew(x.p);
    // dv-dot = -[w]x dv + [q^-1 g]x dtheta - db_f - [v]x db_w
    F.block<3, 3>(3, 3) = -W;
    F.block<3, 3>(3, 6) = skew(g_body);
    F.block<3, 3>(3, 9) = -Mat3::Identity();
    F.block<3, 3>(3, 12) = -skew(x.v);
    // dtheta-dot = -[w]x dtheta - db_w
    F.block<3, 3>(6, 6) = -W;
    F.block<3, 3>(6, 12) = -Mat3::Identity();
    return F;
}

Eigen::Matrix<double, 6, 15> measurement_jacobian(const Vec3& r_theta) {
    Eigen::Matrix<double, 6, 15> H = Eigen::Matrix<double, 6, 15>::Zero();
    H.block<3, 3>(0, 0) = -Mat3::Identity();
    // d/d dtheta log(Exp(-dtheta) Exp(r)) = -Jr(r)^-1 R(r)^T; -I at r = 0
    H.block<3, 3>(3, 6) =
        -so3_right_jacobian_inv(r_theta) * so3_exp(r_theta).toRotationMatrix().transpose();
    return H;
}

void propagate(NavState& x, ErrorCov& P, const ImuSample& imu, const EkfNoiseConfig& noise,
               double max_dt) {
    const double dt = imu.t - x.t;
    if (dt <= 0.0)
        throw NonMonotonicTimestamp("imu sample not after the current state time");
    if (dt > max_dt) throw ExcessiveDt("imu gap exceeds the propagation step cap");

    const Vec3 f_hat = imu.f - x.b_f;
    const Vec3 w_hat = imu.w - x.b_w;
    const Vec3 gravity(0.0, 0.0, kGravityZ);
    const Vec3 g_body = x.q.conjugate() * gravity;

    // Jacobians at the pre-update state
    const ErrorCov F = error_dynamics_jacobian(x, f_hat, w_hat, gravity);
    Eigen::Matrix<double, 15, 12> G = Eigen::Matrix<double, 15, 12>::Zero();
    G.block<3, 3>(0, 3) = -skew(x.p);          // gyro white noise enters dp-dot
    G.block<3, 3>(3, 0) = -Mat3::Identity();   // accel white noise
    G.block<3, 3>(3, 3) = -skew(x.v);
    G.block<3, 3>(6, 3) = -Mat3::Identity();
    G.block<3, 3>(9, 6) = Mat3::Identity();    // bias random walks
    G.block<3, 3>(12, 9) = Mat3::Identity();

    // Euler mean update, right-hand sides at the pre-update state
    const Vec3 p_dot = -w_hat.cross(x.p) + x.v;
    const Vec3 v_dot = -w_hat.cross(x.v) + f_hat + g_body;
    x.p += dt * p_dot;
    x.v += dt * v_dot;
    x.q = (x.q * so3_exp(w_hat * dt)).normalized();
    x.t = imu.t;

    Eigen::Matrix<double, 12, 12> Qc = Eigen::Matrix<double, 12, 12>::Zero();
    Qc.block<3, 3>(0, 0) =
        noise.accel_noise_density * noise.accel_noise_density * Mat3::Identity();
    Qc.block<3, 3>(3, 3) =
        noise.gyro_noise_density * noise.gyro_noise_density * Mat3::Identity();
    Qc.block<3, 3>(6, 6) = noise.accel_bias_walk * noise.accel_bias_walk * Mat3::Identity();
    Qc.block<3, 3>(9, 9) = noise.gyro_bias_walk * noise.gyro_bias_walk * Mat3::Identity();

    const ErrorCov Fd = ErrorCov::Identity() + F * dt;
    P = Fd * P * Fd.transpose() + (G * Qc * G.transpose()) * dt;
    symmetrize(P);
}

CorrectionResult correct(NavState& x, ErrorCov& P, const PoseMeasurement& meas,
                         const EkfConfig& cfg) {
    if (std::abs(meas.t - x.t) > cfg.meas_align_tol)
        throw NonMonotonicTimestamp("pose measurement not aligned with the state time");
    if (!(meas.sigma_p > 0.0) || !(meas.sigma_theta > 0.0))
        throw SingularInnovationCovariance("non-positive measurement noise");

    // robot pose measurement derived from the camera pose
    const Pose T_WR = compose(meas.T_WC, cfg.T_RC.inverse());
    const Quat q_m = T_WR.rotation;
    const Vec3 p_m = q_m.conjugate() * T_WR.translation;  // robocentric

    Eigen::Matrix<double, 6, 1> r;
    r.head<3>() = p_m - x.p;
    const Vec3 r_theta = so3_log(x.q.conjugate() * q_m);
    r.tail<3>() = r_theta;

    const Eigen::Matrix<double, 6, 15> H = measurement_jacobian(r_theta);
    Eigen::Matrix<double, 6, 6> R = Eigen::Matrix<double, 6, 6>::Zero();
    R.topLeftCorner<3, 3>() = meas.sigma_p * meas.sigma_p * Mat3::Identity();
    R.bottomRightCorner<3, 3>() = meas.sigma_theta * meas.sigma_theta * Mat3::Identity();

    const Eigen::Matrix<double, 6, 6> S = H * P * H.transpose() + R;
    Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw SingularInnovationCovariance("innovation covariance is not positive definite");

    CorrectionResult result;
    result.nis = r.dot(ldlt.solve(r));
    if (result.nis > cfg.gate_threshold) return result;  // rejected, state unchanged
    result.accepted = true;

    const Eigen::Matrix<double, 15, 6> K = ldlt.solve(H * P).transpose();
    const ErrorVec dx = K * r;

    const ErrorCov IKH = ErrorCov::Identity() - K * H;
    P = IKH * P * IKH.transpose() + K * R * K.transpose();
    symmetrize(P);

    x = inject_error(x, dx);
    x.q.normalize();
    return result;
}

std::vector<NavState> process_stream(const std::vector<ImuSample>& imu,
                                     const std::vector<PoseMeasurement>& poses,
                                     const NavState& init_state, const ErrorCov& init_cov,
                                     const EkfConfig& cfg) {
    NavState x = init_state;
    ErrorCov P = init_cov;
    std::vector<NavState> log;
    log.reserve(imu.size());

    size_t pose_idx = 0;
    ImuSample last_imu{Vec3::Zero(), Vec3::Zero(), x.t};
    bool have_imu = false;

    // Corrections between IMU samples propagate by zero-order hold of the
    // last sample; out-of-order measurements are dropped without rollback.
    auto apply_poses_until = [&](double horizon, bool strict) {
        while (pose_idx < poses.size() &&
               (strict ? poses[pose_idx].t < horizon : poses[pose_idx].t <= horizon)) {
            const PoseMeasurement& m = poses[pose_idx++];
            if (m.t < x.t) continue;
            if (m.t > x.t) {
                if (!have_imu) continue;  // nothing to propagate with yet
                ImuSample hold = last_imu;
                hold.t = m.t;
                propagate(x, P, hold, cfg.noise, cfg.max_dt);
            }
            correct(x, P, m, cfg);
        }
    };

    for (const auto& sample : imu) {
        if (sample.t <= x.t) continue;  // before the filter epoch
        apply_poses_until(sample.t, /*strict=*/true);
        if (sample.t > x.t) propagate(x, P, sample, cfg.noise, cfg.max_dt);
        last_imu = sample;
        have_imu = true;
        apply_poses_until(x.t, /*strict=*/false);  // measurements at exactly this time
        log.push_back(x);
    }
    apply_poses_until(std::numeric_limits<double>::infinity(), /*strict=*/true);
    return log;
}

}  // namespace thermloc
