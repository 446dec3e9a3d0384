#pragma once

#include <vector>

#include "thermloc/geometry.hpp"

namespace thermloc {

// Robocentric navigation state: p and v are the robot position and velocity
// expressed in the body frame R; q maps R -> W; world position is q * p.
struct NavState {
    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();
    Quat q{1.0, 0.0, 0.0, 0.0};
    Vec3 b_f = Vec3::Zero();  // accelerometer bias, body frame
    Vec3 b_w = Vec3::Zero();  // gyroscope bias, body frame
    double t = 0.0;

    Vec3 world_position() const { return q * p; }
};

// 15x15 covariance over the error state [dp dv dtheta db_f db_w] with
// right-multiplicative attitude error q_true = q * exp(dtheta).
using ErrorCov = Eigen::Matrix<double, 15, 15>;
using ErrorVec = Eigen::Matrix<double, 15, 1>;

struct ImuSample {
    Vec3 f = Vec3::Zero();  // specific force, body frame
    Vec3 w = Vec3::Zero();  // angular rate, body frame
    double t = 0.0;
};

struct PoseMeasurement {
    Pose T_WC;
    double t = 0.0;
    double sigma_p = 0.02;      // per-axis position noise, meters
    double sigma_theta = 0.01;  // per-axis rotation noise, radians
};

struct EkfNoiseConfig {
    double accel_noise_density = 0.02;   // m/s^2/sqrt(Hz)
    double gyro_noise_density = 0.002;   // rad/s/sqrt(Hz)
    double accel_bias_walk = 0.0005;     // m/s^2*sqrt(s)
    double gyro_bias_walk = 5e-5;        // rad/s*sqrt(s)
};

struct EkfConfig {
    EkfNoiseConfig noise;
    Pose T_RC;                     // camera in the robot frame
    double gate_threshold = 22.46; // chi-square(6) 0.999 quantile
    double max_dt = 0.1;           // propagation step cap, seconds
    double meas_align_tol = 0.05;  // measurement/state time alignment, seconds
};

// Error-state injection / lifting, shared by the filter and its tests.
NavState inject_error(const NavState& nominal, const ErrorVec& dx);
ErrorVec lift_error(const NavState& nominal, const NavState& other);

// Continuous-time error Jacobian F (15x15) at the given state and
// bias-corrected rates; the discrete transition is F_d = I + F*dt.
ErrorCov error_dynamics_jacobian(const NavState& x, const Vec3& f_hat, const Vec3& w_hat,
                                 const Vec3& gravity);

// Measurement Jacobian of the residual [p_m - p; log(q^-1 * q_m)] with
// respect to the error state, linearized at the rotation residual r_theta.
Eigen::Matrix<double, 6, 15> measurement_jacobian(const Vec3& r_theta);

// Euler step of the robocentric kinematics plus covariance propagation.
// Throws NonMonotonicTimestamp and ExcessiveDt on timing violations.
void propagate(NavState& x, ErrorCov& P, const ImuSample& imu, const EkfNoiseConfig& noise,
               double max_dt = 0.1);

struct CorrectionResult {
    bool accepted = false;
    double nis = 0.0;
};

// Pose innovation update with chi-square gating and Joseph-form covariance.
CorrectionResult correct(NavState& x, ErrorCov& P, const PoseMeasurement& meas,
                         const EkfConfig& cfg);

// Merge-by-timestamp processing: every IMU sample propagates (one log entry
// each); each pose measurement corrects after a zero-order-hold propagation
// to its timestamp. Out-of-order measurements are dropped.
std::vector<NavState> process_stream(const std::vector<ImuSample>& imu,
                                     const std::vector<PoseMeasurement>& poses,
                                     const NavState& init_state, const ErrorCov& init_cov,
                                     const EkfConfig& cfg);

}  // namespace thermloc
