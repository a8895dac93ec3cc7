#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dpc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using VecX = Eigen::VectorXd;
using Mat3 = Eigen::Matrix3d;
using Mat6x12 = Eigen::Matrix<double, 6, 12>;
using Mat6x3 = Eigen::Matrix<double, 6, 3>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using MatX = Eigen::MatrixXd;

inline bool all_finite(const Eigen::Ref<const MatX>& m) {
    return m.allFinite();
}

inline void require_finite(const Eigen::Ref<const MatX>& m, const char* what) {
    if (!m.allFinite())
        throw std::invalid_argument(std::string(what) + ": non-finite value");
}

/// Trunk pose and twist. Position and linear velocity are world frame,
/// angular velocity is body frame, orientation is roll-pitch-yaw.
struct BodyState {
    Vec3 position = Vec3::Zero();
    Vec3 orientation_rpy = Vec3::Zero();
    Vec3 linear_velocity = Vec3::Zero();
    Vec3 angular_velocity = Vec3::Zero();
    double timestamp = 0.0;

    void validate() const {
        require_finite(position, "BodyState.position");
        require_finite(orientation_rpy, "BodyState.orientation_rpy");
        require_finite(linear_velocity, "BodyState.linear_velocity");
        require_finite(angular_velocity, "BodyState.angular_velocity");
        if (!std::isfinite(timestamp))
            throw std::invalid_argument("BodyState.timestamp: non-finite");
        if (std::abs(orientation_rpy.x()) >= M_PI_2 || std::abs(orientation_rpy.y()) >= M_PI_2)
            throw std::invalid_argument("BodyState: roll/pitch outside (-pi/2, pi/2)");
    }
};

/// Arm joint angles. Dimension is the arm's configured DOF (runtime, default 4).
struct ArmState {
    VecX joint_angles;
    double timestamp = 0.0;

    void validate() const {
        require_finite(joint_angles, "ArmState.joint_angles");
        if (!std::isfinite(timestamp))
            throw std::invalid_argument("ArmState.timestamp: non-finite");
    }
};

/// Desired arm joint positions, same layout as ArmState.
struct ArmCommand {
    VecX desired_joint_positions;

    void validate() const {
        require_finite(desired_joint_positions, "ArmCommand.desired_joint_positions");
    }
};

/// High-level action u_t = (f_a, tau_a): the estimated reaction wrench the arm
/// exerts on the trunk, expressed at the COM in body frame.
struct DisturbanceParams {
    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero();

    static DisturbanceParams zero() { return {}; }

    void validate(double f_max, double t_max) const {
        require_finite(force, "DisturbanceParams.force");
        require_finite(torque, "DisturbanceParams.torque");
        if (force.lpNorm<Eigen::Infinity>() > f_max)
            throw std::invalid_argument("DisturbanceParams: force exceeds F_MAX");
        if (torque.lpNorm<Eigen::Infinity>() > t_max)
            throw std::invalid_argument("DisturbanceParams: torque exceeds T_MAX");
    }
};

/// One point of the desired body trajectory. Linear velocity and yaw rate are
/// expressed in the heading (yaw-aligned) frame.
struct TrajectoryPoint {
    Vec2 desired_linear_velocity = Vec2::Zero();
    double desired_yaw_rate = 0.0;
    double desired_roll = 0.0;
    double desired_pitch = 0.0;
    double desired_height = 0.28;

    void validate() const {
        require_finite(desired_linear_velocity, "TrajectoryPoint.desired_linear_velocity");
        if (!std::isfinite(desired_yaw_rate) || !std::isfinite(desired_roll) ||
            !std::isfinite(desired_pitch) || !std::isfinite(desired_height))
            throw std::invalid_argument("TrajectoryPoint: non-finite field");
        if (desired_height <= 0.0)
            throw std::invalid_argument("TrajectoryPoint: desired_height must be > 0");
    }
};

/// 2-D latent state produced by the adapter encoder.
struct LatentState {
    Vec2 z = Vec2::Zero();

    void validate() const { require_finite(z, "LatentState.z"); }
};

/// Trunk rigid-body parameters plus contact limits.
struct RobotParams {
    double mass = 12.0;
    Mat3 trunk_inertia = (Eigen::Vector3d(0.05, 0.09, 0.11)).asDiagonal();
    std::array<Vec3, 4> hip_offsets = {Vec3(0.183, 0.132, 0.0), Vec3(0.183, -0.132, 0.0),
                                       Vec3(-0.183, 0.132, 0.0), Vec3(-0.183, -0.132, 0.0)};
    double friction_coefficient = 0.6;
    double min_normal_force = 5.0;
    double max_normal_force = 150.0;

    void validate() const {
        if (!(mass > 0.0) || !std::isfinite(mass))
            throw std::invalid_argument("RobotParams: mass must be positive");
        require_finite(trunk_inertia, "RobotParams.trunk_inertia");
        if (!trunk_inertia.isApprox(trunk_inertia.transpose(), 1e-10))
            throw std::invalid_argument("RobotParams: trunk_inertia not symmetric");
        Eigen::SelfAdjointEigenSolver<Mat3> es(trunk_inertia);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw std::invalid_argument("RobotParams: trunk_inertia not positive definite");
        if (!(friction_coefficient > 0.0) || friction_coefficient > 2.0)
            throw std::invalid_argument("RobotParams: friction_coefficient outside (0, 2]");
        if (min_normal_force < 0.0)
            throw std::invalid_argument("RobotParams: min_normal_force must be >= 0");
        for (const auto& h : hip_offsets) require_finite(h, "RobotParams.hip_offsets");
    }
};

/// Rotation about world z by `yaw`.
inline Mat3 rotation_z(double yaw) {
    if (!std::isfinite(yaw)) throw std::invalid_argument("rotation_z: non-finite yaw");
    const double c = std::cos(yaw), s = std::sin(yaw);
    Mat3 r;
    r << c, -s, 0.0,
         s,  c, 0.0,
         0.0, 0.0, 1.0;
    return r;
}

/// Cross-product matrix: skew(v) * w == v x w.
inline Mat3 skew(const Vec3& v) {
    require_finite(v, "skew");
    Mat3 m;
    m <<  0.0,   -v.z(),  v.y(),
          v.z(),  0.0,   -v.x(),
         -v.y(),  v.x(),  0.0;
    return m;
}

/// Maps body angular velocity to roll-pitch-yaw rates.
inline Vec3 body_rates_to_rpy_rates(const Vec3& rpy, const Vec3& omega_body) {
    const double cr = std::cos(rpy.x()), sr = std::sin(rpy.x());
    const double cp = std::cos(rpy.y()), sp = std::sin(rpy.y());
    // Inverse of the rpy-rate -> body-rate map, valid away from cos(pitch)=0.
    Mat3 e_inv;
    e_inv << 1.0, sr * sp / cp, cr * sp / cp,
             0.0, cr, -sr,
             0.0, sr / cp, cr / cp;
    return e_inv * omega_body;
}

}  // namespace dpc
