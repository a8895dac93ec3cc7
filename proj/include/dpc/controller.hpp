#pragma once

#include "dpc/dynamics.hpp"
#include "dpc/qp.hpp"
#include "dpc/types.hpp"

namespace dpc {

/// Diagonal gains for the pose PD, the force QP cost and the swing PD.
/// Pose channels: (x, y, z, roll, pitch, yaw); x/y position and yaw angle are
/// velocity-controlled only, hence their kp entries default to zero.
struct ControllerGains {
    Vec6 kp_pose = (Vec6() << 0.0, 0.0, 100.0, 250.0, 250.0, 0.0).finished();
    Vec6 kd_pose = (Vec6() << 10.0, 10.0, 10.0, 10.0, 10.0, 10.0).finished();
    Vec3 kp_swing = Vec3::Constant(300.0);
    Vec3 kd_swing = Vec3::Constant(10.0);
    Vec6 q_weights = (Vec6() << 1.0, 1.0, 10.0, 20.0, 20.0, 10.0).finished();
    Vec12 r_weights = Vec12::Constant(1e-4);

    void validate() const {
        if ((kp_pose.array() < 0).any() || (kd_pose.array() < 0).any() ||
            (kp_swing.array() < 0).any() || (kd_swing.array() < 0).any() ||
            (q_weights.array() < 0).any() || (r_weights.array() < 0).any())
            throw std::invalid_argument("ControllerGains: gains must be nonnegative");
        if (q_weights.isZero())
            throw std::invalid_argument("ControllerGains: q_weights all zero");
    }
};

/// Trot scheduler state. Feet are ordered (FL, FR, RL, RR); the diagonal
/// pairs {FL, RR} and {FR, RL} swing together. swing_duration == 0 encodes
/// standing (all feet stance, phase frozen).
struct GaitState {
    double phase = 0.0;
    double swing_duration = 0.3;
    std::array<bool, 4> stance_mask = {true, true, true, true};
    std::array<Vec3, 4> swing_targets = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};

    static GaitState standing() {
        GaitState g;
        g.swing_duration = 0.0;
        return g;
    }

    static GaitState trot(double swing_duration) {
        GaitState g;
        g.swing_duration = swing_duration;
        // All-stance start; the first scheduler step lifts the first pair and
        // records their liftoff positions.
        return g;
    }
};

/// Eq.-9 pose PD. Controlled position channels: height, roll, pitch; velocity
/// channels: v_x, v_y (heading frame command), yaw rate, with roll/pitch rates
/// damped to zero. Angular velocity errors act on the body rates directly.
inline Vec6 target_acceleration(const ControllerGains& gains, const TrajectoryPoint& desired,
                                const BodyState& body) {
    const Mat3 rz = rotation_z(body.orientation_rpy.z());

    Vec6 pose_err = Vec6::Zero();
    pose_err(2) = desired.desired_height - body.position.z();
    pose_err(3) = desired.desired_roll - body.orientation_rpy.x();
    pose_err(4) = desired.desired_pitch - body.orientation_rpy.y();

    Vec6 vel_err;
    const Vec3 v_des_world =
        rz * Vec3(desired.desired_linear_velocity.x(), desired.desired_linear_velocity.y(), 0.0);
    vel_err.head<3>() = v_des_world - body.linear_velocity;
    vel_err(3) = -body.angular_velocity.x();
    vel_err(4) = -body.angular_velocity.y();
    vel_err(5) = desired.desired_yaw_rate - body.angular_velocity.z();

    return gains.kp_pose.cwiseProduct(pose_err) + gains.kd_pose.cwiseProduct(vel_err);
}

/// Eq.-11 swing PD; damping acts on the absolute foot velocity.
inline Vec3 swing_force(const ControllerGains& gains, const Vec3& desired_pos, const Vec3& pos,
                        const Vec3& vel) {
    return gains.kp_swing.cwiseProduct(desired_pos - pos) - gains.kd_swing.cwiseProduct(vel);
}

/// tau = J^T f with J the 12x12 block-diagonal stack of 3x3 leg Jacobians.
inline Vec12 forces_to_torques(const Mat12& jacobian, const Vec12& forces) {
    require_finite(forces, "forces_to_torques: forces");
    return jacobian.transpose() * forces;
}

struct StanceForceResult {
    Vec12 forces = Vec12::Zero();
    QpStatus status = QpStatus::optimal;
    double qp_residual = 0.0;
    double qp_objective = 0.0;
};

/// Builds and solves the Eq.-10 force QP over the stance feet. Friction is the
/// standard pyramid |f_x| <= mu f_z, |f_y| <= mu f_z with f_z boxed between
/// the configured minimum and maximum normal force.
inline StanceForceResult stance_force_qp(const DynamicsMatrices& dyn, const Vec6& qdd_d,
                                         const DisturbanceParams& dist,
                                         const ControllerGains& gains, const RobotParams& params,
                                         const std::array<bool, 4>& stance_mask,
                                         QpSolver& solver) {
    std::vector<int> stance;
    for (int i = 0; i < 4; ++i)
        if (stance_mask[i]) stance.push_back(i);
    if (stance.size() < 2)
        throw std::invalid_argument("stance_force_qp: needs at least 2 stance feet");

    const int n = 3 * static_cast<int>(stance.size());
    MatX m_st(6, n);
    VecX r_st(n);
    for (size_t j = 0; j < stance.size(); ++j) {
        m_st.middleCols<3>(3 * static_cast<int>(j)) = dyn.M.middleCols<3>(3 * stance[j]);
        r_st.segment<3>(3 * static_cast<int>(j)) = gains.r_weights.segment<3>(3 * stance[j]);
    }

    const Vec6 target = dyn.gravity_vec + qdd_d - dyn.A * dist.force - dyn.B * dist.torque;

    QpProblem qp;
    qp.hessian = 2.0 * (m_st.transpose() * gains.q_weights.asDiagonal() * m_st +
                        MatX(r_st.asDiagonal()));
    qp.linear_term = -2.0 * m_st.transpose() * gains.q_weights.cwiseProduct(target);

    const double mu = params.friction_coefficient;
    const double inf = std::numeric_limits<double>::infinity();
    const int m = 5 * static_cast<int>(stance.size());
    qp.ineq_matrix = MatX::Zero(m, n);
    qp.ineq_lower = VecX::Zero(m);
    qp.ineq_upper = VecX::Zero(m);
    for (size_t j = 0; j < stance.size(); ++j) {
        const int v = 3 * static_cast<int>(j);
        const int row = 5 * static_cast<int>(j);
        qp.ineq_matrix(row, v + 2) = 1.0;  // f_z box
        qp.ineq_lower(row) = params.min_normal_force;
        qp.ineq_upper(row) = params.max_normal_force;
        qp.ineq_matrix(row + 1, v + 0) = 1.0;  // f_x - mu f_z <= 0
        qp.ineq_matrix(row + 1, v + 2) = -mu;
        qp.ineq_lower(row + 1) = -inf;
        qp.ineq_matrix(row + 2, v + 0) = 1.0;  // f_x + mu f_z >= 0
        qp.ineq_matrix(row + 2, v + 2) = mu;
        qp.ineq_upper(row + 2) = inf;
        qp.ineq_matrix(row + 3, v + 1) = 1.0;  // f_y - mu f_z <= 0
        qp.ineq_matrix(row + 3, v + 2) = -mu;
        qp.ineq_lower(row + 3) = -inf;
        qp.ineq_matrix(row + 4, v + 1) = 1.0;  // f_y + mu f_z >= 0
        qp.ineq_matrix(row + 4, v + 2) = mu;
        qp.ineq_upper(row + 4) = inf;
    }

    QpSolution qs = solver.solve(qp, 1e-8, 4000);

    StanceForceResult out;
    out.status = qs.status;
    out.qp_residual = qs.kkt_residual;
    out.qp_objective = qs.objective;
    if (qs.status != QpStatus::infeasible) {
        for (size_t j = 0; j < stance.size(); ++j)
            out.forces.segment<3>(3 * stance[j]) = qs.x.segment<3>(3 * static_cast<int>(j));
    }
    return out;
}

/// Advances the trot phase, swaps the diagonal pairs at the half cycle and
/// refreshes Raibert swing targets (hip projection + half stance travel).
inline GaitState gait_step(const GaitState& gait, double dt, const TrajectoryPoint& desired,
                           const BodyState& body, const RobotParams& params) {
    if (!(dt > 0.0)) throw std::invalid_argument("gait_step: dt must be > 0");
    GaitState next = gait;
    if (gait.swing_duration <= 0.0) return next;  // standing

    const double cycle = 2.0 * gait.swing_duration;
    next.phase = std::fmod(gait.phase + dt / cycle, 1.0);
    if (next.phase < 0.5) {
        next.stance_mask = {true, false, false, true};
    } else {
        next.stance_mask = {false, true, true, false};
    }

    const Mat3 rz = rotation_z(body.orientation_rpy.z());
    const Vec3 v_des_world =
        rz * Vec3(desired.desired_linear_velocity.x(), desired.desired_linear_velocity.y(), 0.0);
    // Capture-point feedback on the measured velocity keeps the stepping
    // stable; the gain is sqrt(h/g) at the nominal stand height.
    const double step_gain = 0.17;
    Vec3 v = body.linear_velocity;
    v.z() = 0.0;
    for (int i = 0; i < 4; ++i) {
        if (next.stance_mask[i]) continue;
        Vec3 hip = body.position + rz * params.hip_offsets[i];
        Vec3 target = hip + 0.5 * gait.swing_duration * v + step_gain * (v - v_des_world);
        target.z() = 0.0;
        next.swing_targets[i] = target;
    }
    return next;
}

struct LegCommand {
    Vec12 torques = Vec12::Zero();
    Vec12 foot_forces = Vec12::Zero();
    std::array<bool, 4> stance_mask = {true, true, true, true};
    std::array<Vec3, 4> swing_targets = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    QpStatus qp_status = QpStatus::optimal;
};

/// Stateful assembly of the low-level pipeline: gait scheduling, pose PD,
/// force QP with warm start, swing PD and the torque map. One instance per
/// simulated robot.
class LowLevelController {
public:
    LowLevelController(RobotParams params, ControllerGains gains, GaitState gait,
                       double swing_height = 0.06)
        : params_(std::move(params)), gains_(std::move(gains)), gait_(gait),
          swing_height_(swing_height) {
        params_.validate();
        gains_.validate();
        jacobian_.setIdentity();
        const double quarter = params_.mass * 9.81 / 4.0;
        for (int i = 0; i < 4; ++i) last_valid_forces_(3 * i + 2) = quarter;
    }

    const GaitState& gait() const { return gait_; }
    void set_gait(const GaitState& g) { gait_ = g; }
    const Mat12& jacobian() const { return jacobian_; }
    void set_jacobian(const Mat12& j) { jacobian_ = j; }

    LegCommand tick(const BodyState& body, const FootGeometry& feet,
                    const std::array<Vec3, 4>& foot_velocities, const TrajectoryPoint& desired,
                    const DisturbanceParams& dist, double dt) {
        const std::array<bool, 4> prev_mask = gait_.stance_mask;
        gait_ = gait_step(gait_, dt, desired, body, params_);
        for (int i = 0; i < 4; ++i) {
            if (prev_mask[i] && !gait_.stance_mask[i]) liftoff_[i] = feet.foot_positions[i];
        }

        FootGeometry ctrl_feet = feet;
        ctrl_feet.stance_mask = gait_.stance_mask;

        const DynamicsMatrices dyn = build_matrices(params_, body, ctrl_feet, gravity_);
        const Vec6 qdd_d = target_acceleration(gains_, desired, body);
        StanceForceResult st = stance_force_qp(dyn, qdd_d, dist, gains_, params_,
                                               gait_.stance_mask, solver_);
        if (st.status == QpStatus::infeasible) {
            st.forces = last_valid_forces_;
        } else {
            last_valid_forces_ = st.forces;
        }

        Vec12 combined = st.forces;
        for (int i = 0; i < 4; ++i) {
            if (gait_.stance_mask[i]) continue;
            const Vec3 pd = swing_desired_position(i);
            combined.segment<3>(3 * i) =
                swing_force(gains_, pd, feet.foot_positions[i], foot_velocities[i]);
        }

        LegCommand cmd;
        cmd.torques = forces_to_torques(jacobian_, combined);
        cmd.foot_forces = combined;
        cmd.stance_mask = gait_.stance_mask;
        cmd.swing_targets = gait_.swing_targets;
        cmd.qp_status = st.status;
        return cmd;
    }

    /// Interpolated swing trajectory from the liftoff point to the Raibert
    /// target with a parabolic apex.
    Vec3 swing_desired_position(int foot) const {
        double s = gait_.phase < 0.5 ? gait_.phase / 0.5 : (gait_.phase - 0.5) / 0.5;
        s = std::clamp(s, 0.0, 1.0);
        const double blend = s * s * (3.0 - 2.0 * s);
        Vec3 pos = (1.0 - blend) * liftoff_[foot] + blend * gait_.swing_targets[foot];
        pos.z() += swing_height_ * 4.0 * s * (1.0 - s);
        return pos;
    }

private:
    RobotParams params_;
    ControllerGains gains_;
    GaitState gait_;
    double swing_height_;
    double gravity_ = 9.81;
    Mat12 jacobian_;
    QpSolver solver_;
    Vec12 last_valid_forces_ = Vec12::Zero();
    std::array<Vec3, 4> liftoff_ = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
};

}  // namespace dpc
