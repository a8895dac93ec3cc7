#pragma once

#include "dpc/types.hpp"

#include <vector>

namespace dpc {

/// Serial-link arm bolted to the trunk. Joint 0 pans about the mount z axis,
/// the remaining joints pitch about the local y axis; link i extends after
/// joint i (link 0 is the vertical base column). Everything is expressed in
/// the body frame. arm_count == 2 mirrors a second chain across the x-z plane.
struct ArmModel {
    VecX link_lengths;
    VecX link_masses;
    double gripper_mass = 0.1;
    Vec3 mount_offset = Vec3(0.15, 0.0, 0.05);
    VecX joint_lower;
    VecX joint_upper;
    int arm_count = 1;

    int dof_per_arm() const { return static_cast<int>(link_lengths.size()); }
    int dof_total() const { return dof_per_arm() * arm_count; }

    void validate() const {
        const int d = dof_per_arm();
        if (d < 1) throw std::invalid_argument("ArmModel: needs at least one link");
        if (link_masses.size() != d || joint_lower.size() != d || joint_upper.size() != d)
            throw std::invalid_argument("ArmModel: per-joint arrays must match link count");
        if ((link_lengths.array() <= 0.0).any())
            throw std::invalid_argument("ArmModel: link lengths must be positive");
        if ((link_masses.array() < 0.0).any() || gripper_mass < 0.0)
            throw std::invalid_argument("ArmModel: masses must be nonnegative");
        if (arm_count != 1 && arm_count != 2)
            throw std::invalid_argument("ArmModel: arm_count must be 1 or 2");
        if ((joint_lower.array() > joint_upper.array()).any())
            throw std::invalid_argument("ArmModel: joint_lower exceeds joint_upper");
    }

    Vec3 mount(int arm) const {
        Vec3 m = mount_offset;
        if (arm == 1) m.y() = -m.y();
        return m;
    }

    VecX rest_pose() const {
        VecX q(dof_total());
        for (int a = 0; a < arm_count; ++a) {
            const int d = dof_per_arm();
            for (int j = 0; j < d; ++j) {
                double v = 0.0;
                if (j == 1) v = 0.6;
                if (j == 2) v = -1.1;
                if (j == 3) v = 0.5;
                q(a * d + j) = std::clamp(v, joint_lower(j), joint_upper(j));
            }
        }
        return q;
    }

    VecX clamp_to_limits(const VecX& q) const {
        VecX out = q;
        const int d = dof_per_arm();
        for (int a = 0; a < arm_count; ++a)
            for (int j = 0; j < d; ++j)
                out(a * d + j) = std::clamp(q(a * d + j), joint_lower(j), joint_upper(j));
        return out;
    }
};

/// Four-DOF desk-scale arm with a configurable biceps link and gripper mass;
/// `arm_count == 2` mirrors a second identical chain.
inline ArmModel make_serial_arm(double biceps_length, double gripper_mass, int arm_count = 1) {
    ArmModel arm;
    arm.link_lengths = (VecX(4) << 0.06, biceps_length, 0.14, 0.09).finished();
    arm.link_masses = (VecX(4) << 0.3, 0.25, 0.2, 0.15).finished();
    arm.gripper_mass = gripper_mass;
    arm.joint_lower = (VecX(4) << -2.6, -1.8, -2.2, -1.8).finished();
    arm.joint_upper = (VecX(4) << 2.6, 1.8, 2.2, 1.8).finished();
    arm.arm_count = arm_count;
    if (arm_count == 2) arm.mount_offset = Vec3(0.15, 0.06, 0.05);
    return arm;
}

struct ArmKinematics {
    std::vector<Vec3> link_coms;    // one per link per arm, includes base column
    std::vector<double> link_masses;
    std::vector<Vec3> tips;         // gripper position per arm
};

/// Forward kinematics in the body frame for all arms of the model.
inline ArmKinematics arm_forward_kinematics(const ArmModel& model, const VecX& joint_angles) {
    if (joint_angles.size() != model.dof_total())
        throw std::invalid_argument("arm_forward_kinematics: joint dimension mismatch");
    ArmKinematics out;
    const int d = model.dof_per_arm();
    for (int a = 0; a < model.arm_count; ++a) {
        const Vec3 base = model.mount(a);
        const double pan = joint_angles(a * d + 0);
        const double cy = std::cos(pan), sy = std::sin(pan);

        // Base column rises along +z; remaining links live in the panned
        // vertical plane with accumulated elevation.
        Vec3 joint_pos = base + Vec3(0.0, 0.0, model.link_lengths(0));
        out.link_coms.push_back(base + Vec3(0.0, 0.0, 0.5 * model.link_lengths(0)));
        out.link_masses.push_back(model.link_masses(0));

        double elevation = 0.0;
        for (int j = 1; j < d; ++j) {
            elevation += joint_angles(a * d + j);
            const double ce = std::cos(elevation), se = std::sin(elevation);
            Vec3 dir(ce * cy, ce * sy, se);
            out.link_coms.push_back(joint_pos + 0.5 * model.link_lengths(j) * dir);
            out.link_masses.push_back(model.link_masses(j));
            joint_pos += model.link_lengths(j) * dir;
        }
        out.tips.push_back(joint_pos);
    }
    return out;
}

/// Quasi-static reaction wrench the arm applies to the trunk, expressed in the
/// body frame with torque taken about the (primary) mount point. Gravity
/// defaults to level trunk; pass the rotated vector for a tilted body. The
/// external tip force acts at arm 0's gripper.
inline Vec6 arm_reaction_wrench(const ArmModel& model, const ArmState& arm_state,
                                const Vec3& external_tip_force,
                                const Vec3& gravity_body = Vec3(0.0, 0.0, -9.81)) {
    model.validate();
    ArmKinematics kin = arm_forward_kinematics(model, arm_state.joint_angles);
    const Vec3 p0 = model.mount(0);

    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero();
    for (size_t i = 0; i < kin.link_coms.size(); ++i) {
        const Vec3 fg = kin.link_masses[i] * gravity_body;
        force += fg;
        torque += (kin.link_coms[i] - p0).cross(fg);
    }
    for (size_t a = 0; a < kin.tips.size(); ++a) {
        const Vec3 fg = model.gripper_mass * gravity_body;
        force += fg;
        torque += (kin.tips[a] - p0).cross(fg);
    }
    force += external_tip_force;
    torque += (kin.tips[0] - p0).cross(external_tip_force);

    Vec6 wrench;
    wrench << force, torque;
    return wrench;
}

/// Re-expresses a wrench given about `about` as a wrench about the body COM
/// (the body-frame origin).
inline Vec6 shift_wrench_to_com(const Vec6& wrench, const Vec3& about) {
    Vec6 out = wrench;
    out.tail<3>() += about.cross(Vec3(wrench.head<3>()));
    return out;
}

}  // namespace dpc
