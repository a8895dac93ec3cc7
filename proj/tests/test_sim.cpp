#include "dpc/sim.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace dpc;

namespace {

ArmModel massless_arm() {
    ArmModel arm = make_serial_arm(0.14, 0.0);
    arm.link_masses.setZero();
    return arm;
}

LegCommand airborne_command() {
    LegCommand cmd;
    cmd.stance_mask = {false, false, false, false};
    return cmd;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("zero gravity and zero forces leave the state constant") {
    SimConfig config;
    config.gravity = 0.0;
    Simulator sim(RobotParams{}, massless_arm(), ControllerGains{}, config);
    ArmCommand hold;
    hold.desired_joint_positions = sim.state().arm_q;
    const Vec3 pos0 = sim.state().body.position;
    for (int i = 0; i < 500; ++i) sim.step_physics(airborne_command(), hold, Vec3::Zero());
    CHECK((sim.state().body.position - pos0).norm() == 0.0);
    CHECK(sim.state().body.linear_velocity.norm() == 0.0);
    CHECK(sim.state().body.angular_velocity.norm() == 0.0);
}

TEST_CASE("free fall follows the closed form within integrator error") {
    SimConfig config;
    Simulator sim(RobotParams{}, massless_arm(), ControllerGains{}, config);
    ArmCommand hold;
    hold.desired_joint_positions = sim.state().arm_q;
    const double h0 = sim.state().body.position.z();
    const double t = 0.2;
    const int steps = static_cast<int>(std::round(t / config.physics_dt));
    for (int i = 0; i < steps; ++i) sim.step_physics(airborne_command(), hold, Vec3::Zero());
    const double expected = h0 - 0.5 * 9.81 * t * t;
    CHECK(std::abs(sim.state().body.position.z() - expected) < 2.5e-3);
}

TEST_CASE("tossed trunk conserves energy within one percent over a second") {
    SimConfig config;
    RobotParams robot;
    Simulator sim(robot, massless_arm(), ControllerGains{}, config);
    Simulator::State s = sim.state();
    s.body.linear_velocity = Vec3(2.0, 0.5, 2.0);
    s.body.angular_velocity = Vec3(1.0, 0.5, 0.2);
    sim.set_state(s);
    ArmCommand hold;
    hold.desired_joint_positions = sim.state().arm_q;

    const auto energy = [&](const Simulator::State& st) {
        const double kin = 0.5 * robot.mass * st.body.linear_velocity.squaredNorm() +
                           0.5 * st.body.angular_velocity.dot(robot.trunk_inertia *
                                                              st.body.angular_velocity);
        return kin + robot.mass * 9.81 * st.body.position.z();
    };
    const double e0 = energy(sim.state());
    for (int i = 0; i < 1000; ++i) sim.step_physics(airborne_command(), hold, Vec3::Zero());
    CHECK(std::abs(energy(sim.state()) - e0) < 0.01 * std::abs(e0));
}

TEST_CASE("termination fires exactly at its thresholds") {
    CHECK(fall_condition(0.05, 0.0, 0.0));
    CHECK_FALSE(fall_condition(0.0500001, 0.0, 0.0));
    CHECK(fall_condition(0.3, 0.8, 0.0));
    CHECK_FALSE(fall_condition(0.3, 0.7999999, 0.0));
    CHECK(fall_condition(0.3, 0.0, -0.8));
    CHECK_FALSE(fall_condition(0.3, 0.0, -0.7999999));
}

TEST_CASE("full stack stands level with pinned feet") {
    SimConfig config;
    RobotParams robot;
    TaskSpec task;
    Env env(robot, massless_arm(), ControllerGains{}, config, task, nullptr);
    env.reset(3);
    const auto feet0 = env.sim().state().foot_pos;
    for (int i = 0; i < 100; ++i) {  // 2 s
        Env::StepResult r = env.step(mbc_baseline());
        REQUIRE_FALSE(r.fell);
        CHECK(std::abs(env.sim().state().body.orientation_rpy.x()) < 1e-2);
        CHECK(std::abs(env.sim().state().body.orientation_rpy.y()) < 1e-2);
    }
    for (int i = 0; i < 4; ++i)
        CHECK((env.sim().state().foot_pos[i] - feet0[i]).norm() <= 1e-9);
}

TEST_CASE("standing MBC return is near the reward ceiling") {
    SimConfig config;
    TaskSpec task;
    EpisodeLog log = run_episode(RobotParams{}, massless_arm(), ControllerGains{}, config, task,
                                 PolicyRef{PolicyKind::mbc}, nullptr, 11, "none");
    CHECK_FALSE(log.fell);
    const double ceiling = 0.34 * static_cast<double>(log.steps.size());
    CHECK(log.episode_return > 0.98 * ceiling);
    CHECK(log.episode_return <= ceiling + 1e-9);
}

TEST_CASE("trot walking tracks a forward command without falling") {
    SimConfig config;
    config.episode_length = 5.0;
    TaskSpec task;
    task.kind = TaskKind::pushing;
    task.push_force = 0.0;  // pure walking
    task.forward_speed = 0.15;
    EpisodeLog log = run_episode(RobotParams{}, massless_arm(), ControllerGains{}, config, task,
                                 PolicyRef{PolicyKind::mbc}, nullptr, 4, "none");
    CHECK_FALSE(log.fell);
    CHECK(log.episode_return > 0.5 * 0.34 * static_cast<double>(log.steps.size()));
}

TEST_CASE("episodes are deterministic and MBC equals zero-actor DPC") {
    SimConfig config;
    config.episode_length = 2.0;
    TaskSpec task;
    task.kind = TaskKind::reaching;
    task.pulses.enabled = true;
    ArmModel arm = make_serial_arm(0.14, 0.1);
    RobotParams robot;
    ControllerGains gains;

    EpisodeLog a = run_episode(robot, arm, gains, config, task, PolicyRef{PolicyKind::mbc},
                               nullptr, 17, "regular");
    EpisodeLog b = run_episode(robot, arm, gains, config, task, PolicyRef{PolicyKind::mbc},
                               nullptr, 17, "regular");

    const auto tmp = std::filesystem::temp_directory_path();
    a.save_csv((tmp / "dpc_ep_a.csv").string());
    b.save_csv((tmp / "dpc_ep_b.csv").string());
    CHECK(slurp(tmp / "dpc_ep_a.csv") == slurp(tmp / "dpc_ep_b.csv"));

    SacAgent agent(SacConfig{}, 1);
    agent.zero_actor();
    PolicyRef dpc{PolicyKind::dpc, &agent, false};
    EpisodeLog c = run_episode(robot, arm, gains, config, task, dpc, nullptr, 17, "regular");
    c.policy = "mbc";  // align metadata; trajectories must match bit-for-bit
    c.save_csv((tmp / "dpc_ep_c.csv").string());
    CHECK(slurp(tmp / "dpc_ep_a.csv") == slurp(tmp / "dpc_ep_c.csv"));
    for (const auto& p : {"dpc_ep_a.csv", "dpc_ep_b.csv", "dpc_ep_c.csv"})
        std::filesystem::remove(tmp / p);
}

TEST_CASE("oracle compensation beats MBC under a lateral tip force") {
    SimConfig config;
    config.episode_length = 4.0;
    TaskSpec task;
    task.constant_tip_force = Vec3(0.0, 10.0, 0.0);
    ArmModel arm = make_serial_arm(0.14, 0.1);

    const auto rms_tilt = [](const EpisodeLog& log) {
        double acc = 0.0;
        for (const auto& s : log.steps) acc += s.roll * s.roll + s.pitch * s.pitch;
        return std::sqrt(acc / static_cast<double>(log.steps.size()));
    };

    EpisodeLog mbc = run_episode(RobotParams{}, arm, ControllerGains{}, config, task,
                                 PolicyRef{PolicyKind::mbc}, nullptr, 5, "regular");
    EpisodeLog oracle = run_episode(RobotParams{}, arm, ControllerGains{}, config, task,
                                    PolicyRef{PolicyKind::oracle}, nullptr, 5, "regular");
    // The uncompensated stand may tip over under the sustained push; the
    // compensated run must hold level.
    REQUIRE_FALSE(oracle.fell);
    CHECK(rms_tilt(oracle) <= 0.2 * rms_tilt(mbc));
    CHECK(oracle.episode_return > mbc.episode_return);
}

TEST_CASE("random-motion collection responds to arm mass") {
    SimConfig config;
    ControllerGains gains;
    RobotParams robot;

    AdapterDataset light = collect_random_motion(robot, massless_arm(), gains, config, 1000, 7);
    AdapterDataset heavy = collect_random_motion(robot, make_serial_arm(0.14, 0.5), gains,
                                                 config, 1000, 7);
    REQUIRE(light.samples.size() == 1000);
    REQUIRE(heavy.samples.size() == 1000);
    CHECK(heavy.next_drp_variance() > light.next_drp_variance());

    AdapterDataset again = collect_random_motion(robot, massless_arm(), gains, config, 1000, 7);
    const auto tmp = std::filesystem::temp_directory_path();
    light.save_csv((tmp / "dpc_ds_a.csv").string());
    again.save_csv((tmp / "dpc_ds_b.csv").string());
    CHECK(slurp(tmp / "dpc_ds_a.csv") == slurp(tmp / "dpc_ds_b.csv"));

    AdapterDataset loaded = AdapterDataset::load_csv((tmp / "dpc_ds_a.csv").string());
    REQUIRE(loaded.samples.size() == light.samples.size());
    CHECK(loaded.arm_dof == light.arm_dof);
    CHECK((adapter_features(loaded.samples[13]) - adapter_features(light.samples[13])).norm() ==
          0.0);
    std::filesystem::remove(tmp / "dpc_ds_a.csv");
    std::filesystem::remove(tmp / "dpc_ds_b.csv");
}

TEST_CASE("arm wrench oracle matches an independent per-link computation") {
    // Homogeneous-transform reimplementation of the chain, summed per link.
    ArmModel arm = make_serial_arm(0.2, 0.4);
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        VecX q(4);
        for (int j = 0; j < 4; ++j) q(j) = u(rng);
        ArmState as;
        as.joint_angles = q;
        Vec3 tip_force(u(rng), u(rng), u(rng));
        Vec3 gravity(0.3 * u(rng), 0.3 * u(rng), -9.81);

        Vec6 wrench = arm_reaction_wrench(arm, as, tip_force, gravity);

        auto transform = [](const Mat3& r, const Vec3& t) {
            Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
            m.topLeftCorner<3, 3>() = r;
            m.topRightCorner<3, 1>() = t;
            return m;
        };
        const auto rot_y = [](double a) {
            Mat3 r;
            r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
            return r;
        };
        Eigen::Matrix4d t01 = transform(rotation_z(q(0)), arm.mount_offset);
        std::vector<Vec3> coms;
        Eigen::Matrix4d cur = t01 * transform(Mat3::Identity(), Vec3(0, 0, arm.link_lengths(0)));
        coms.push_back((t01 * transform(Mat3::Identity(), Vec3(0, 0, arm.link_lengths(0) / 2)))
                           .topRightCorner<3, 1>());
        for (int j = 1; j < 4; ++j) {
            cur = cur * transform(rot_y(-q(j)), Vec3::Zero());
            coms.push_back(
                (cur * transform(Mat3::Identity(), Vec3(arm.link_lengths(j) / 2, 0, 0)))
                    .topRightCorner<3, 1>());
            cur = cur * transform(Mat3::Identity(), Vec3(arm.link_lengths(j), 0, 0));
        }
        const Vec3 tip = cur.topRightCorner<3, 1>();

        Vec3 force = Vec3::Zero(), torque = Vec3::Zero();
        for (int j = 0; j < 4; ++j) {
            const Vec3 fg = arm.link_masses(j) * gravity;
            force += fg;
            torque += (coms[j] - arm.mount_offset).cross(fg);
        }
        force += arm.gripper_mass * gravity + tip_force;
        torque += (tip - arm.mount_offset).cross(Vec3(arm.gripper_mass * gravity)) +
                  (tip - arm.mount_offset).cross(tip_force);

        CHECK((wrench.head<3>() - force).norm() < 1e-10);
        CHECK((wrench.tail<3>() - torque).norm() < 1e-10);
    }
}

TEST_CASE("arm wrench simple cases") {
    ArmState rest;
    rest.joint_angles = VecX::Zero(4);
    CHECK(arm_reaction_wrench(massless_arm(), rest, Vec3::Zero()).norm() == 0.0);

    // Single 1 kg point mass 0.5 m from the mount, gravity perpendicular to
    // the lever: the classic r x F case.
    ArmModel stick;
    stick.link_lengths = VecX::Constant(1, 1.0);
    stick.link_masses = VecX::Constant(1, 1.0);
    stick.gripper_mass = 0.0;
    stick.mount_offset = Vec3::Zero();
    stick.joint_lower = VecX::Constant(1, -3.0);
    stick.joint_upper = VecX::Constant(1, 3.0);
    ArmState s;
    s.joint_angles = VecX::Zero(1);
    // Link runs along +z with COM at (0,0,0.5); gravity along -x gives
    // torque (0,0,0.5) x (-9.81,0,0) = (0,-4.905,0).
    Vec6 w = arm_reaction_wrench(stick, s, Vec3::Zero(), Vec3(-9.81, 0.0, 0.0));
    CHECK((w.head<3>() - Vec3(-9.81, 0.0, 0.0)).norm() < 1e-12);
    CHECK((w.tail<3>() - Vec3(0.0, -4.905, 0.0)).norm() < 1e-12);
}

TEST_CASE("dual arm doubles the gravity load and mirrors the mounts") {
    ArmModel single = make_serial_arm(0.14, 0.1, 1);
    ArmModel dual = make_serial_arm(0.14, 0.1, 2);
    ArmState qs, qd;
    qs.joint_angles = single.rest_pose();
    qd.joint_angles = dual.rest_pose();
    Vec6 ws = arm_reaction_wrench(single, qs, Vec3::Zero());
    Vec6 wd = arm_reaction_wrench(dual, qd, Vec3::Zero());
    CHECK(std::abs(wd(2) - 2.0 * ws(2)) < 1e-12);
    CHECK(dual.mount(0).y() == -dual.mount(1).y());
}
