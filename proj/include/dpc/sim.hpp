#pragma once

#include "dpc/adapter.hpp"
#include "dpc/arm.hpp"
#include "dpc/controller.hpp"
#include "dpc/sac.hpp"

#include <functional>
#include <optional>
#include <random>

namespace dpc {

struct SimConfig {
    double physics_dt = 0.001;
    double lowlevel_period = 0.002;
    double highlevel_period = 0.02;
    double episode_length = 10.0;
    double gravity = 9.81;
    std::uint64_t seed = 0;

    void validate() const {
        if (physics_dt <= 0.0) throw std::invalid_argument("SimConfig: physics_dt must be > 0");
        const auto multiple = [&](double period) {
            const double ratio = period / physics_dt;
            return std::abs(ratio - std::round(ratio)) < 1e-9 && ratio >= 1.0;
        };
        if (!multiple(lowlevel_period) || !multiple(highlevel_period))
            throw std::invalid_argument("SimConfig: periods must be integer multiples of physics_dt");
        if (episode_length <= 0.0)
            throw std::invalid_argument("SimConfig: episode_length must be > 0");
    }

    int physics_per_lowlevel() const {
        return static_cast<int>(std::round(lowlevel_period / physics_dt));
    }
    int lowlevel_per_highlevel() const {
        return static_cast<int>(std::round(highlevel_period / lowlevel_period));
    }
    int highlevel_steps() const {
        return static_cast<int>(std::round(episode_length / highlevel_period));
    }
};

enum class TaskKind { standing, reaching, pushing, carrying };

inline const char* task_name(TaskKind k) {
    switch (k) {
        case TaskKind::standing: return "standing";
        case TaskKind::reaching: return "reaching";
        case TaskKind::pushing: return "pushing";
        case TaskKind::carrying: return "carrying";
    }
    return "unknown";
}

inline TaskKind task_from_name(const std::string& name) {
    if (name == "standing") return TaskKind::standing;
    if (name == "reaching") return TaskKind::reaching;
    if (name == "pushing") return TaskKind::pushing;
    if (name == "carrying") return TaskKind::carrying;
    throw std::invalid_argument("unknown task: " + name);
}

/// Random tip-force pulses used while training the estimator.
struct PulseConfig {
    bool enabled = false;
    double magnitude_lo = 0.0;
    double magnitude_hi = 20.0;
    double duration = 0.5;
    double mean_gap = 2.0;
};

struct TaskSpec {
    TaskKind kind = TaskKind::standing;
    double push_force = 15.0;     // pushing: resisting horizontal tip force [N]
    double forward_speed = 0.1;   // pushing: commanded walk speed [m/s]
    double payload_mass = 0.3;    // carrying: held ball mass [kg]
    double table_height = 0.12;   // carrying: lift height knob [m]
    int ball_count = 1;           // carrying: transfers per episode
    Vec3 constant_tip_force = Vec3::Zero();  // world frame, any task
    PulseConfig pulses;

    void validate() const {
        if (push_force < 0.0 || payload_mass < 0.0 || table_height < 0.0 || ball_count < 1)
            throw std::invalid_argument("TaskSpec: negative parameter");
        require_finite(constant_tip_force, "TaskSpec.constant_tip_force");
    }
};

enum class PolicyKind { mbc, dpc, oracle };

inline const char* policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::mbc: return "mbc";
        case PolicyKind::dpc: return "dpc";
        case PolicyKind::oracle: return "oracle";
    }
    return "unknown";
}

struct PolicyRef {
    PolicyKind kind = PolicyKind::mbc;
    SacAgent* agent = nullptr;  // required for dpc
    bool stochastic = false;
};

struct EpisodeStep {
    double t = 0.0;
    Vec10 obs = Vec10::Zero();
    Vec6 action = Vec6::Zero();  // physical wrench (f_a, tau_a)
    double r_vel = 0.0, r_orn = 0.0, r_total = 0.0;
    Vec6 true_wrench = Vec6::Zero();
    Vec2 z = Vec2::Zero();
    double roll = 0.0, pitch = 0.0;
};

struct EpisodeLog {
    std::vector<EpisodeStep> steps;
    double episode_return = 0.0;
    bool fell = false;
    std::string task, arm, policy;
    std::uint64_t seed = 0;

    void save_csv(const std::string& path) const {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw std::runtime_error("EpisodeLog: cannot write " + path);
        f << "t";
        for (int i = 0; i < 10; ++i) f << ",obs" << i;
        f << ",fa_x,fa_y,fa_z,tau_x,tau_y,tau_z,r_vel,r_orn,r_total"
          << ",w_fx,w_fy,w_fz,w_tx,w_ty,w_tz,z0,z1,roll,pitch\n";
        f << std::setprecision(17);
        for (const auto& s : steps) {
            f << s.t;
            for (int i = 0; i < 10; ++i) f << ',' << s.obs(i);
            for (int i = 0; i < 6; ++i) f << ',' << s.action(i);
            f << ',' << s.r_vel << ',' << s.r_orn << ',' << s.r_total;
            for (int i = 0; i < 6; ++i) f << ',' << s.true_wrench(i);
            f << ',' << s.z(0) << ',' << s.z(1) << ',' << s.roll << ',' << s.pitch << '\n';
        }
        f << "# summary return=" << episode_return << " fall=" << (fell ? 1 : 0)
          << " task=" << task << " arm=" << arm << " policy=" << policy << " seed=" << seed
          << '\n';
        if (!f) throw std::runtime_error("EpisodeLog: write failed " + path);
    }
};

/// Fall predicate, inclusive at the thresholds.
inline bool fall_condition(double height, double roll, double pitch) {
    return height <= 0.05 || std::abs(roll) >= 0.8 || std::abs(pitch) >= 0.8;
}

/// Trunk-centric plant: commanded stance forces act directly on the rigid
/// trunk through the same linearized dynamics the controller uses, plus the
/// TRUE quasi-static arm wrench. Swing feet are integrated as light point
/// masses driven by the swing PD force; stance feet are pinned.
class Simulator {
public:
    struct State {
        BodyState body;
        std::array<Vec3, 4> foot_pos;
        std::array<Vec3, 4> foot_vel;
        std::array<bool, 4> pinned = {true, true, true, true};
        VecX arm_q;
        double time = 0.0;
        bool fallen = false;
    };

    Simulator(RobotParams robot, ArmModel arm, ControllerGains gains, SimConfig config)
        : robot_(std::move(robot)), arm_(std::move(arm)), gains_(gains), config_(config),
          controller_(robot_, gains_, GaitState::standing()) {
        robot_.validate();
        arm_.validate();
        config_.validate();
        jacobian_inv_t_ = Mat12::Identity();
        reset(GaitState::standing());
    }

    const State& state() const { return state_; }
    void set_state(const State& s) { state_ = s; }
    const ArmModel& arm_model() const { return arm_; }
    const RobotParams& robot_params() const { return robot_; }
    const SimConfig& config() const { return config_; }
    LowLevelController& controller() { return controller_; }

    void reset(const GaitState& gait, double height = 0.28) {
        state_ = State{};
        state_.body.position = Vec3(0.0, 0.0, height);
        for (int i = 0; i < 4; ++i) {
            state_.foot_pos[i] = robot_.hip_offsets[i];
            state_.foot_pos[i].z() = 0.0;
            state_.foot_vel[i] = Vec3::Zero();
            state_.pinned[i] = true;
        }
        state_.arm_q = arm_.rest_pose();
        controller_ = LowLevelController(robot_, gains_, gait);
        payload_ = 0.0;
    }

    void set_payload(double mass) { payload_ = mass; }
    double payload() const { return payload_; }

    FootGeometry foot_geometry() const {
        FootGeometry feet;
        feet.foot_positions = state_.foot_pos;
        feet.stance_mask = state_.pinned;
        return feet;
    }

    /// True reaction wrench at the COM in body frame, including any payload
    /// and the external tip force (given in world frame).
    Vec6 true_arm_wrench(const Vec3& tip_force_world) const {
        ArmModel loaded = arm_;
        loaded.gripper_mass += payload_;
        const Mat3 r_body = rpy_to_matrix(state_.body.orientation_rpy);
        const Vec3 gravity_body = r_body.transpose() * Vec3(0.0, 0.0, -config_.gravity);
        const Vec3 tip_body = r_body.transpose() * tip_force_world;
        ArmState as;
        as.joint_angles = state_.arm_q;
        const Vec6 at_mount = arm_reaction_wrench(loaded, as, tip_body, gravity_body);
        return shift_wrench_to_com(at_mount, loaded.mount(0));
    }

    static Mat3 rpy_to_matrix(const Vec3& rpy) {
        const double cr = std::cos(rpy.x()), sr = std::sin(rpy.x());
        const double cp = std::cos(rpy.y()), sp = std::sin(rpy.y());
        const double cy = std::cos(rpy.z()), sy = std::sin(rpy.z());
        Mat3 r;
        r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
             sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
             -sp, cp * sr, cp * cr;
        return r;
    }

    /// One physics step: semi-implicit Euler on the trunk, first-order lag on
    /// the arm joints, point-mass swing feet, pinned stance feet.
    void step_physics(const LegCommand& cmd, const ArmCommand& arm_cmd,
                      const Vec3& tip_force_world) {
        const double dt = config_.physics_dt;

        // Arm joints chase their command through a 50 ms lag.
        const VecX target = arm_.clamp_to_limits(arm_cmd.desired_joint_positions);
        const double lag = 1.0 - std::exp(-dt / 0.05);
        state_.arm_q += lag * (target - state_.arm_q);

        // Contact transitions commanded by the gait.
        for (int i = 0; i < 4; ++i) {
            if (cmd.stance_mask[i] && !state_.pinned[i]) {
                state_.foot_pos[i].z() = 0.0;  // touchdown snaps to the plane
                state_.foot_vel[i].setZero();
            }
            state_.pinned[i] = cmd.stance_mask[i];
        }

        const Vec6 wrench = true_arm_wrench(tip_force_world);
        DisturbanceParams true_dist;
        true_dist.force = wrench.head<3>();
        true_dist.torque = wrench.tail<3>();

        const Vec12 foot_forces = jacobian_inv_t_ * cmd.torques;

        Vec6 qdd;
        FootGeometry feet = foot_geometry();
        if (feet.stance_count() > 0) {
            const DynamicsMatrices dyn = build_matrices(robot_, state_.body, feet,
                                                        config_.gravity);
            Vec12 stance_forces = foot_forces;
            for (int i = 0; i < 4; ++i)
                if (!state_.pinned[i]) stance_forces.segment<3>(3 * i).setZero();
            qdd = body_acceleration(dyn, stance_forces, true_dist);
        } else {
            // Airborne: only gravity and the arm wrench act.
            DynamicsMatrices free;
            free.A.topRows<3>() = Mat3::Identity() / robot_.mass;
            free.B.bottomRows<3>() = rotation_z(state_.body.orientation_rpy.z()).transpose() *
                                     robot_.trunk_inertia.inverse();
            free.gravity_vec << 0.0, 0.0, config_.gravity, 0.0, 0.0, 0.0;
            qdd = body_acceleration(free, Vec12::Zero(), true_dist);
        }

        state_.body.linear_velocity += qdd.head<3>() * dt;
        state_.body.angular_velocity += qdd.tail<3>() * dt;
        state_.body.position += state_.body.linear_velocity * dt;
        state_.body.orientation_rpy +=
            body_rates_to_rpy_rates(state_.body.orientation_rpy, state_.body.angular_velocity) *
            dt;

        for (int i = 0; i < 4; ++i) {
            if (state_.pinned[i]) continue;
            const Vec3 f = foot_forces.segment<3>(3 * i);
            state_.foot_vel[i] += (f / kSwingFootMass + Vec3(0, 0, -config_.gravity)) * dt;
            state_.foot_pos[i] += state_.foot_vel[i] * dt;
            if (state_.foot_pos[i].z() < 0.0) {
                state_.foot_pos[i].z() = 0.0;
                state_.foot_vel[i].z() = std::max(state_.foot_vel[i].z(), 0.0);
            }
        }

        state_.time += dt;
        state_.body.timestamp = state_.time;
        if (fall_condition(state_.body.position.z(), state_.body.orientation_rpy.x(),
                           state_.body.orientation_rpy.y()))
            state_.fallen = true;
    }

    static constexpr double kSwingFootMass = 0.1;

private:
    RobotParams robot_;
    ArmModel arm_;
    ControllerGains gains_;
    SimConfig config_;
    LowLevelController controller_;
    Mat12 jacobian_inv_t_;
    State state_;
    double payload_ = 0.0;
};

/// High-level environment: steps the closed low-level loop one estimator
/// period at a time. Both training and evaluation run through this class, so
/// MBC and a zero-actor DPC follow bit-identical paths.
class Env {
public:
    Env(const RobotParams& robot, const ArmModel& arm, const ControllerGains& gains,
        const SimConfig& config, const TaskSpec& task, const AdapterModel* adapter)
        : sim_(robot, arm, gains, config), task_(task), adapter_(adapter) {
        task_.validate();
        if (adapter_ && adapter_->encoder.input_dim() != 4 + 2 * arm.dof_total())
            throw std::invalid_argument("Env: adapter encoder does not match the arm DOF");
    }

    struct StepResult {
        Vec10 obs = Vec10::Zero();
        double reward = 0.0;
        bool done = false;
        bool fell = false;
        RewardTerms terms;
        Vec6 true_wrench = Vec6::Zero();
        Vec2 z = Vec2::Zero();
    };

    Simulator& sim() { return sim_; }
    const TaskSpec& task() const { return task_; }
    const TrajectoryPoint& desired() const { return desired_; }

    Vec10 reset(std::uint64_t seed) {
        rng_.seed(seed);
        const GaitState gait = task_.kind == TaskKind::pushing
                                   ? GaitState::trot(0.3)
                                   : GaitState::standing();
        sim_.reset(gait);
        steps_done_ = 0;

        desired_ = TrajectoryPoint{};
        if (task_.kind == TaskKind::pushing)
            desired_.desired_linear_velocity.x() = task_.forward_speed;

        arm_from_ = sim_.arm_model().rest_pose();
        arm_to_ = arm_from_;
        waypoint_t0_ = 0.0;
        waypoint_t1_ = 1e9;
        pulse_until_ = -1.0;
        pulse_force_ = Vec3::Zero();
        next_pulse_at_ = task_.pulses.enabled ? sample_pulse_gap() : 1e18;
        if (task_.kind == TaskKind::reaching) schedule_next_waypoint(0.0);
        if (task_.kind == TaskKind::carrying) setup_carry(0.0);
        if (task_.kind == TaskKind::pushing) arm_to_ = push_pose();

        return observe().first;
    }

    /// Advances one high-level period under a zero-order-held action.
    StepResult step(const DisturbanceParams& action) {
        const SimConfig& cfg = sim_.config();
        StepResult out;
        for (int ll = 0; ll < cfg.lowlevel_per_highlevel() && !sim_.state().fallen; ++ll) {
            ArmCommand cmd = arm_command(sim_.state().time);
            const Vec3 tip = tip_force(sim_.state().time);
            LegCommand leg = sim_.controller().tick(
                sim_.state().body, sim_.foot_geometry(), sim_.state().foot_vel, desired_, action,
                cfg.lowlevel_period);
            for (int p = 0; p < cfg.physics_per_lowlevel() && !sim_.state().fallen; ++p)
                sim_.step_physics(leg, cmd, tip);
        }
        steps_done_ += 1;

        out.fell = sim_.state().fallen;
        out.done = out.fell || steps_done_ >= cfg.highlevel_steps();
        out.terms = reward(desired_, sim_.state().body);
        out.reward = out.terms.r_total;
        auto [obs, z] = observe();
        out.obs = obs;
        out.z = z;
        out.true_wrench = sim_.true_arm_wrench(tip_force(sim_.state().time));
        return out;
    }

    Vec6 current_true_wrench() { return sim_.true_arm_wrench(tip_force(sim_.state().time)); }

    std::pair<Vec10, Vec2> observe() {
        Vec2 z = Vec2::Zero();
        if (adapter_) {
            ArmState as;
            as.joint_angles = sim_.state().arm_q;
            ArmCommand ac = arm_command(sim_.state().time);
            z = encode(*adapter_, sim_.state().body, as, ac).z;
        }
        return {build_observation(sim_.state().body, z).concat(), z};
    }

private:
    double sample_pulse_gap() {
        std::exponential_distribution<double> gap(1.0 / task_.pulses.mean_gap);
        return gap(rng_);
    }

    void schedule_next_waypoint(double now) {
        arm_from_ = arm_to_;
        const ArmModel& arm = sim_.arm_model();
        VecX q(arm.dof_total());
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int a = 0; a < arm.arm_count; ++a)
            for (int j = 0; j < arm.dof_per_arm(); ++j) {
                const double lo = 0.85 * arm.joint_lower(j), hi = 0.85 * arm.joint_upper(j);
                q(a * arm.dof_per_arm() + j) = lo + u(rng_) * (hi - lo);
            }
        arm_to_ = q;
        waypoint_t0_ = now;
        waypoint_t1_ = now + kWaypointPeriod;
    }

    void setup_carry(double now) {
        // Alternates between a pick pose and a place pose; the table height
        // knob raises the lift elevation, ball_count sets the cycle count.
        const ArmModel& arm = sim_.arm_model();
        const double lift = std::atan2(task_.table_height, arm.link_lengths(1));
        VecX pick(arm.dof_total()), place(arm.dof_total());
        for (int a = 0; a < arm.arm_count; ++a) {
            const int off = a * arm.dof_per_arm();
            pick(off + 0) = -0.8;
            place(off + 0) = 0.8;
            for (int j = 1; j < arm.dof_per_arm(); ++j) {
                double v = j == 1 ? 0.3 + lift : (j == 2 ? -0.9 : 0.4);
                pick(off + j) = std::clamp(v, arm.joint_lower(j), arm.joint_upper(j));
                place(off + j) = pick(off + j);
            }
        }
        carry_pick_ = pick;
        carry_place_ = place;
        arm_from_ = pick;
        arm_to_ = place;
        waypoint_t0_ = now;
        carry_leg_duration_ =
            sim_.config().episode_length / (2.0 * static_cast<double>(task_.ball_count));
        waypoint_t1_ = now + carry_leg_duration_;
        carry_loaded_ = true;
        sim_.set_payload(task_.payload_mass);
    }

    ArmCommand arm_command(double t) {
        ArmCommand cmd;
        switch (task_.kind) {
            case TaskKind::standing:
                cmd.desired_joint_positions = sim_.arm_model().rest_pose();
                break;
            case TaskKind::pushing:
                cmd.desired_joint_positions = push_pose();
                break;
            case TaskKind::reaching: {
                if (t >= waypoint_t1_) schedule_next_waypoint(waypoint_t1_);
                cmd.desired_joint_positions = interpolate(t);
                break;
            }
            case TaskKind::carrying: {
                if (t >= waypoint_t1_) {
                    // Swap direction; payload rides only on the carry leg.
                    std::swap(carry_pick_, carry_place_);
                    arm_from_ = carry_pick_;
                    arm_to_ = carry_place_;
                    waypoint_t0_ = waypoint_t1_;
                    waypoint_t1_ += carry_leg_duration_;
                    carry_loaded_ = !carry_loaded_;
                    sim_.set_payload(carry_loaded_ ? task_.payload_mass : 0.0);
                }
                cmd.desired_joint_positions = interpolate(t);
                break;
            }
        }
        return cmd;
    }

    VecX push_pose() const {
        const ArmModel& arm = sim_.arm_model();
        VecX q = VecX::Zero(arm.dof_total());
        for (int a = 0; a < arm.arm_count; ++a) {
            const int off = a * arm.dof_per_arm();
            if (arm.dof_per_arm() > 1) q(off + 1) = 0.2;
            if (arm.dof_per_arm() > 2) q(off + 2) = -0.3;
            if (arm.dof_per_arm() > 3) q(off + 3) = 0.1;
        }
        return q;
    }

    VecX interpolate(double t) const {
        const double span = std::max(waypoint_t1_ - waypoint_t0_, 1e-9);
        double s = std::clamp((t - waypoint_t0_) / span, 0.0, 1.0);
        s = s * s * (3.0 - 2.0 * s);
        return arm_from_ + s * (arm_to_ - arm_from_);
    }

    Vec3 tip_force(double t) {
        Vec3 f = task_.constant_tip_force;
        if (task_.kind == TaskKind::pushing) f += Vec3(-task_.push_force, 0.0, 0.0);
        if (task_.pulses.enabled) {
            if (t >= next_pulse_at_) {
                std::uniform_real_distribution<double> mag(task_.pulses.magnitude_lo,
                                                           task_.pulses.magnitude_hi);
                std::uniform_real_distribution<double> ang(0.0, 2.0 * M_PI);
                const double m = mag(rng_);
                const double a = ang(rng_);
                pulse_force_ = Vec3(m * std::cos(a), m * std::sin(a), 0.0);
                pulse_until_ = t + task_.pulses.duration;
                next_pulse_at_ = t + task_.pulses.duration + sample_pulse_gap();
            }
            if (t < pulse_until_) f += pulse_force_;
        }
        return f;
    }

    static constexpr double kWaypointPeriod = 1.5;

    Simulator sim_;
    TaskSpec task_;
    const AdapterModel* adapter_;
    std::mt19937_64 rng_{0};
    TrajectoryPoint desired_;
    int steps_done_ = 0;

    VecX arm_from_, arm_to_;
    double waypoint_t0_ = 0.0, waypoint_t1_ = 1e9;
    VecX carry_pick_, carry_place_;
    double carry_leg_duration_ = 1.0;
    bool carry_loaded_ = false;

    double next_pulse_at_ = 1e18;
    double pulse_until_ = -1.0;
    Vec3 pulse_force_ = Vec3::Zero();
};

/// Closed-loop rollout with one of the three policies.
inline EpisodeLog run_episode(const RobotParams& robot, const ArmModel& arm,
                              const ControllerGains& gains, const SimConfig& config,
                              const TaskSpec& task, const PolicyRef& policy,
                              const AdapterModel* adapter, std::uint64_t seed,
                              const std::string& arm_name = "arm") {
    Env env(robot, arm, gains, config, task, adapter);
    EpisodeLog log;
    log.task = task_name(task.kind);
    log.arm = arm_name;
    log.policy = policy_name(policy.kind);
    log.seed = seed;

    Vec10 obs = env.reset(seed);
    Vec2 z = obs.tail<2>();
    bool done = false;
    while (!done) {
        DisturbanceParams action;
        switch (policy.kind) {
            case PolicyKind::mbc:
                action = mbc_baseline();
                break;
            case PolicyKind::oracle: {
                const Vec6 w = env.current_true_wrench();
                const SacConfig defaults{};
                action.force = w.head<3>().cwiseMax(-defaults.f_max).cwiseMin(defaults.f_max);
                action.torque = w.tail<3>().cwiseMax(-defaults.t_max).cwiseMin(defaults.t_max);
                break;
            }
            case PolicyKind::dpc: {
                if (!policy.agent) throw std::invalid_argument("run_episode: dpc needs an agent");
                Observation o;
                o.body_features = obs.head<8>();
                o.latent = obs.tail<2>();
                action = policy.stochastic ? policy.agent->act(o, true)
                                           : policy.agent->act_deterministic(o);
                break;
            }
        }

        Env::StepResult r = env.step(action);
        EpisodeStep row;
        row.t = env.sim().state().time;
        row.obs = obs;
        row.action << action.force, action.torque;
        row.r_vel = r.terms.r_vel;
        row.r_orn = r.terms.r_orn;
        row.r_total = r.terms.r_total;
        row.true_wrench = r.true_wrench;
        row.z = z;
        row.roll = env.sim().state().body.orientation_rpy.x();
        row.pitch = env.sim().state().body.orientation_rpy.y();
        log.steps.push_back(row);
        log.episode_return += r.reward;
        obs = r.obs;
        z = r.z;
        done = r.done;
        log.fell = r.fell;
    }
    return log;
}

/// Random-motion data collection for the adapter: random velocity commands on
/// a trot while the arm tracks random joint-space waypoints. One sample per
/// low-level period; falls truncate the trajectory and restart.
inline AdapterDataset collect_random_motion(const RobotParams& robot, const ArmModel& arm,
                                            const ControllerGains& gains, const SimConfig& config,
                                            int n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("collect_random_motion: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> vel(-0.3, 0.3);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    AdapterDataset data;
    data.arm_dof = arm.dof_total();
    data.samples.reserve(n_samples);

    Simulator sim(robot, arm, gains, config);
    int traj = 0;

    while (static_cast<int>(data.samples.size()) < n_samples) {
        sim.reset(GaitState::trot(0.3));
        TrajectoryPoint desired;
        double command_until = 0.0;

        VecX arm_from = arm.rest_pose(), arm_to = arm.rest_pose();
        double wp_t0 = sim.state().time, wp_t1 = wp_t0;  // resample immediately

        const auto resample_command = [&](double now) {
            desired.desired_linear_velocity = Vec2(vel(rng), vel(rng));
            desired.desired_yaw_rate = vel(rng);
            command_until = now + 1.0;
        };
        const auto resample_waypoint = [&](double now) {
            arm_from = arm_to;
            for (int a = 0; a < arm.arm_count; ++a)
                for (int j = 0; j < arm.dof_per_arm(); ++j) {
                    const double lo = 0.85 * arm.joint_lower(j);
                    const double hi = 0.85 * arm.joint_upper(j);
                    arm_to(a * arm.dof_per_arm() + j) = lo + u01(rng) * (hi - lo);
                }
            wp_t0 = now;
            wp_t1 = now + 1.5;
        };
        resample_command(0.0);
        resample_waypoint(0.0);

        // Up to 30 s per trajectory keeps single-trajectory bias bounded.
        const int max_ticks = static_cast<int>(30.0 / config.lowlevel_period);
        for (int tick = 0; tick < max_ticks && !sim.state().fallen &&
                           static_cast<int>(data.samples.size()) < n_samples;
             ++tick) {
            const double now = sim.state().time;
            if (now >= command_until) resample_command(now);
            if (now >= wp_t1) resample_waypoint(now);

            double s = std::clamp((now - wp_t0) / std::max(wp_t1 - wp_t0, 1e-9), 0.0, 1.0);
            s = s * s * (3.0 - 2.0 * s);
            ArmCommand cmd;
            cmd.desired_joint_positions = arm_from + s * (arm_to - arm_from);

            AdapterSample sample;
            sample.traj = traj;
            sample.orientation << sim.state().body.orientation_rpy.x(),
                sim.state().body.orientation_rpy.y();
            sample.rates << sim.state().body.angular_velocity.x(),
                sim.state().body.angular_velocity.y();
            sample.arm_q = sim.state().arm_q;
            sample.arm_cmd = cmd.desired_joint_positions;

            LegCommand leg = sim.controller().tick(sim.state().body, sim.foot_geometry(),
                                                   sim.state().foot_vel, desired,
                                                   DisturbanceParams::zero(),
                                                   config.lowlevel_period);
            for (int p = 0; p < config.physics_per_lowlevel() && !sim.state().fallen; ++p)
                sim.step_physics(leg, cmd, Vec3::Zero());

            if (sim.state().fallen) break;  // drop the unfinished sample
            sample.next_drp << sim.state().body.angular_velocity.x(),
                sim.state().body.angular_velocity.y();
            data.samples.push_back(std::move(sample));
        }
        traj += 1;
    }
    return data;
}

}  // namespace dpc
