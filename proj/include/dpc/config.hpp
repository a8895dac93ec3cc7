#pragma once

#include "dpc/controller.hpp"
#include "dpc/sac.hpp"
#include "dpc/sim.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace dpc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One arm catalog entry; geometry beyond the biceps link and gripper mass is
/// shared across the catalog.
struct ArmSpec {
    double biceps_length = 0.14;
    double gripper_mass = 0.1;
    int arm_count = 1;

    ArmModel build() const { return make_serial_arm(biceps_length, gripper_mass, arm_count); }
};

/// Everything a command needs, with defaults tuned at desk scale. Loads from
/// flat INI-style text; unknown sections or keys are rejected.
struct HarnessConfig {
    RobotParams robot;
    ControllerGains gains;
    SimConfig sim;
    SacConfig sac;
    std::map<std::string, ArmSpec> arms = {
        {"regular", {0.14, 0.1, 1}},
        {"longer", {0.28, 0.1, 1}},
        {"heavier", {0.14, 0.5, 1}},
        {"double", {0.14, 0.1, 2}},
    };
    PulseConfig pulses{true, 0.0, 20.0, 0.5, 2.0};
    double task_push_force = 15.0;
    double task_forward_speed = 0.1;
    double task_payload_mass = 0.3;
    double task_table_height = 0.12;
    int task_ball_count = 1;
    int adapter_epochs = 30;
    int adapter_migrate_epochs = 120;
    double adapter_lr = 1e-3;
    int adapter_batch = 256;
    std::uint64_t seed = 0;

    ArmModel arm(const std::string& name) const {
        auto it = arms.find(name);
        if (it == arms.end()) throw ConfigError("unknown arm: " + name);
        return it->second.build();
    }

    TaskSpec task(const std::string& name, bool with_pulses = false) const {
        TaskSpec t;
        t.kind = task_from_name(name);
        t.push_force = task_push_force;
        t.forward_speed = task_forward_speed;
        t.payload_mass = task_payload_mass;
        t.table_height = task_table_height;
        t.ball_count = task_ball_count;
        if (with_pulses) t.pulses = pulses;
        return t;
    }

    void set(const std::string& section, const std::string& key, const std::string& raw);
    void load(const std::string& path);
    void save(const std::string& path) const;
    std::string to_text() const;
};

namespace detail {

inline double parse_double(const std::string& s) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("not a number: '" + s + "'");
    }
}

inline int parse_int(const std::string& s) {
    const double v = parse_double(s);
    if (v != std::floor(v)) throw ConfigError("not an integer: '" + s + "'");
    return static_cast<int>(v);
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("not a bool: '" + s + "'");
}

template <typename Vec>
Vec parse_vec(const std::string& s) {
    Vec v;
    std::stringstream ss(s);
    std::string cell;
    int i = 0;
    while (std::getline(ss, cell, ',')) {
        if (i >= v.size()) throw ConfigError("too many elements: '" + s + "'");
        v(i++) = parse_double(cell);
    }
    if (i != v.size()) throw ConfigError("expected " + std::to_string(v.size()) +
                                         " elements: '" + s + "'");
    return v;
}

template <typename Vec>
std::string format_vec(const Vec& v) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << v(i);
    return os.str();
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void HarnessConfig::set(const std::string& section, const std::string& key,
                               const std::string& raw) {
    using namespace detail;
    const std::string where = "[" + section + "] " + key;
    if (section == "robot") {
        if (key == "mass") robot.mass = parse_double(raw);
        else if (key == "inertia") {
            Vec3 d = parse_vec<Vec3>(raw);
            robot.trunk_inertia = d.asDiagonal();
        } else if (key == "hip_x") {
            const double v = parse_double(raw);
            for (int i = 0; i < 4; ++i) robot.hip_offsets[i].x() = (i < 2 ? v : -v);
        } else if (key == "hip_y") {
            const double v = parse_double(raw);
            for (int i = 0; i < 4; ++i) robot.hip_offsets[i].y() = (i % 2 == 0 ? v : -v);
        } else if (key == "friction") robot.friction_coefficient = parse_double(raw);
        else if (key == "min_normal_force") robot.min_normal_force = parse_double(raw);
        else if (key == "max_normal_force") robot.max_normal_force = parse_double(raw);
        else throw ConfigError("unknown key " + where);
    } else if (section == "controller") {
        if (key == "kp_pose") gains.kp_pose = parse_vec<Vec6>(raw);
        else if (key == "kd_pose") gains.kd_pose = parse_vec<Vec6>(raw);
        else if (key == "kp_swing") gains.kp_swing = Vec3::Constant(parse_double(raw));
        else if (key == "kd_swing") gains.kd_swing = Vec3::Constant(parse_double(raw));
        else if (key == "q_weights") gains.q_weights = parse_vec<Vec6>(raw);
        else if (key == "r_weight") gains.r_weights = Vec12::Constant(parse_double(raw));
        else throw ConfigError("unknown key " + where);
    } else if (section == "sim") {
        if (key == "physics_dt") sim.physics_dt = parse_double(raw);
        else if (key == "lowlevel_period") sim.lowlevel_period = parse_double(raw);
        else if (key == "highlevel_period") sim.highlevel_period = parse_double(raw);
        else if (key == "episode_length") sim.episode_length = parse_double(raw);
        else if (key == "gravity") sim.gravity = parse_double(raw);
        else throw ConfigError("unknown key " + where);
    } else if (section == "sac") {
        if (key == "gamma") sac.gamma = parse_double(raw);
        else if (key == "polyak") sac.polyak = parse_double(raw);
        else if (key == "learning_rate") sac.learning_rate = parse_double(raw);
        else if (key == "batch") sac.batch = parse_int(raw);
        else if (key == "replay_capacity") sac.replay_capacity = parse_int(raw);
        else if (key == "target_entropy") sac.target_entropy = parse_double(raw);
        else if (key == "warmup_steps") sac.warmup_steps = parse_int(raw);
        else if (key == "f_max") sac.f_max = parse_double(raw);
        else if (key == "t_max") sac.t_max = parse_double(raw);
        else throw ConfigError("unknown key " + where);
    } else if (section == "pulses") {
        if (key == "enabled") pulses.enabled = parse_bool(raw);
        else if (key == "magnitude_lo") pulses.magnitude_lo = parse_double(raw);
        else if (key == "magnitude_hi") pulses.magnitude_hi = parse_double(raw);
        else if (key == "duration") pulses.duration = parse_double(raw);
        else if (key == "mean_gap") pulses.mean_gap = parse_double(raw);
        else throw ConfigError("unknown key " + where);
    } else if (section == "tasks") {
        if (key == "push_force") task_push_force = parse_double(raw);
        else if (key == "forward_speed") task_forward_speed = parse_double(raw);
        else if (key == "payload_mass") task_payload_mass = parse_double(raw);
        else if (key == "table_height") task_table_height = parse_double(raw);
        else if (key == "ball_count") task_ball_count = parse_int(raw);
        else throw ConfigError("unknown key " + where);
    } else if (section == "adapter") {
        if (key == "epochs") adapter_epochs = parse_int(raw);
        else if (key == "migrate_epochs") adapter_migrate_epochs = parse_int(raw);
        else if (key == "learning_rate") adapter_lr = parse_double(raw);
        else if (key == "batch") adapter_batch = parse_int(raw);
        else throw ConfigError("unknown key " + where);
    } else if (section == "run") {
        if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(raw));
        else throw ConfigError("unknown key " + where);
    } else if (section.rfind("arm.", 0) == 0) {
        const std::string name = section.substr(4);
        ArmSpec& spec = arms[name];  // new arm names are allowed
        if (key == "biceps_length") spec.biceps_length = parse_double(raw);
        else if (key == "gripper_mass") spec.gripper_mass = parse_double(raw);
        else if (key == "arm_count") spec.arm_count = parse_int(raw);
        else throw ConfigError("unknown key " + where);
    } else {
        throw ConfigError("unknown section [" + section + "]");
    }
}

inline void HarnessConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifact("config file not found: " + path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        lineno += 1;
        const std::string text = detail::trim(line.substr(0, line.find('#')));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']')
                throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed section");
            section = text.substr(1, text.size() - 2);
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(text.substr(0, eq));
        const std::string value = detail::trim(text.substr(eq + 1));
        if (section.empty())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": key outside a section");
        try {
            set(section, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    try {
        robot.validate();
        gains.validate();
        sim.validate();
        sac.validate();
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline std::string HarnessConfig::to_text() const {
    using detail::format_vec;
    std::ostringstream os;
    os << std::setprecision(17);
    os << "[run]\nseed = " << seed << "\n\n";
    os << "[robot]\n";
    os << "mass = " << robot.mass << "\n";
    os << "inertia = " << robot.trunk_inertia(0, 0) << ',' << robot.trunk_inertia(1, 1) << ','
       << robot.trunk_inertia(2, 2) << "\n";
    os << "hip_x = " << robot.hip_offsets[0].x() << "\n";
    os << "hip_y = " << robot.hip_offsets[0].y() << "\n";
    os << "friction = " << robot.friction_coefficient << "\n";
    os << "min_normal_force = " << robot.min_normal_force << "\n";
    os << "max_normal_force = " << robot.max_normal_force << "\n\n";
    os << "[controller]\n";
    os << "kp_pose = " << format_vec(gains.kp_pose) << "\n";
    os << "kd_pose = " << format_vec(gains.kd_pose) << "\n";
    os << "kp_swing = " << gains.kp_swing.x() << "\n";
    os << "kd_swing = " << gains.kd_swing.x() << "\n";
    os << "q_weights = " << format_vec(gains.q_weights) << "\n";
    os << "r_weight = " << gains.r_weights(0) << "\n\n";
    os << "[sim]\n";
    os << "physics_dt = " << sim.physics_dt << "\n";
    os << "lowlevel_period = " << sim.lowlevel_period << "\n";
    os << "highlevel_period = " << sim.highlevel_period << "\n";
    os << "episode_length = " << sim.episode_length << "\n";
    os << "gravity = " << sim.gravity << "\n\n";
    os << "[sac]\n";
    os << "gamma = " << sac.gamma << "\n";
    os << "polyak = " << sac.polyak << "\n";
    os << "learning_rate = " << sac.learning_rate << "\n";
    os << "batch = " << sac.batch << "\n";
    os << "replay_capacity = " << sac.replay_capacity << "\n";
    os << "target_entropy = " << sac.target_entropy << "\n";
    os << "warmup_steps = " << sac.warmup_steps << "\n";
    os << "f_max = " << sac.f_max << "\n";
    os << "t_max = " << sac.t_max << "\n\n";
    os << "[pulses]\n";
    os << "enabled = " << (pulses.enabled ? "true" : "false") << "\n";
    os << "magnitude_lo = " << pulses.magnitude_lo << "\n";
    os << "magnitude_hi = " << pulses.magnitude_hi << "\n";
    os << "duration = " << pulses.duration << "\n";
    os << "mean_gap = " << pulses.mean_gap << "\n\n";
    os << "[tasks]\n";
    os << "push_force = " << task_push_force << "\n";
    os << "forward_speed = " << task_forward_speed << "\n";
    os << "payload_mass = " << task_payload_mass << "\n";
    os << "table_height = " << task_table_height << "\n";
    os << "ball_count = " << task_ball_count << "\n\n";
    os << "[adapter]\n";
    os << "epochs = " << adapter_epochs << "\n";
    os << "migrate_epochs = " << adapter_migrate_epochs << "\n";
    os << "learning_rate = " << adapter_lr << "\n";
    os << "batch = " << adapter_batch << "\n\n";
    for (const auto& [name, spec] : arms) {
        os << "[arm." << name << "]\n";
        os << "biceps_length = " << spec.biceps_length << "\n";
        os << "gripper_mass = " << spec.gripper_mass << "\n";
        os << "arm_count = " << spec.arm_count << "\n\n";
    }
    return os.str();
}

inline void HarnessConfig::save(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("HarnessConfig: cannot write " + path);
    f << to_text();
}

}  // namespace dpc
