#pragma once

#include "dpc/sim.hpp"

#include <atomic>
#include <future>
#include <iomanip>
#include <sstream>

namespace dpc {

struct TrainPolicyOptions {
    int steps = 100000;
    int eval_every = 5000;
    int log_every = 500;
    std::uint64_t seed = 0;
    std::string curve_csv;  // optional training-curve output
};

struct TrainCurvePoint {
    int step = 0;
    double reward_mean = 0.0;
    double critic1 = 0.0, critic2 = 0.0, actor = 0.0, alpha = 0.0;
    double eval_return = std::numeric_limits<double>::quiet_NaN();
};

inline void save_curve_csv(const std::string& path, const std::vector<TrainCurvePoint>& curve) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("save_curve_csv: cannot write " + path);
    f << "step,r_total_mean,critic1_loss,critic2_loss,actor_loss,alpha,eval_return\n";
    f << std::setprecision(17);
    for (const auto& p : curve)
        f << p.step << ',' << p.reward_mean << ',' << p.critic1 << ',' << p.critic2 << ','
          << p.actor << ',' << p.alpha << ',' << p.eval_return << '\n';
}

struct TrainPolicyResult {
    std::vector<TrainCurvePoint> curve;
    int episodes = 0;
    double final_eval_return = 0.0;
};

/// Interleaved environment stepping and SAC updates: random warm-up actions,
/// one update per environment step once the replay holds warmup_steps.
inline TrainPolicyResult train_policy(SacAgent& agent, const RobotParams& robot,
                                      const ArmModel& arm, const ControllerGains& gains,
                                      const SimConfig& config, const TaskSpec& task,
                                      const AdapterModel* adapter,
                                      const TrainPolicyOptions& opt) {
    Env env(robot, arm, gains, config, task, adapter);
    TrainPolicyResult out;

    const auto episode_seed = [&](int index) {
        return opt.seed * 1000003ull + static_cast<std::uint64_t>(index);
    };
    Vec10 obs = env.reset(episode_seed(out.episodes));

    std::normal_distribution<double> gauss(0.0, 1.0);
    double reward_acc = 0.0;
    int reward_n = 0;
    SacLosses last_losses;

    for (int step = 1; step <= opt.steps; ++step) {
        Vec6 pre;
        if (agent.replay().size() < static_cast<size_t>(agent.config().warmup_steps)) {
            for (int i = 0; i < 6; ++i) pre(i) = gauss(agent.rng());
        } else {
            pre = agent.act_pre(obs, /*stochastic=*/true);
        }

        Env::StepResult r = env.step(agent.wrench_from_pre(pre));
        Transition t;
        t.obs = obs;
        t.action_pre = pre;
        t.reward = r.reward;
        t.next_obs = r.obs;
        t.done = r.fell;  // timeouts bootstrap, falls are terminal
        agent.observe(t);
        reward_acc += r.reward;
        reward_n += 1;

        obs = r.obs;
        if (r.done) {
            out.episodes += 1;
            obs = env.reset(episode_seed(out.episodes));
        }

        if (agent.replay().size() >= static_cast<size_t>(agent.config().warmup_steps))
            last_losses = agent.update();

        if (step % opt.log_every == 0) {
            TrainCurvePoint pt;
            pt.step = step;
            pt.reward_mean = reward_acc / std::max(reward_n, 1);
            pt.critic1 = last_losses.critic1;
            pt.critic2 = last_losses.critic2;
            pt.actor = last_losses.actor;
            pt.alpha = last_losses.alpha;
            if (step % opt.eval_every == 0 || step == opt.steps) {
                EpisodeLog eval = run_episode(robot, arm, gains, config, task,
                                              PolicyRef{PolicyKind::dpc, &agent, false}, adapter,
                                              opt.seed * 7919ull + static_cast<std::uint64_t>(step));
                pt.eval_return = eval.episode_return;
                out.final_eval_return = eval.episode_return;
            }
            out.curve.push_back(pt);
            reward_acc = 0.0;
            reward_n = 0;
        }
    }
    if (!opt.curve_csv.empty()) save_curve_csv(opt.curve_csv, out.curve);
    return out;
}

struct BanditResult {
    Vec6 target_norm = Vec6::Zero();
    Vec6 final_norm = Vec6::Zero();
    double max_force_err = 0.0;   // [N]
    double max_torque_err = 0.0;  // [N m]
    bool passed = false;
};

/// Synthetic single-step bandit: constant observation, reward
/// -|a - a*|^2 in normalized action space. Convergence of the deterministic
/// policy to a* gates every full training run.
inline BanditResult run_bandit_gate(const SacConfig& cfg, int updates, std::uint64_t seed) {
    SacAgent agent(cfg, seed);
    const Vec10 obs = Vec10::Zero();
    BanditResult out;
    out.target_norm << 0.4, -0.3, 0.2, 0.25, -0.2, 0.1;

    const auto reward_of = [&](const Vec6& pre) {
        const Vec6 a = pre.array().tanh().matrix();
        return -(a - out.target_norm).squaredNorm();
    };
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (int i = 0; i < cfg.warmup_steps; ++i) {
        Transition t;
        t.obs = obs;
        for (int j = 0; j < 6; ++j) t.action_pre(j) = gauss(agent.rng());
        t.reward = reward_of(t.action_pre);
        t.next_obs = obs;
        t.done = true;
        agent.observe(t);
    }
    for (int i = 0; i < updates; ++i) {
        Transition t;
        t.obs = obs;
        t.action_pre = agent.act_pre(obs, true);
        t.reward = reward_of(t.action_pre);
        t.next_obs = obs;
        t.done = true;
        agent.observe(t);
        agent.update();
    }

    const Vec6 final_pre = agent.act_pre(obs, false);
    out.final_norm = final_pre.array().tanh().matrix();
    const DisturbanceParams wrench = agent.wrench_from_pre(final_pre);
    DisturbanceParams target;
    target.force = cfg.f_max * out.target_norm.head<3>();
    target.torque = cfg.t_max * out.target_norm.tail<3>();
    out.max_force_err = (wrench.force - target.force).lpNorm<Eigen::Infinity>();
    out.max_torque_err = (wrench.torque - target.torque).lpNorm<Eigen::Infinity>();
    out.passed = out.max_force_err <= 0.1 * cfg.f_max && out.max_torque_err <= 0.1 * cfg.t_max;
    return out;
}

struct CompareRow {
    std::string task, arm, policy;
    int seeds = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
    std::vector<double> returns;
};

struct CompareRequest {
    std::vector<std::pair<std::string, TaskSpec>> tasks;            // name, spec
    std::vector<std::pair<std::string, ArmModel>> arms;             // name, model
    std::vector<std::pair<std::string, const AdapterModel*>> adapters;  // per arm name
    std::vector<std::uint64_t> seeds;
    std::string episode_dir;  // when set, per-episode CSVs are written here
    int workers = 4;
};

inline const AdapterModel* adapter_for(const CompareRequest& req, const std::string& arm_name) {
    for (const auto& [name, adapter] : req.adapters)
        if (name == arm_name) return adapter;
    return nullptr;
}

/// MBC-vs-DPC sweep over (task, arm, seed). Episodes run in a worker pool with
/// independent simulators; results are assembled in a fixed order so output is
/// deterministic regardless of scheduling.
inline std::vector<CompareRow> compare_policies(const RobotParams& robot,
                                                const ControllerGains& gains,
                                                const SimConfig& config, SacAgent* agent,
                                                const CompareRequest& req) {
    struct Job {
        std::string task_name, arm_name;
        PolicyKind policy;
        std::uint64_t seed;
        const TaskSpec* task;
        const ArmModel* arm;
        const AdapterModel* adapter;
    };
    std::vector<Job> jobs;
    for (const auto& [tname, tspec] : req.tasks)
        for (const auto& [aname, amodel] : req.arms)
            for (PolicyKind pk : {PolicyKind::mbc, PolicyKind::dpc})
                for (std::uint64_t s : req.seeds)
                    jobs.push_back(Job{tname, aname, pk, s, &tspec, &amodel,
                                       adapter_for(req, aname)});

    std::vector<EpisodeLog> logs(jobs.size());
    std::atomic<size_t> cursor{0};
    const int workers = std::max(1, req.workers);
    std::vector<std::future<void>> pool;
    for (int w = 0; w < workers; ++w) {
        pool.push_back(std::async(std::launch::async, [&] {
            while (true) {
                const size_t i = cursor.fetch_add(1);
                if (i >= jobs.size()) return;
                const Job& j = jobs[i];
                PolicyRef ref{j.policy, j.policy == PolicyKind::dpc ? agent : nullptr, false};
                logs[i] = run_episode(robot, *j.arm, gains, config, *j.task, ref,
                                      j.policy == PolicyKind::dpc ? j.adapter : nullptr, j.seed,
                                      j.arm_name);
            }
        }));
    }
    for (auto& f : pool) f.get();

    if (!req.episode_dir.empty()) {
        for (size_t i = 0; i < jobs.size(); ++i) {
            const Job& j = jobs[i];
            std::ostringstream name;
            name << j.task_name << '_' << j.arm_name << '_' << policy_name(j.policy) << '_'
                 << j.seed << ".csv";
            logs[i].save_csv(req.episode_dir + "/" + name.str());
        }
    }

    std::vector<CompareRow> rows;
    size_t i = 0;
    for (const auto& [tname, tspec] : req.tasks) {
        (void)tspec;
        for (const auto& [aname, amodel] : req.arms) {
            (void)amodel;
            for (PolicyKind pk : {PolicyKind::mbc, PolicyKind::dpc}) {
                CompareRow row;
                row.task = tname;
                row.arm = aname;
                row.policy = policy_name(pk);
                for (size_t s = 0; s < req.seeds.size(); ++s, ++i)
                    row.returns.push_back(logs[i].episode_return);
                row.seeds = static_cast<int>(row.returns.size());
                double acc = 0.0;
                for (double r : row.returns) acc += r;
                row.mean_return = acc / row.seeds;
                double var = 0.0;
                for (double r : row.returns) var += (r - row.mean_return) * (r - row.mean_return);
                row.std_return = row.seeds > 1 ? std::sqrt(var / (row.seeds - 1)) : 0.0;
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

inline void save_compare_csv(const std::string& path, const std::vector<CompareRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("save_compare_csv: cannot write " + path);
    f << "task,arm,policy,seeds,mean_return,std_return\n";
    f << std::setprecision(17);
    for (const auto& r : rows)
        f << r.task << ',' << r.arm << ',' << r.policy << ',' << r.seeds << ',' << r.mean_return
          << ',' << r.std_return << '\n';
}

inline std::string format_compare_table(const std::vector<CompareRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(10) << "task" << std::setw(10) << "arm" << std::setw(8)
       << "policy" << std::right << std::setw(7) << "seeds" << std::setw(14) << "mean"
       << std::setw(14) << "std" << '\n';
    for (const auto& r : rows) {
        os << std::left << std::setw(10) << r.task << std::setw(10) << r.arm << std::setw(8)
           << r.policy << std::right << std::setw(7) << r.seeds << std::fixed
           << std::setprecision(3) << std::setw(14) << r.mean_return << std::setw(14)
           << r.std_return << '\n';
        os.unsetf(std::ios::fixed);
        os << std::setprecision(6);
    }
    return os.str();
}

}  // namespace dpc
