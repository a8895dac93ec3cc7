#pragma once

#include "dpc/config.hpp"
#include "dpc/training.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace dpc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissing = 3;
inline constexpr int kExitRuntime = 4;

inline void prepare_out_dir(const HarnessConfig& cfg, const std::string& out) {
    std::filesystem::create_directories(out);
    cfg.save(out + "/config.echo.ini");  // every run is reproducible from this
}

inline void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path))
        throw MissingArtifact(std::string(what) + " not found: " + path);
}

inline int cmd_collect(const HarnessConfig& cfg, const std::string& arm_name, int n,
                       const std::string& out) {
    if (n < 1) throw ConfigError("collect: --n must be >= 1");
    const ArmModel arm = cfg.arm(arm_name);
    prepare_out_dir(cfg, out);
    AdapterDataset data =
        collect_random_motion(cfg.robot, arm, cfg.gains, cfg.sim, n, cfg.seed);
    const std::string path = out + "/dataset_" + arm_name + ".csv";
    data.save_csv(path);
    std::cout << "collected " << data.samples.size() << " samples (arm " << arm_name
              << ", dof " << data.arm_dof << ")\n"
              << "next_drp variance: " << data.next_drp_variance() << "\n"
              << "wrote " << path << "\n";
    return kExitOk;
}

inline int cmd_train_adapter(const HarnessConfig& cfg, const std::string& dataset_path,
                             const std::string& out) {
    require_file(dataset_path, "dataset");
    AdapterDataset data = AdapterDataset::load_csv(dataset_path);
    prepare_out_dir(cfg, out);
    AdapterTrainResult res =
        train_adapter(data, cfg.adapter_epochs, cfg.adapter_lr, cfg.adapter_batch, cfg.seed);

    const std::string ckpt = out + "/adapter.bin";
    res.model.save(ckpt);
    std::ofstream curve(out + "/adapter_loss.csv", std::ios::trunc);
    curve << "step,train_mse,holdout_mse\n" << std::setprecision(17);
    for (const auto& p : res.history)
        curve << p.step << ',' << p.train_mse << ',' << p.holdout_mse << '\n';

    const double baseline = data.next_drp_variance();
    std::cout << "held-out MSE: " << res.final_holdout_mse << " (mean-predictor baseline "
              << baseline << ")\n"
              << "wrote " << ckpt << "\n";
    return kExitOk;
}

inline std::string checkpoint_hash(const std::string& path) {
    // FNV-1a over the raw bytes; enough to detect any modification.
    std::ifstream f(path, std::ios::binary);
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (f.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

inline int cmd_migrate(const HarnessConfig& cfg, const std::string& dataset_path,
                       const std::string& decoder_ckpt, int budget, const std::string& out) {
    require_file(dataset_path, "dataset");
    require_file(decoder_ckpt, "decoder checkpoint");
    AdapterDataset data = AdapterDataset::load_csv(dataset_path);
    AdapterModel donor = AdapterModel::load(decoder_ckpt);
    prepare_out_dir(cfg, out);

    std::vector<TensorRecord> before;
    append_mlp_records(before, "decoder", donor.decoder);

    AdapterTrainResult res = migrate_encoder(donor, data, budget,
                                             cfg.adapter_migrate_epochs, cfg.adapter_lr,
                                             cfg.adapter_batch, cfg.seed);

    std::vector<TensorRecord> after;
    append_mlp_records(after, "decoder", res.model.decoder);
    for (size_t i = 0; i < before.size(); ++i)
        if (before[i].data != after[i].data)
            throw std::runtime_error("migrate: decoder changed during migration");

    const std::string ckpt = out + "/adapter_migrated.bin";
    res.model.save(ckpt);
    std::ofstream curve(out + "/migrate_loss.csv", std::ios::trunc);
    curve << "step,train_mse,holdout_mse\n" << std::setprecision(17);
    for (const auto& p : res.history)
        curve << p.step << ',' << p.train_mse << ',' << p.holdout_mse << '\n';

    std::cout << "migration held-out MSE: " << res.final_holdout_mse << " using "
              << std::min<size_t>(budget, data.samples.size()) << " samples\n"
              << "decoder frozen: yes\n"
              << "wrote " << ckpt << "\n";
    return kExitOk;
}

inline int cmd_train_policy(const HarnessConfig& cfg, const std::string& adapter_path, int steps,
                            const std::string& task_name, const std::string& out, bool bandit) {
    prepare_out_dir(cfg, out);
    if (bandit) {
        BanditResult res = run_bandit_gate(cfg.sac, std::min(steps, 5000), cfg.seed);
        std::cout << "bandit gate: max force err " << res.max_force_err << " N, max torque err "
                  << res.max_torque_err << " N m -> " << (res.passed ? "PASS" : "FAIL") << "\n";
        return res.passed ? kExitOk : kExitRuntime;
    }
    require_file(adapter_path, "adapter checkpoint");
    AdapterModel adapter = AdapterModel::load(adapter_path);

    const int dof = (adapter.encoder.input_dim() - 4) / 2;
    std::string arm_name;
    for (const auto& [name, spec] : cfg.arms)
        if (spec.build().dof_total() == dof && arm_name.empty()) arm_name = name;
    if (arm_name.empty()) throw ConfigError("train-policy: no catalog arm matches the adapter");
    const ArmModel arm = cfg.arm(arm_name);

    SacAgent agent(cfg.sac, cfg.seed);
    TrainPolicyOptions opt;
    opt.steps = steps;
    opt.seed = cfg.seed;
    opt.curve_csv = out + "/training_curve.csv";
    TaskSpec task = cfg.task(task_name, /*with_pulses=*/true);
    TrainPolicyResult res =
        train_policy(agent, cfg.robot, arm, cfg.gains, cfg.sim, task, &adapter, opt);

    const std::string ckpt = out + "/agent.bin";
    agent.save(ckpt);
    std::cout << "trained " << steps << " steps over " << res.episodes << " episodes (arm "
              << arm_name << ", task " << task_name << ")\n"
              << "final deterministic eval return: " << res.final_eval_return << "\n"
              << "wrote " << ckpt << "\n";
    return kExitOk;
}

inline int cmd_compare(const HarnessConfig& cfg, const std::string& agent_path,
                       const std::vector<std::string>& adapter_args,
                       const std::vector<std::string>& task_names,
                       const std::vector<std::string>& arm_names, int n_seeds,
                       const std::string& out, int workers) {
    require_file(agent_path, "agent checkpoint");
    SacAgent agent = SacAgent::load(agent_path, cfg.sac, cfg.seed);
    prepare_out_dir(cfg, out);

    // --adapter entries are arm=path pairs; a bare path applies to every arm.
    std::vector<std::pair<std::string, AdapterModel>> adapters;
    for (const std::string& spec : adapter_args) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
            require_file(spec, "adapter checkpoint");
            for (const auto& arm_name : arm_names)
                adapters.emplace_back(arm_name, AdapterModel::load(spec));
        } else {
            const std::string path = spec.substr(eq + 1);
            require_file(path, "adapter checkpoint");
            adapters.emplace_back(spec.substr(0, eq), AdapterModel::load(path));
        }
    }

    CompareRequest req;
    for (const auto& t : task_names) req.tasks.emplace_back(t, cfg.task(t));
    for (const auto& a : arm_names) req.arms.emplace_back(a, cfg.arm(a));
    for (auto& [name, model] : adapters) req.adapters.emplace_back(name, &model);
    for (int s = 0; s < n_seeds; ++s)
        req.seeds.push_back(cfg.seed * 7717ull + static_cast<std::uint64_t>(s));
    req.episode_dir = out;
    req.workers = workers;

    for (const auto& a : arm_names)
        if (!adapter_for(req, a))
            throw MissingArtifact("compare: no adapter given for arm " + a);

    std::vector<CompareRow> rows = compare_policies(cfg.robot, cfg.gains, cfg.sim, &agent, req);
    save_compare_csv(out + "/compare.csv", rows);
    const std::string table = format_compare_table(rows);
    std::ofstream(out + "/compare.txt", std::ios::trunc) << table;
    std::cout << table;
    return kExitOk;
}

inline int cmd_eval(const HarnessConfig& cfg, const std::string& task_name,
                    const std::string& arm_name, const std::string& policy,
                    const std::string& agent_path, const std::string& adapter_path,
                    const std::string& out) {
    prepare_out_dir(cfg, out);
    PolicyRef ref;
    std::optional<SacAgent> agent;
    std::optional<AdapterModel> adapter;
    if (policy == "mbc") {
        ref.kind = PolicyKind::mbc;
    } else if (policy == "oracle") {
        ref.kind = PolicyKind::oracle;
    } else if (policy == "dpc") {
        ref.kind = PolicyKind::dpc;
        require_file(agent_path, "agent checkpoint");
        agent.emplace(SacAgent::load(agent_path, cfg.sac, cfg.seed));
        ref.agent = &*agent;
    } else {
        throw ConfigError("eval: unknown policy '" + policy + "' (mbc|dpc|oracle)");
    }
    if (!adapter_path.empty()) {
        require_file(adapter_path, "adapter checkpoint");
        adapter.emplace(AdapterModel::load(adapter_path));
    }
    if (ref.kind == PolicyKind::dpc && !adapter)
        throw MissingArtifact("eval: dpc policy needs --adapter");

    EpisodeLog log = run_episode(cfg.robot, cfg.arm(arm_name), cfg.gains, cfg.sim,
                                 cfg.task(task_name), ref, adapter ? &*adapter : nullptr,
                                 cfg.seed, arm_name);
    std::ostringstream name;
    name << task_name << '_' << arm_name << '_' << policy << '_' << cfg.seed << ".csv";
    log.save_csv(out + "/" + name.str());
    std::cout << "return " << log.episode_return << " over " << log.steps.size() << " steps"
              << (log.fell ? " (fell)" : "") << "\n"
              << "wrote " << out << "/" << name.str() << "\n";
    return kExitOk;
}

/// Entry point shared by the binary and the tests.
inline int run(int argc, const char* const* argv) {
    CLI::App app{"disturbance predictive control pipeline"};
    app.require_subcommand(1);

    std::string config_path, out = "out";
    std::int64_t seed = -1;
    app.add_option("--config", config_path, "INI config file");
    app.add_option("--seed", seed, "override the config seed");
    app.add_option("--out", out, "output directory");

    auto* collect = app.add_subcommand("collect", "collect random-motion adapter samples");
    std::string arm = "regular";
    int n = 30000;
    collect->add_option("--arm", arm, "arm catalog entry");
    collect->add_option("--n", n, "sample count");

    auto* train_adapter_cmd = app.add_subcommand("train-adapter", "train encoder+decoder");
    std::string dataset;
    train_adapter_cmd->add_option("--dataset", dataset, "dataset CSV")->required();

    auto* migrate = app.add_subcommand("migrate", "train a new encoder against a frozen decoder");
    std::string decoder_ckpt;
    int budget = 30000;
    migrate->add_option("--dataset", dataset, "new-arm dataset CSV")->required();
    migrate->add_option("--decoder", decoder_ckpt, "adapter checkpoint donating the decoder")
        ->required();
    migrate->add_option("--budget", budget, "max samples used");

    auto* train_policy_cmd = app.add_subcommand("train-policy", "train the SAC estimator");
    std::string adapter_path, task_name = "reaching";
    int steps = 100000;
    bool bandit = false;
    train_policy_cmd->add_option("--adapter", adapter_path, "adapter checkpoint");
    train_policy_cmd->add_option("--steps", steps, "environment steps");
    train_policy_cmd->add_option("--task", task_name, "training task");
    train_policy_cmd->add_flag("--bandit", bandit, "run the SAC bandit gate instead");

    auto* compare = app.add_subcommand("compare", "MBC vs DPC over tasks x arms x seeds");
    std::string agent_path;
    std::vector<std::string> adapters, tasks{"carrying"}, arms{"heavier"};
    int n_seeds = 5, workers = 4;
    compare->add_option("--agent", agent_path, "agent checkpoint")->required();
    compare->add_option("--adapter", adapters, "adapter checkpoint, or arm=path (repeatable)")
        ->required();
    compare->add_option("--tasks", tasks, "task list")->delimiter(',');
    compare->add_option("--arms", arms, "arm list")->delimiter(',');
    compare->add_option("--seeds", n_seeds, "seed count");
    compare->add_option("--workers", workers, "episode worker threads");

    auto* eval = app.add_subcommand("eval", "run one episode and dump its log");
    std::string policy = "mbc";
    eval->add_option("--task", task_name, "task");
    eval->add_option("--arm", arm, "arm catalog entry");
    eval->add_option("--policy", policy, "mbc|dpc|oracle");
    eval->add_option("--agent", agent_path, "agent checkpoint (dpc)");
    eval->add_option("--adapter", adapter_path, "adapter checkpoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        HarnessConfig cfg;
        if (!config_path.empty()) cfg.load(config_path);
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);

        if (app.got_subcommand(collect)) return cmd_collect(cfg, arm, n, out);
        if (app.got_subcommand(train_adapter_cmd)) return cmd_train_adapter(cfg, dataset, out);
        if (app.got_subcommand(migrate))
            return cmd_migrate(cfg, dataset, decoder_ckpt, budget, out);
        if (app.got_subcommand(train_policy_cmd))
            return cmd_train_policy(cfg, adapter_path, steps, task_name, out, bandit);
        if (app.got_subcommand(compare))
            return cmd_compare(cfg, agent_path, adapters, tasks, arms, n_seeds, out, workers);
        if (app.got_subcommand(eval))
            return cmd_eval(cfg, task_name, arm, policy, agent_path, adapter_path, out);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kExitMissing;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace dpc::cli
