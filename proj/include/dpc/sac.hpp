#pragma once

#include "dpc/nn.hpp"
#include "dpc/types.hpp"

#include <deque>
#include <random>

namespace dpc {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec10 = Eigen::Matrix<double, 10, 1>;

/// Policy observation: 8 body features plus the 2-D latent state.
struct Observation {
    Vec8 body_features = Vec8::Zero();
    Vec2 latent = Vec2::Zero();

    Vec10 concat() const {
        Vec10 o;
        o << body_features, latent;
        return o;
    }
};

/// Body features (roll, pitch, roll rate, pitch rate, v_x, v_y, yaw rate,
/// height) with velocities expressed in the heading frame.
inline Observation build_observation(const BodyState& body, const Vec2& latent) {
    Observation obs;
    const Mat3 rz = rotation_z(body.orientation_rpy.z());
    const Vec3 v_heading = rz.transpose() * body.linear_velocity;
    obs.body_features << body.orientation_rpy.x(), body.orientation_rpy.y(),
        body.angular_velocity.x(), body.angular_velocity.y(), v_heading.x(), v_heading.y(),
        body.angular_velocity.z(), body.position.z();
    obs.latent = latent;
    return obs;
}

struct RewardTerms {
    double r_vel = 0.0;
    double r_orn = 0.0;
    double r_total = 0.0;
};

/// Tracking reward: three velocity terms and two orientation terms, each
/// exp(-8 err^2), combined as 0.08 r_vel + 0.05 r_orn.
inline RewardTerms reward(const TrajectoryPoint& desired, const BodyState& body) {
    const Mat3 rz = rotation_z(body.orientation_rpy.z());
    const Vec3 v = rz.transpose() * body.linear_velocity;
    const auto track = [](double err) { return std::exp(-8.0 * err * err); };

    RewardTerms r;
    r.r_vel = track(v.x() - desired.desired_linear_velocity.x()) +
              track(v.y() - desired.desired_linear_velocity.y()) +
              track(body.angular_velocity.z() - desired.desired_yaw_rate);
    r.r_orn = track(body.orientation_rpy.x() - desired.desired_roll) +
              track(body.orientation_rpy.y() - desired.desired_pitch);
    r.r_total = 0.08 * r.r_vel + 0.05 * r.r_orn;
    return r;
}

/// The comparison baseline: no disturbance compensation at all.
inline DisturbanceParams mbc_baseline() { return DisturbanceParams::zero(); }

struct Transition {
    Vec10 obs = Vec10::Zero();
    Vec6 action_pre = Vec6::Zero();  // pre-squash Gaussian draw
    double reward = 0.0;
    Vec10 next_obs = Vec10::Zero();
    bool done = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

    void push(const Transition& t) {
        if (data_.size() < capacity_) {
            data_.push_back(t);
        } else {
            data_[next_] = t;
        }
        next_ = (next_ + 1) % capacity_;
    }

    size_t size() const { return data_.size(); }

    const Transition& at(size_t i) const { return data_[i]; }

    std::vector<int> sample_indices(int batch, std::mt19937_64& rng) const {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(data_.size()) - 1);
        std::vector<int> idx(batch);
        for (int& i : idx) i = pick(rng);
        return idx;
    }

private:
    size_t capacity_;
    size_t next_ = 0;
    std::vector<Transition> data_;
};

struct SacConfig {
    double gamma = 0.99;
    double polyak = 0.005;
    double learning_rate = 3e-4;
    int batch = 256;
    int replay_capacity = 100000;
    double target_entropy = -6.0;
    int warmup_steps = 1000;
    double f_max = 30.0;
    double t_max = 10.0;
    double log_std_min = -5.0;
    double log_std_max = 2.0;

    void validate() const {
        if (gamma < 0.0 || gamma >= 1.0)
            throw std::invalid_argument("SacConfig: gamma must be in [0,1)");
        if (batch < 1 || replay_capacity < batch)
            throw std::invalid_argument("SacConfig: bad batch/replay sizes");
        if (f_max <= 0.0 || t_max <= 0.0)
            throw std::invalid_argument("SacConfig: action bounds must be positive");
    }
};

struct SacLosses {
    double critic1 = 0.0;
    double critic2 = 0.0;
    double actor = 0.0;
    double alpha = 0.0;
    double entropy = 0.0;
};

/// Running mean/std, frozen after warm-up so the policy input scaling is
/// stationary for the rest of training and at deployment.
struct RunningStats {
    VecX mean;
    VecX m2;
    long count = 0;
    bool frozen = false;

    explicit RunningStats(int dim = 10) : mean(VecX::Zero(dim)), m2(VecX::Zero(dim)) {}

    void update(const VecX& x) {
        if (frozen) return;
        count += 1;
        VecX delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta.cwiseProduct(x - mean);
    }

    VecX stddev() const {
        if (count < 2) return VecX::Ones(mean.size());
        return (m2 / static_cast<double>(count - 1)).cwiseSqrt().cwiseMax(1e-6);
    }

    VecX normalize(const VecX& x) const {
        if (count < 2) return x;
        return (x - mean).cwiseQuotient(stddev());
    }
};

/// Twin-critic SAC with a tanh-squashed Gaussian actor and learned
/// temperature. All networks are 2x128 ReLU.
class SacAgent {
public:
    SacAgent(const SacConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), rng_(seed), replay_(static_cast<size_t>(cfg.replay_capacity)),
          obs_stats_(10) {
        cfg_.validate();
        actor_ = mlp_init_128(10, 12, rng_);
        critic1_ = mlp_init_128(16, 1, rng_);
        critic2_ = mlp_init_128(16, 1, rng_);
        target1_ = critic1_;
        target2_ = critic2_;
        opt_actor_ = AdamState::for_net(actor_, cfg.learning_rate);
        opt_c1_ = AdamState::for_net(critic1_, cfg.learning_rate);
        opt_c2_ = AdamState::for_net(critic2_, cfg.learning_rate);
        opt_alpha_.learning_rate = cfg.learning_rate;
    }

    const SacConfig& config() const { return cfg_; }
    double alpha() const { return std::exp(log_alpha_); }
    RunningStats& obs_stats() { return obs_stats_; }
    const RunningStats& obs_stats() const { return obs_stats_; }
    ReplayBuffer& replay() { return replay_; }
    Mlp& actor() { return actor_; }
    const Mlp& critic1() const { return critic1_; }
    const Mlp& target1() const { return target1_; }
    const Mlp& target2() const { return target2_; }
    std::mt19937_64& rng() { return rng_; }

    DisturbanceParams wrench_from_pre(const Vec6& pre) const {
        DisturbanceParams d;
        d.force = cfg_.f_max * pre.head<3>().array().tanh().matrix();
        d.torque = cfg_.t_max * pre.tail<3>().array().tanh().matrix();
        return d;
    }

    /// Samples (or takes the mean of) the squashed policy. Returns the
    /// pre-squash draw; use wrench_from_pre for the physical action.
    Vec6 act_pre(const Vec10& obs, bool stochastic) {
        const VecX x = obs_stats_.normalize(obs);
        Tape tape;
        VecX out = forward(actor_, x, tape);
        Vec6 mean = out.head<6>();
        if (!stochastic) return mean;
        Vec6 pre;
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int i = 0; i < 6; ++i) {
            const double log_std = std::clamp(out(6 + i), cfg_.log_std_min, cfg_.log_std_max);
            pre(i) = mean(i) + std::exp(log_std) * gauss(rng_);
        }
        return pre;
    }

    /// Deterministic (mean) action; const and safe to share across threads.
    Vec6 act_pre_mean(const Vec10& obs) const {
        const VecX x = obs_stats_.normalize(obs);
        Tape tape;
        return forward(actor_, x, tape).head<6>();
    }

    DisturbanceParams act(const Observation& obs, bool stochastic) {
        return wrench_from_pre(act_pre(obs.concat(), stochastic));
    }

    DisturbanceParams act_deterministic(const Observation& obs) const {
        return wrench_from_pre(act_pre_mean(obs.concat()));
    }

    void observe(const Transition& t) {
        replay_.push(t);
        obs_stats_.update(t.obs);
        if (!obs_stats_.frozen && replay_.size() >= static_cast<size_t>(cfg_.warmup_steps))
            obs_stats_.frozen = true;
    }

    bool ready() const { return replay_.size() >= static_cast<size_t>(cfg_.batch); }

    SacLosses update() {
        if (replay_.size() < static_cast<size_t>(cfg_.batch))
            throw std::logic_error("SacAgent::update: replay smaller than batch");
        const int B = cfg_.batch;
        const std::vector<int> idx = replay_.sample_indices(B, rng_);

        MatX x(B, 10), xn(B, 10), act(B, 6);
        VecX rew(B), not_done(B);
        for (int i = 0; i < B; ++i) {
            const Transition& t = replay_.at(idx[i]);
            x.row(i) = obs_stats_.normalize(t.obs).transpose();
            xn.row(i) = obs_stats_.normalize(t.next_obs).transpose();
            act.row(i) = t.action_pre.array().tanh().matrix().transpose();
            rew(i) = t.reward;
            not_done(i) = t.done ? 0.0 : 1.0;
        }

        SacLosses losses;
        const double alpha = std::exp(log_alpha_);

        // Critic targets from the target networks and fresh next actions.
        VecX y(B);
        {
            MatX a_next(B, 6);
            VecX logp_next(B);
            sample_policy(xn, a_next, logp_next, nullptr, nullptr, nullptr, nullptr);
            MatX inp(B, 16);
            inp << xn, a_next;
            Tape t1, t2;
            VecX q1 = forward(target1_, inp, t1).col(0);
            VecX q2 = forward(target2_, inp, t2).col(0);
            VecX qmin = q1.cwiseMin(q2);
            y = rew + cfg_.gamma * not_done.cwiseProduct(qmin - alpha * logp_next);
        }

        // Twin critic regression.
        {
            MatX inp(B, 16);
            inp << x, act;
            for (int c = 0; c < 2; ++c) {
                Mlp& critic = c == 0 ? critic1_ : critic2_;
                AdamState& opt = c == 0 ? opt_c1_ : opt_c2_;
                Tape tape;
                VecX q = forward(critic, inp, tape).col(0);
                VecX err = q - y;
                (c == 0 ? losses.critic1 : losses.critic2) =
                    err.squaredNorm() / static_cast<double>(B);
                Gradients g = backward(critic, tape,
                                       MatX(2.0 * err / static_cast<double>(B)));
                adam_step(opt, critic, g);
            }
        }

        // Reparameterized actor step against the updated critics.
        double logp_mean = 0.0;
        {
            MatX a(B, 6), pre(B, 6), std_eps(B, 6), clamp_mask(B, 6);
            VecX logp(B);
            Tape actor_tape;
            sample_policy(x, a, logp, &pre, &std_eps, &clamp_mask, &actor_tape);
            logp_mean = logp.mean();

            MatX inp(B, 16);
            inp << x, a;
            Tape t1, t2;
            VecX q1 = forward(critic1_, inp, t1).col(0);
            VecX q2 = forward(critic2_, inp, t2).col(0);
            losses.actor = (alpha * logp - q1.cwiseMin(q2)).mean();

            MatX gout1 = MatX::Zero(B, 1), gout2 = MatX::Zero(B, 1);
            for (int i = 0; i < B; ++i)
                (q1(i) <= q2(i) ? gout1 : gout2)(i, 0) = -1.0 / static_cast<double>(B);
            Gradients gq1 = backward(critic1_, t1, gout1);
            Gradients gq2 = backward(critic2_, t2, gout2);
            MatX dl_da = gq1.input.rightCols<6>() + gq2.input.rightCols<6>();

            // Chain through tanh and the log-density, epsilon held fixed.
            MatX sech2 = (1.0 - a.array().square()).matrix();
            MatX dlogp_dpre =
                (2.0 * a.array() * sech2.array() / (sech2.array() + 1e-6)).matrix();
            MatX g_pre = dl_da.cwiseProduct(sech2) + (alpha / B) * dlogp_dpre;
            MatX g_mean = g_pre;
            MatX g_logstd =
                (g_pre.cwiseProduct(std_eps) + MatX::Constant(B, 6, -alpha / B))
                    .cwiseProduct(clamp_mask);

            MatX g_out(B, 12);
            g_out << g_mean, g_logstd;
            Gradients ga = backward(actor_, actor_tape, g_out);
            adam_step(opt_actor_, actor_, ga);
        }

        // Temperature step toward the entropy target.
        {
            const double grad = -std::exp(log_alpha_) * (logp_mean + cfg_.target_entropy);
            opt_alpha_.step(log_alpha_, grad);
            losses.alpha = std::exp(log_alpha_);
            losses.entropy = -logp_mean;
        }

        polyak_update(target1_, critic1_);
        polyak_update(target2_, critic2_);
        return losses;
    }

    void save(const std::string& path) const {
        std::vector<TensorRecord> records;
        append_mlp_records(records, "actor", actor_);
        append_mlp_records(records, "critic1", critic1_);
        append_mlp_records(records, "critic2", critic2_);
        append_mlp_records(records, "target1", target1_);
        append_mlp_records(records, "target2", target2_);
        records.push_back(scalar_record("alpha", std::exp(log_alpha_)));
        records.push_back(vector_record("obs_stats/mean", obs_stats_.mean));
        records.push_back(vector_record("obs_stats/m2", obs_stats_.m2));
        records.push_back(scalar_record("obs_stats/count", static_cast<double>(obs_stats_.count)));
        records.push_back(scalar_record("obs_stats/frozen", obs_stats_.frozen ? 1.0 : 0.0));
        records.push_back(scalar_record("f_max", cfg_.f_max));
        records.push_back(scalar_record("t_max", cfg_.t_max));
        write_checkpoint(path, records);
    }

    static SacAgent load(const std::string& path, const SacConfig& cfg, std::uint64_t seed) {
        auto records = read_checkpoint(path);
        SacAgent agent(cfg, seed);
        agent.actor_ = mlp_from_records(records, "actor");
        agent.critic1_ = mlp_from_records(records, "critic1");
        agent.critic2_ = mlp_from_records(records, "critic2");
        agent.target1_ = mlp_from_records(records, "target1");
        agent.target2_ = mlp_from_records(records, "target2");
        agent.log_alpha_ = std::log(require_tensor(records, "alpha").data[0]);
        agent.obs_stats_.mean = vector_from_record(require_tensor(records, "obs_stats/mean"));
        agent.obs_stats_.m2 = vector_from_record(require_tensor(records, "obs_stats/m2"));
        agent.obs_stats_.count =
            static_cast<long>(require_tensor(records, "obs_stats/count").data[0]);
        agent.obs_stats_.frozen = require_tensor(records, "obs_stats/frozen").data[0] != 0.0;
        agent.opt_actor_ = AdamState::for_net(agent.actor_, cfg.learning_rate);
        agent.opt_c1_ = AdamState::for_net(agent.critic1_, cfg.learning_rate);
        agent.opt_c2_ = AdamState::for_net(agent.critic2_, cfg.learning_rate);
        return agent;
    }

    /// Zero-weight actor; with deterministic evaluation this reproduces the
    /// MBC baseline exactly.
    void zero_actor() {
        for (auto& w : actor_.weights) w.setZero();
        for (auto& b : actor_.biases) b.setZero();
        actor_.revision += 1;
    }

private:
    /// Draws tanh-squashed actions for a normalized observation batch and
    /// returns the per-row log density. Optional outputs feed the actor step.
    void sample_policy(const MatX& x, MatX& a, VecX& logp, MatX* pre_out, MatX* std_eps_out,
                       MatX* clamp_mask_out, Tape* tape_out) {
        const int B = static_cast<int>(x.rows());
        Tape local;
        Tape& tape = tape_out ? *tape_out : local;
        MatX out = forward(actor_, x, tape);
        std::normal_distribution<double> gauss(0.0, 1.0);

        a.resize(B, 6);
        logp = VecX::Zero(B);
        if (pre_out) pre_out->resize(B, 6);
        if (std_eps_out) std_eps_out->resize(B, 6);
        if (clamp_mask_out) clamp_mask_out->resize(B, 6);

        constexpr double kLogTwoPi = 1.8378770664093453;
        for (int i = 0; i < B; ++i) {
            for (int j = 0; j < 6; ++j) {
                const double mean = out(i, j);
                const double raw_ls = out(i, 6 + j);
                const double ls = std::clamp(raw_ls, cfg_.log_std_min, cfg_.log_std_max);
                const bool clamped = raw_ls != ls;
                const double sigma = std::exp(ls);
                const double eps = gauss(rng_);
                const double pre = mean + sigma * eps;
                const double t = std::tanh(pre);
                a(i, j) = t;
                logp(i) += -0.5 * eps * eps - ls - 0.5 * kLogTwoPi -
                           std::log(1.0 - t * t + 1e-6);
                if (pre_out) (*pre_out)(i, j) = pre;
                if (std_eps_out) (*std_eps_out)(i, j) = sigma * eps;
                if (clamp_mask_out) (*clamp_mask_out)(i, j) = clamped ? 0.0 : 1.0;
            }
        }
    }

    void polyak_update(Mlp& target, const Mlp& online) {
        for (int l = 0; l < target.layer_count(); ++l) {
            target.weights[l] = (1.0 - cfg_.polyak) * target.weights[l] +
                                cfg_.polyak * online.weights[l];
            target.biases[l] = (1.0 - cfg_.polyak) * target.biases[l] +
                               cfg_.polyak * online.biases[l];
        }
        target.revision += 1;
    }

    SacConfig cfg_;
    std::mt19937_64 rng_;
    Mlp actor_, critic1_, critic2_, target1_, target2_;
    AdamState opt_actor_, opt_c1_, opt_c2_;
    ScalarAdam opt_alpha_;
    double log_alpha_ = 0.0;
    ReplayBuffer replay_;
    RunningStats obs_stats_;
};

}  // namespace dpc
