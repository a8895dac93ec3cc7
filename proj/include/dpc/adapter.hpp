#pragma once

#include "dpc/nn.hpp"
#include "dpc/types.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <span>
#include <sstream>
#include <vector>

namespace dpc {

/// One forward-model sample: body orientation features and arm state at t,
/// roll/pitch rates one low-level period later.
struct AdapterSample {
    Vec2 orientation = Vec2::Zero();  // roll, pitch
    Vec2 rates = Vec2::Zero();        // roll rate, pitch rate
    VecX arm_q;
    VecX arm_cmd;
    Vec2 next_drp = Vec2::Zero();
    int traj = 0;
};

inline VecX adapter_features(const AdapterSample& s) {
    VecX f(4 + s.arm_q.size() + s.arm_cmd.size());
    f << s.orientation, s.rates, s.arm_q, s.arm_cmd;
    return f;
}

struct AdapterDataset {
    int arm_dof = 0;
    std::vector<AdapterSample> samples;

    int feature_dim() const { return 4 + 2 * arm_dof; }

    /// Per-element variance of the prediction target (mean over both dims).
    double next_drp_variance() const {
        if (samples.empty()) return 0.0;
        Vec2 mean = Vec2::Zero();
        for (const auto& s : samples) mean += s.next_drp;
        mean /= static_cast<double>(samples.size());
        double acc = 0.0;
        for (const auto& s : samples) acc += (s.next_drp - mean).squaredNorm();
        return acc / (2.0 * static_cast<double>(samples.size()));
    }

    void save_csv(const std::string& path) const {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw std::runtime_error("AdapterDataset: cannot write " + path);
        f << "traj,roll,pitch,roll_rate,pitch_rate";
        for (int j = 0; j < arm_dof; ++j) f << ",q" << j;
        for (int j = 0; j < arm_dof; ++j) f << ",cmd" << j;
        f << ",next_roll_rate,next_pitch_rate\n";
        f << std::setprecision(17);
        for (const auto& s : samples) {
            f << s.traj << ',' << s.orientation.x() << ',' << s.orientation.y() << ','
              << s.rates.x() << ',' << s.rates.y();
            for (int j = 0; j < arm_dof; ++j) f << ',' << s.arm_q(j);
            for (int j = 0; j < arm_dof; ++j) f << ',' << s.arm_cmd(j);
            f << ',' << s.next_drp.x() << ',' << s.next_drp.y() << '\n';
        }
        if (!f) throw std::runtime_error("AdapterDataset: write failed " + path);
    }

    static AdapterDataset load_csv(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("AdapterDataset: cannot open " + path);
        std::string header;
        if (!std::getline(f, header))
            throw std::runtime_error("AdapterDataset: empty file " + path);
        const int cols = 1 + static_cast<int>(std::count(header.begin(), header.end(), ','));
        if (cols < 7 || (cols - 7) % 2 != 0)
            throw std::runtime_error("AdapterDataset: unexpected column count in " + path);
        AdapterDataset out;
        out.arm_dof = (cols - 7) / 2;

        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string cell;
            std::vector<double> vals;
            while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
            if (static_cast<int>(vals.size()) != cols)
                throw std::runtime_error("AdapterDataset: ragged row in " + path);
            AdapterSample s;
            s.traj = static_cast<int>(vals[0]);
            s.orientation << vals[1], vals[2];
            s.rates << vals[3], vals[4];
            s.arm_q = Eigen::Map<const VecX>(vals.data() + 5, out.arm_dof);
            s.arm_cmd = Eigen::Map<const VecX>(vals.data() + 5 + out.arm_dof, out.arm_dof);
            s.next_drp << vals[cols - 2], vals[cols - 1];
            out.samples.push_back(std::move(s));
        }
        return out;
    }
};

/// Encoder/decoder pair with standardization frozen at train time: inputs are
/// scaled per feature before the encoder, predictions are de-standardized
/// after the decoder (the affine output map belongs to the decoder and is
/// frozen with it during migration). The latent bottleneck is fixed at 2.
struct AdapterModel {
    Mlp encoder;
    Mlp decoder;
    VecX input_mean;
    VecX input_std;
    Vec2 target_mean = Vec2::Zero();
    Vec2 target_std = Vec2::Ones();

    void validate() const {
        encoder.validate();
        decoder.validate();
        if (encoder.output_dim() != 2 || decoder.input_dim() != 2)
            throw std::invalid_argument("AdapterModel: latent dimension must be 2");
        if (input_mean.size() != encoder.input_dim() || input_std.size() != encoder.input_dim())
            throw std::invalid_argument("AdapterModel: standardization shape mismatch");
    }

    VecX standardize(const VecX& features) const {
        return (features - input_mean).cwiseQuotient(input_std);
    }

    Vec2 predict(const VecX& features) const {
        Tape te, td;
        VecX z = forward(encoder, VecX(standardize(features)), te);
        VecX out = forward(decoder, z, td);
        return Vec2(out.head<2>()).cwiseProduct(target_std) + target_mean;
    }

    void save(const std::string& path) const {
        std::vector<TensorRecord> records;
        append_mlp_records(records, "encoder", encoder);
        append_mlp_records(records, "decoder", decoder);
        records.push_back(vector_record("encoder/input_mean", input_mean));
        records.push_back(vector_record("encoder/input_std", input_std));
        records.push_back(vector_record("decoder/output_mean", VecX(target_mean)));
        records.push_back(vector_record("decoder/output_std", VecX(target_std)));
        write_checkpoint(path, records);
    }

    static AdapterModel load(const std::string& path) {
        auto records = read_checkpoint(path);
        AdapterModel m;
        m.encoder = mlp_from_records(records, "encoder");
        m.decoder = mlp_from_records(records, "decoder");
        m.input_mean = vector_from_record(require_tensor(records, "encoder/input_mean"));
        m.input_std = vector_from_record(require_tensor(records, "encoder/input_std"));
        m.target_mean = vector_from_record(require_tensor(records, "decoder/output_mean"));
        m.target_std = vector_from_record(require_tensor(records, "decoder/output_std"));
        m.validate();
        return m;
    }
};

inline LatentState encode(const AdapterModel& model, const VecX& features) {
    if (features.size() != model.encoder.input_dim())
        throw std::invalid_argument("encode: feature dimension mismatch");
    LatentState z;
    z.z = forward(model.encoder, VecX(model.standardize(features))).head<2>();
    return z;
}

inline LatentState encode(const AdapterModel& model, const BodyState& body, const ArmState& arm,
                          const ArmCommand& cmd) {
    VecX f(4 + arm.joint_angles.size() + cmd.desired_joint_positions.size());
    f << body.orientation_rpy.x(), body.orientation_rpy.y(), body.angular_velocity.x(),
        body.angular_velocity.y(), arm.joint_angles, cmd.desired_joint_positions;
    return encode(model, f);
}

/// Per-element mean squared prediction error (physical units) over samples.
inline double adapter_mse(const AdapterModel& model, std::span<const AdapterSample> samples) {
    if (samples.empty()) return 0.0;
    MatX x(samples.size(), model.encoder.input_dim());
    MatX y(samples.size(), 2);
    for (size_t i = 0; i < samples.size(); ++i) {
        x.row(i) = model.standardize(adapter_features(samples[i])).transpose();
        y.row(i) = samples[i].next_drp.transpose();
    }
    Tape te, td;
    MatX z = forward(model.encoder, x, te);
    MatX pred = forward(model.decoder, z, td);
    pred.array().rowwise() *= model.target_std.transpose().array();
    pred.rowwise() += model.target_mean.transpose();
    return (pred - y).squaredNorm() / static_cast<double>(2 * samples.size());
}

struct AdapterLossPoint {
    int step = 0;
    double train_mse = 0.0;
    double holdout_mse = 0.0;
};

struct AdapterTrainResult {
    AdapterModel model;
    std::vector<AdapterLossPoint> history;
    double final_holdout_mse = 0.0;
};

namespace detail {

/// Temporal split: the last `holdout_fraction` of every trajectory is held
/// out, which keeps adjacent timesteps from leaking across the split.
inline void temporal_split(const AdapterDataset& data, std::vector<int>& train,
                           std::vector<int>& holdout, double holdout_fraction = 0.1) {
    std::vector<std::pair<int, int>> traj_spans;  // first index, count
    for (int i = 0; i < static_cast<int>(data.samples.size()); ++i) {
        if (traj_spans.empty() || data.samples[i].traj != data.samples[traj_spans.back().first].traj)
            traj_spans.emplace_back(i, 0);
        traj_spans.back().second += 1;
    }
    for (auto [first, count] : traj_spans) {
        const int cut = count - static_cast<int>(std::floor(holdout_fraction * count));
        for (int k = 0; k < count; ++k)
            (k < cut ? train : holdout).push_back(first + k);
    }
    if (holdout.empty() && !train.empty()) {
        holdout.push_back(train.back());
        train.pop_back();
    }
}

struct StandardizedBatches {
    MatX x_train, y_train, x_hold, y_hold;  // targets standardized
    VecX mean, stddev;
    Vec2 y_mean = Vec2::Zero();
    Vec2 y_std = Vec2::Ones();
};

inline StandardizedBatches prepare(const AdapterDataset& data, const std::vector<int>& train,
                                   const std::vector<int>& holdout, const Vec2* fixed_y_mean,
                                   const Vec2* fixed_y_std) {
    StandardizedBatches b;
    const int dim = data.feature_dim();
    MatX xt(train.size(), dim), yt(train.size(), 2);
    for (size_t i = 0; i < train.size(); ++i) {
        xt.row(i) = adapter_features(data.samples[train[i]]).transpose();
        yt.row(i) = data.samples[train[i]].next_drp.transpose();
    }
    b.mean = xt.colwise().mean().transpose();
    VecX var = ((xt.rowwise() - b.mean.transpose()).array().square().colwise().sum() /
                std::max<double>(1.0, static_cast<double>(train.size())))
                   .matrix()
                   .transpose();
    b.stddev = var.cwiseSqrt().cwiseMax(1e-8);
    b.x_train = (xt.rowwise() - b.mean.transpose()).array().rowwise() /
                b.stddev.transpose().array();

    if (fixed_y_mean) {
        // Migration keeps the donor decoder's output scaling.
        b.y_mean = *fixed_y_mean;
        b.y_std = *fixed_y_std;
    } else {
        b.y_mean = yt.colwise().mean().transpose();
        Vec2 y_var = ((yt.rowwise() - b.y_mean.transpose()).array().square().colwise().sum() /
                      std::max<double>(1.0, static_cast<double>(train.size())))
                         .matrix()
                         .transpose();
        b.y_std = y_var.cwiseSqrt().cwiseMax(1e-8);
    }
    b.y_train = (yt.rowwise() - b.y_mean.transpose()).array().rowwise() /
                b.y_std.transpose().array();

    b.x_hold.resize(holdout.size(), dim);
    b.y_hold.resize(holdout.size(), 2);
    for (size_t i = 0; i < holdout.size(); ++i) {
        b.x_hold.row(i) = ((adapter_features(data.samples[holdout[i]]) - b.mean)
                               .cwiseQuotient(b.stddev))
                              .transpose();
        b.y_hold.row(i) = ((data.samples[holdout[i]].next_drp - b.y_mean).cwiseQuotient(b.y_std))
                              .transpose();
    }
    return b;
}

/// MSE in physical units for standardized inputs/targets.
inline double eval_mse(const Mlp& enc, const Mlp& dec, const MatX& x, const MatX& y_std_units,
                       const Vec2& y_std) {
    if (x.rows() == 0) return 0.0;
    Tape te, td;
    MatX pred = forward(dec, forward(enc, x, te), td);
    MatX err = pred - y_std_units;
    err.array().rowwise() *= y_std.transpose().array();
    return err.squaredNorm() / static_cast<double>(2 * x.rows());
}

}  // namespace detail

/// Joint encoder/decoder training by squared-error minimization.
/// `migrate_onto` freezes the donor's decoder (including its output scaling)
/// and trains only a fresh encoder.
inline AdapterTrainResult train_adapter_impl(const AdapterDataset& data, int epochs, double lr,
                                             int batch, std::uint64_t seed,
                                             const AdapterModel* migrate_onto) {
    if (data.samples.empty()) throw std::invalid_argument("train_adapter: empty dataset");
    std::vector<int> train_idx, hold_idx;
    detail::temporal_split(data, train_idx, hold_idx);
    detail::StandardizedBatches b =
        detail::prepare(data, train_idx, hold_idx, migrate_onto ? &migrate_onto->target_mean : nullptr,
                        migrate_onto ? &migrate_onto->target_std : nullptr);

    std::mt19937_64 rng(seed);
    AdapterTrainResult out;
    out.model.encoder = mlp_init_128(data.feature_dim(), 2, rng);
    if (migrate_onto) {
        if (migrate_onto->decoder.input_dim() != 2)
            throw std::invalid_argument("migrate_encoder: decoder latent dimension mismatch");
        out.model.decoder = migrate_onto->decoder;
    } else {
        out.model.decoder = mlp_init_128(2, 2, rng);
    }
    out.model.input_mean = b.mean;
    out.model.input_std = b.stddev;
    out.model.target_mean = b.y_mean;
    out.model.target_std = b.y_std;

    AdamState enc_opt = AdamState::for_net(out.model.encoder, lr);
    AdamState dec_opt = AdamState::for_net(out.model.decoder, lr);
    // Targets are small physical rates; a tight epsilon keeps Adam
    // scale-invariant all the way down (doubles make this safe).
    enc_opt.epsilon = 1e-12;
    dec_opt.epsilon = 1e-12;

    const int n_train = static_cast<int>(b.x_train.rows());
    const int eff_batch = std::min(batch, n_train);
    const int steps_per_epoch = std::max(1, n_train / eff_batch);
    const int total_steps = epochs * steps_per_epoch;
    std::uniform_int_distribution<int> pick(0, n_train - 1);

    int step = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (int s = 0; s < steps_per_epoch; ++s, ++step) {
            // Cosine decay to lr/100 sharpens the late fit past minibatch noise.
            const double decay =
                0.01 + 0.495 * (1.0 + std::cos(M_PI * step / std::max(total_steps - 1, 1)));
            enc_opt.learning_rate = lr * decay;
            dec_opt.learning_rate = lr * decay;
            MatX xb(eff_batch, b.x_train.cols()), yb(eff_batch, 2);
            for (int i = 0; i < eff_batch; ++i) {
                const int idx = pick(rng);
                xb.row(i) = b.x_train.row(idx);
                yb.row(i) = b.y_train.row(idx);
            }
            Tape te, td;
            MatX z = forward(out.model.encoder, xb, te);
            MatX pred = forward(out.model.decoder, z, td);
            MatX err = pred - yb;
            epoch_loss += err.squaredNorm() / static_cast<double>(2 * eff_batch);

            Gradients gd = backward(out.model.decoder, td, MatX(err / static_cast<double>(eff_batch)));
            Gradients ge = backward(out.model.encoder, te, gd.input);
            if (!migrate_onto) adam_step(dec_opt, out.model.decoder, gd);
            adam_step(enc_opt, out.model.encoder, ge);
        }
        AdapterLossPoint pt;
        pt.step = step;
        pt.train_mse = epoch_loss / steps_per_epoch;  // standardized units
        pt.holdout_mse = detail::eval_mse(out.model.encoder, out.model.decoder, b.x_hold,
                                          b.y_hold, b.y_std);
        out.history.push_back(pt);
    }
    out.final_holdout_mse =
        detail::eval_mse(out.model.encoder, out.model.decoder, b.x_hold, b.y_hold, b.y_std);
    return out;
}

inline AdapterTrainResult train_adapter(const AdapterDataset& data, int epochs = 60,
                                        double lr = 1e-3, int batch = 256,
                                        std::uint64_t seed = 0) {
    return train_adapter_impl(data, epochs, lr, batch, seed, nullptr);
}

/// Frozen-decoder migration: trains a new encoder for `data` against the
/// donor's immutable decoder, using at most `budget` samples.
inline AdapterTrainResult migrate_encoder(const AdapterModel& donor, const AdapterDataset& data,
                                          int budget, int epochs = 120, double lr = 1e-3,
                                          int batch = 256, std::uint64_t seed = 0) {
    AdapterDataset limited;
    limited.arm_dof = data.arm_dof;
    const int n = std::min<int>(budget, static_cast<int>(data.samples.size()));
    limited.samples.assign(data.samples.begin(), data.samples.begin() + n);
    return train_adapter_impl(limited, epochs, lr, batch, seed, &donor);
}

}  // namespace dpc
