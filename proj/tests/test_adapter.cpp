#include "dpc/adapter.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

using namespace dpc;

namespace {

// next_drp is an exact linear function of the features with rank <= 2, so a
// 2-D bottleneck suffices and least squares gives a zero floor.
AdapterDataset linear_benchmark(int n, std::uint64_t seed, bool shuffle_labels = false,
                                bool permute_inputs = false) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    const int dof = 4;
    AdapterDataset data;
    data.arm_dof = dof;

    // The lift scale puts the targets at the physical magnitude of desk-scale
    // roll/pitch rates (std ~ 0.1 rad/s).
    MatX proj(2, 12), lift(2, 2);
    std::mt19937_64 wrng(1234);  // fixed mapping across datasets
    std::normal_distribution<double> wg(0.0, 1.0);
    for (int i = 0; i < proj.rows(); ++i)
        for (int j = 0; j < proj.cols(); ++j) proj(i, j) = 0.3 * wg(wrng);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) lift(i, j) = 0.08 * wg(wrng);

    std::vector<int> perm{0, 1, 2, 3, 4, 5, 6, 7};  // arm feature permutation
    if (permute_inputs) std::rotate(perm.begin(), perm.begin() + 3, perm.end());

    for (int i = 0; i < n; ++i) {
        AdapterSample s;
        s.traj = i / 500;
        s.orientation << 0.2 * g(rng), 0.2 * g(rng);
        s.rates << 0.5 * g(rng), 0.5 * g(rng);
        s.arm_q = VecX::NullaryExpr(dof, [&](int) { return g(rng); });
        s.arm_cmd = VecX::NullaryExpr(dof, [&](int) { return g(rng); });

        VecX arm_feat(8);
        arm_feat << s.arm_q, s.arm_cmd;
        VecX arm_used(8);
        for (int k = 0; k < 8; ++k) arm_used(k) = arm_feat(perm[k]);
        VecX feat(12);
        feat << s.orientation, s.rates, arm_used;
        s.next_drp = lift * (proj * feat);
        data.samples.push_back(std::move(s));
    }
    if (shuffle_labels) {
        std::vector<Vec2> labels;
        for (const auto& s : data.samples) labels.push_back(s.next_drp);
        std::shuffle(labels.begin(), labels.end(), rng);
        for (size_t i = 0; i < labels.size(); ++i) data.samples[i].next_drp = labels[i];
    }
    return data;
}

}  // namespace

TEST_CASE("zero-weight encoder returns its bias and encoding is deterministic") {
    std::mt19937_64 rng(3);
    AdapterModel model;
    model.encoder = mlp_init_128(12, 2, rng);
    model.decoder = mlp_init_128(2, 2, rng);
    model.input_mean = VecX::Zero(12);
    model.input_std = VecX::Ones(12);
    for (auto& w : model.encoder.weights) w.setZero();
    for (auto& b : model.encoder.biases) b.setZero();
    model.encoder.biases.back() << 0.7, -0.3;

    VecX f = VecX::Random(12);
    LatentState z = encode(model, f);
    CHECK((z.z - Vec2(0.7, -0.3)).norm() == 0.0);
    CHECK((encode(model, f).z - encode(model, f).z).norm() == 0.0);
    CHECK_THROWS_AS(encode(model, VecX(VecX::Zero(5))), std::invalid_argument);
}

TEST_CASE("adapter learns an exact rank-2 target to tight holdout error") {
    AdapterDataset data = linear_benchmark(4000, 21);
    AdapterTrainResult res = train_adapter(data, /*epochs=*/150, 3e-3, 256, 5);
    CAPTURE(res.final_holdout_mse);
    CHECK(res.final_holdout_mse <= 1e-4);
    CHECK(res.history.back().train_mse < res.history.front().train_mse);
}

TEST_CASE("constant targets are memorized exactly") {
    AdapterDataset data = linear_benchmark(1500, 8);
    for (auto& s : data.samples) s.next_drp = Vec2(0.12, -0.34);
    AdapterTrainResult res = train_adapter(data, 300, 3e-3, 256, 2);
    CHECK(res.final_holdout_mse < 1e-5);
    Vec2 out = res.model.predict(adapter_features(data.samples[3]));
    CHECK((out - Vec2(0.12, -0.34)).lpNorm<Eigen::Infinity>() < 1e-2);
}

TEST_CASE("shuffled labels leave only the variance floor") {
    AdapterDataset data = linear_benchmark(3000, 9, /*shuffle_labels=*/true);
    const double var = data.next_drp_variance();
    AdapterTrainResult res = train_adapter(data, 40, 1e-3, 256, 3);
    CHECK(res.final_holdout_mse > 0.5 * var);
    CHECK(res.final_holdout_mse < 2.0 * var);
}

TEST_CASE("latent state separates arm poses that matter for the prediction") {
    // Two arm-pose clusters with strongly different dynamics signatures.
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.0, 1.0);
    AdapterDataset data;
    data.arm_dof = 4;
    for (int i = 0; i < 3000; ++i) {
        AdapterSample s;
        s.traj = i / 500;
        const bool extended = i % 2 == 0;
        s.orientation << 0.05 * g(rng), 0.05 * g(rng);
        s.rates << 0.1 * g(rng), 0.1 * g(rng);
        const double base = extended ? 1.3 : 0.1;
        s.arm_q =
            VecX::Constant(4, base) + 0.05 * VecX::NullaryExpr(4, [&](int) { return g(rng); });
        s.arm_cmd = s.arm_q;
        s.next_drp = extended ? Vec2(0.4, -0.4) : Vec2(-0.4, 0.4);
        s.next_drp += 0.01 * Vec2(g(rng), g(rng));
        data.samples.push_back(std::move(s));
    }
    AdapterTrainResult res = train_adapter(data, 60, 1e-3, 256, 11);

    std::vector<Vec2> z_ext, z_fold;
    for (int i = 0; i < 400; ++i) {
        const auto& s = data.samples[i];
        Vec2 z = encode(res.model, adapter_features(s)).z;
        (i % 2 == 0 ? z_ext : z_fold).push_back(z);
    }
    const auto mean_of = [](const std::vector<Vec2>& zs) {
        Vec2 m = Vec2::Zero();
        for (const auto& z : zs) m += z;
        return Vec2(m / static_cast<double>(zs.size()));
    };
    const auto spread_of = [&](const std::vector<Vec2>& zs) {
        const Vec2 m = mean_of(zs);
        double acc = 0.0;
        for (const auto& z : zs) acc += (z - m).squaredNorm();
        return std::sqrt(acc / static_cast<double>(zs.size()));
    };
    const double separation = (mean_of(z_ext) - mean_of(z_fold)).norm();
    const double spread = std::max(spread_of(z_ext), spread_of(z_fold));
    CAPTURE(separation, spread);
    CHECK(separation >= 10.0 * spread);
}

TEST_CASE("migration on the same distribution matches the original quality") {
    AdapterDataset data = linear_benchmark(4000, 31);
    AdapterTrainResult original = train_adapter(data, 150, 1e-3, 256, 5);
    AdapterTrainResult migrated =
        migrate_encoder(original.model, data, /*budget=*/4000, 150, 1e-3, 256, 6);
    CHECK(migrated.final_holdout_mse <= 1.05 * original.final_holdout_mse + 1e-6);

    // Decoder is bit-identical after migration.
    for (int l = 0; l < original.model.decoder.layer_count(); ++l) {
        CHECK(migrated.model.decoder.weights[l] == original.model.decoder.weights[l]);
        CHECK(migrated.model.decoder.biases[l] == original.model.decoder.biases[l]);
    }
}

TEST_CASE("migration absorbs an input permutation within budget") {
    AdapterDataset old_arm = linear_benchmark(4000, 41);
    AdapterTrainResult original = train_adapter(old_arm, 150, 1e-3, 256, 5);

    AdapterDataset new_arm = linear_benchmark(4000, 42, false, /*permute_inputs=*/true);
    AdapterTrainResult migrated =
        migrate_encoder(original.model, new_arm, /*budget=*/4000, 150, 1e-3, 256, 7);
    CHECK(migrated.final_holdout_mse <= 1.2 * original.final_holdout_mse + 1e-6);
}

TEST_CASE("adapter error paths") {
    AdapterDataset empty;
    empty.arm_dof = 4;
    CHECK_THROWS_AS(train_adapter(empty, 10, 1e-3, 64, 0), std::invalid_argument);

    AdapterDataset data = linear_benchmark(500, 1);
    std::mt19937_64 rng(2);
    AdapterModel bad_donor;
    bad_donor.encoder = mlp_init_128(12, 2, rng);
    bad_donor.decoder = mlp_init_128(3, 2, rng);  // latent dim mismatch
    bad_donor.input_mean = VecX::Zero(12);
    bad_donor.input_std = VecX::Ones(12);
    CHECK_THROWS_AS(migrate_encoder(bad_donor, data, 500, 5, 1e-3, 64, 0),
                    std::invalid_argument);
}

TEST_CASE("adapter checkpoints round trip and enforce the 2-D latent") {
    AdapterDataset data = linear_benchmark(800, 3);
    AdapterTrainResult res = train_adapter(data, 10, 1e-3, 128, 4);
    const auto path = std::filesystem::temp_directory_path() / "dpc_adapter_test.bin";
    res.model.save(path.string());
    AdapterModel back = AdapterModel::load(path.string());
    VecX f = adapter_features(data.samples[5]);
    CHECK((encode(back, f).z - encode(res.model, f).z).norm() == 0.0);
    std::filesystem::remove(path);
}
