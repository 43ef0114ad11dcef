#include "twindiag/surrogate.hpp"

#include <algorithm>

#include "twindiag/errors.hpp"

namespace twindiag::residual {

using nn::MatX;
using nn::Tensor;

NormalizationCalib::NormalizationCalib() {
    floor_.resize(kNumMonitored);
    for (int c = 0; c < kNumMonitored; ++c)
        floor_(c) = static_cast<float>(channel_floor(c));
}

namespace {

nn::Sequential<float> make_surrogate_model(const SurrogateSpec& spec) {
    nn::Sequential<float> m;
    m.add<nn::Gru<float>>(spec.input, spec.hidden, spec.layers, /*return_sequence=*/true);
    m.add<nn::Dense<float>>(spec.hidden, spec.horizon * kNumMonitored);
    return m;
}

// Standardized input matrix (27 x T) for one episode.
MatX<float> standardize_input(const Eigen::MatrixXf& frames, const Eigen::VectorXf& mean,
                              const Eigen::VectorXf& std) {
    return ((frames.colwise() - mean).array().colwise() / std.array()).matrix();
}

struct ChunkRef {
    int episode = 0;
    int start = 0;
};

}  // namespace

Surrogate train_surrogate(const std::vector<data::EpisodeRecord>& nominal_episodes,
                          const SurrogateSpec& spec, const SurrogateTrainConfig& cfg) {
    if (nominal_episodes.empty()) throw InputError("train_surrogate: no episodes");
    for (const auto& e : nominal_episodes)
        if (e.fault_class != faults::FaultClass::nominal)
            throw InputError("train_surrogate: non-nominal episode " + e.run_id +
                             " would leak labels");
    if (spec.horizon < 1) throw InputError("train_surrogate: horizon must be >= 1");

    Surrogate s;
    s.spec = spec;

    const int n_val = std::max(1, static_cast<int>(nominal_episodes.size() * cfg.val_fraction));
    const int n_train = std::max(1, static_cast<int>(nominal_episodes.size()) - n_val);

    // Input standardization fitted on the training episodes only.
    double count = 0.0;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(kNumChannels);
    Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(kNumChannels);
    for (int i = 0; i < n_train; ++i) {
        const auto& f = nominal_episodes[static_cast<std::size_t>(i)].frames;
        sum += f.cast<double>().rowwise().sum();
        sumsq += f.cast<double>().cwiseProduct(f.cast<double>()).rowwise().sum();
        count += static_cast<double>(f.cols());
    }
    for (int c = 0; c < kNumChannels; ++c) {
        const double mean = sum(c) / count;
        const double var = std::max(sumsq(c) / count - mean * mean, 0.0);
        s.in_mean(c) = static_cast<float>(mean);
        s.in_std(c) = static_cast<float>(std::max(std::sqrt(var), 1e-4));
    }

    std::vector<MatX<float>> std_train;
    for (int i = 0; i < n_train; ++i)
        std_train.push_back(standardize_input(nominal_episodes[static_cast<std::size_t>(i)].frames,
                                              s.in_mean, s.in_std));

    const int C = cfg.chunk_steps;
    const int H = spec.horizon;
    std::vector<ChunkRef> chunks;
    for (int i = 0; i < n_train; ++i) {
        const int T = static_cast<int>(std_train[static_cast<std::size_t>(i)].cols());
        for (int start = 0; start + C + H < T; start += C) chunks.push_back({i, start});
    }
    if (chunks.empty()) throw InputError("train_surrogate: episodes shorter than one chunk");

    s.model = make_surrogate_model(spec);
    s.model.init(hash_combine(cfg.train.seed, 0x5a60ULL));

    nn::Adam<float> adam;
    const int B = cfg.train.batch_size;

    // Horizon mask: position t in a chunk supervises horizons with t + h < C.
    auto build_batch = [&](const std::vector<ChunkRef>& refs, Tensor<float>& x,
                           MatX<float>& target, MatX<float>& mask) {
        const int nb = static_cast<int>(refs.size());
        x = Tensor<float>(spec.input, nb, C);
        target = MatX<float>::Zero(H * kNumMonitored, static_cast<Eigen::Index>(nb) * C);
        mask = MatX<float>::Zero(H * kNumMonitored, static_cast<Eigen::Index>(nb) * C);
        for (int b = 0; b < nb; ++b) {
            const auto& ep = std_train[static_cast<std::size_t>(refs[static_cast<std::size_t>(b)].episode)];
            const int start = refs[static_cast<std::size_t>(b)].start;
            x.sample(b) = ep.middleCols(start, C);
            for (int h = 1; h <= H; ++h) {
                const int rows0 = (h - 1) * kNumMonitored;
                for (int t = 0; t + h < C + 1 && start + t + h < ep.cols(); ++t) {
                    target.block(rows0, static_cast<Eigen::Index>(b) * C + t, kNumMonitored, 1) =
                        ep.block(0, start + t + h, kNumMonitored, 1);
                    mask.block(rows0, static_cast<Eigen::Index>(b) * C + t, kNumMonitored, 1)
                        .setOnes();
                }
            }
        }
    };

    auto params = s.model.named_params();

    auto train_epoch = [&](int epoch, double lr) {
        // Deterministic rotation through the chunk pool.
        std::vector<ChunkRef> order = chunks;
        Rng rng(hash_combine(cfg.train.seed, 0xE90c + static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        const int use = std::min<int>(cfg.max_chunks_per_epoch, static_cast<int>(order.size()));

        double loss_sum = 0.0;
        int batches = 0;
        for (int i = 0; i < use; i += B) {
            const int nb = std::min(B, use - i);
            std::vector<ChunkRef> refs(order.begin() + i, order.begin() + i + nb);
            Tensor<float> x;
            MatX<float> target, mask;
            build_batch(refs, x, target, mask);

            s.model.zero_grad();
            auto y = s.model.forward(x, true);
            auto loss = nn::mse_loss<float>(y.m, target, &mask);
            Tensor<float> dy;
            dy.batch = y.batch;
            dy.time = y.time;
            dy.m = std::move(loss.dpred);
            s.model.backward(dy);
            adam.step(params, lr, cfg.train.weight_decay);
            loss_sum += loss.loss;
            ++batches;
        }
        return batches ? loss_sum / batches : 0.0;
    };

    // Validation: 1-step standardized MSE on the held-out episodes.
    std::vector<MatX<float>> std_val;
    for (std::size_t i = static_cast<std::size_t>(n_train); i < nominal_episodes.size(); ++i)
        std_val.push_back(standardize_input(nominal_episodes[i].frames, s.in_mean, s.in_std));

    auto val_metric = [&]() {
        double se = 0.0;
        double n = 0.0;
        for (const auto& ep : std_val) {
            const int T = static_cast<int>(ep.cols());
            Tensor<float> x;
            x.batch = 1;
            x.time = T;
            x.m = ep;
            auto y = s.model.forward(x, false);
            // prediction made at t applies to t+1
            const auto pred = y.m.block(0, 0, kNumMonitored, T - 1);
            const auto truth = ep.block(0, 1, kNumMonitored, T - 1);
            se += static_cast<double>((pred - truth).squaredNorm());
            n += static_cast<double>(pred.size());
        }
        return n > 0 ? se / n : 0.0;
    };

    nn::fit<float>(s.model, cfg.train, /*maximize=*/false, train_epoch, val_metric);

    // Calibration pass: per-channel sigma of raw-unit 1-step residuals on the
    // held-out nominal episodes.
    Eigen::VectorXd rsum = Eigen::VectorXd::Zero(kNumMonitored);
    Eigen::VectorXd rsumsq = Eigen::VectorXd::Zero(kNumMonitored);
    double rcount = 0.0;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = static_cast<std::size_t>(n_train); i < nominal_episodes.size(); ++i) {
        Eigen::MatrixXf r = surrogate_residual_raw(s, nominal_episodes[i]);
        const auto rd = r.rightCols(r.cols() - 1).cast<double>();
        rsum += rd.rowwise().sum();
        rsumsq += rd.cwiseProduct(rd).rowwise().sum();
        rcount += static_cast<double>(rd.cols());
        abs_sum += rd.cwiseAbs().sum();
        sq_sum += rd.cwiseProduct(rd).sum();
    }
    for (int c = 0; c < kNumMonitored; ++c) {
        const double mean = rsum(c) / rcount;
        const double var = std::max(rsumsq(c) / rcount - mean * mean, 0.0);
        s.calib.sigma(c) = static_cast<float>(std::sqrt(var));
    }
    s.val_mae = abs_sum / (rcount * kNumMonitored);
    s.val_rmse = std::sqrt(sq_sum / (rcount * kNumMonitored));
    return s;
}

std::vector<Eigen::MatrixXf> surrogate_residual_raw_batch(
    Surrogate& s, const std::vector<const data::EpisodeRecord*>& episodes, int until_step) {
    std::vector<Eigen::MatrixXf> out(episodes.size());
    if (episodes.empty()) return out;

    int T = 0;
    for (const auto* e : episodes) T = std::max(T, static_cast<int>(e->frames.cols()));
    if (until_step > 0) T = std::min(T, until_step);

    const int B = static_cast<int>(episodes.size());
    Tensor<float> x(s.spec.input, B, T);
    for (int b = 0; b < B; ++b) {
        const auto& f = episodes[static_cast<std::size_t>(b)]->frames;
        const int Te = std::min(T, static_cast<int>(f.cols()));
        x.sample(b).leftCols(Te) =
            standardize_input(f.leftCols(Te), s.in_mean, s.in_std);
    }

    auto y = s.model.forward(x, false);
    for (int b = 0; b < B; ++b) {
        const auto& f = episodes[static_cast<std::size_t>(b)]->frames;
        const int Te = std::min(T, static_cast<int>(f.cols()));
        Eigen::MatrixXf r = Eigen::MatrixXf::Zero(kNumMonitored, Te);
        const auto pred_std =
            y.m.block(0, static_cast<Eigen::Index>(b) * T, kNumMonitored, Te - 1);
        // Unstandardize the prediction and subtract from the observation.
        for (int c = 0; c < kNumMonitored; ++c) {
            const float mu = s.in_mean(c);
            const float sd = s.in_std(c);
            for (int t = 1; t < Te; ++t)
                r(c, t) = f(c, t) - (pred_std(c, t - 1) * sd + mu);
        }
        out[static_cast<std::size_t>(b)] = std::move(r);
    }
    return out;
}

Eigen::MatrixXf surrogate_residual_raw(Surrogate& s, const data::EpisodeRecord& episode,
                                       int until_step) {
    std::vector<const data::EpisodeRecord*> one = {&episode};
    return surrogate_residual_raw_batch(s, one, until_step)[0];
}

SurrogateEval evaluate_surrogate(Surrogate& s, const std::vector<data::EpisodeRecord>& episodes) {
    double abs_sum = 0.0, sq_sum = 0.0, n = 0.0;
    for (const auto& e : episodes) {
        Eigen::MatrixXf r = surrogate_residual_raw(s, e);
        const auto rd = r.rightCols(r.cols() - 1).cast<double>();
        abs_sum += rd.cwiseAbs().sum();
        sq_sum += rd.cwiseProduct(rd).sum();
        n += static_cast<double>(rd.size());
    }
    SurrogateEval out;
    out.mae = n > 0 ? abs_sum / n : 0.0;
    out.rmse = n > 0 ? std::sqrt(sq_sum / n) : 0.0;
    return out;
}

void save_surrogate(Surrogate& s, const std::filesystem::path& path) {
    nlohmann::json meta;
    meta["kind"] = "surrogate";
    meta["spec"] = {{"input", s.spec.input},
                    {"hidden", s.spec.hidden},
                    {"layers", s.spec.layers},
                    {"horizon", s.spec.horizon}};
    meta["in_mean"] = std::vector<float>(s.in_mean.data(), s.in_mean.data() + s.in_mean.size());
    meta["in_std"] = std::vector<float>(s.in_std.data(), s.in_std.data() + s.in_std.size());
    meta["sigma"] =
        std::vector<float>(s.calib.sigma.data(), s.calib.sigma.data() + s.calib.sigma.size());
    meta["smooth_window"] = s.calib.smooth_window;
    meta["baseline_seconds"] = s.calib.baseline_seconds;
    meta["val_mae"] = s.val_mae;
    meta["val_rmse"] = s.val_rmse;
    nn::save_checkpoint(s.model, path.string(), meta);
}

Surrogate load_surrogate(const std::filesystem::path& path) {
    auto loaded = nn::load_checkpoint<float>(path.string());
    if (loaded.meta.value("kind", "") != "surrogate")
        throw SchemaError("not a surrogate checkpoint: " + path.string());
    Surrogate s;
    s.spec.input = loaded.meta.at("spec").at("input").get<int>();
    s.spec.hidden = loaded.meta.at("spec").at("hidden").get<int>();
    s.spec.layers = loaded.meta.at("spec").at("layers").get<int>();
    s.spec.horizon = loaded.meta.at("spec").at("horizon").get<int>();
    s.model = std::move(loaded.model);
    const auto mean = loaded.meta.at("in_mean").get<std::vector<float>>();
    const auto std = loaded.meta.at("in_std").get<std::vector<float>>();
    const auto sigma = loaded.meta.at("sigma").get<std::vector<float>>();
    for (int c = 0; c < kNumChannels; ++c) {
        s.in_mean(c) = mean.at(static_cast<std::size_t>(c));
        s.in_std(c) = std.at(static_cast<std::size_t>(c));
    }
    for (int c = 0; c < kNumMonitored; ++c) s.calib.sigma(c) = sigma.at(static_cast<std::size_t>(c));
    s.calib.smooth_window = loaded.meta.at("smooth_window").get<int>();
    s.calib.baseline_seconds = loaded.meta.at("baseline_seconds").get<double>();
    s.val_mae = loaded.meta.value("val_mae", 0.0);
    s.val_rmse = loaded.meta.value("val_rmse", 0.0);
    return s;
}

}  // namespace twindiag::residual
