#include "twindiag/classify.hpp"

#include <algorithm>
#include <chrono>

#include "twindiag/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace twindiag::classify {

using nn::MatX;
using nn::Tensor;

nlohmann::json EvalReport::to_json() const {
    std::vector<std::vector<int>> cm;
    for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
        std::vector<int> row;
        for (Eigen::Index c = 0; c < confusion.cols(); ++c) row.push_back(confusion(r, c));
        cm.push_back(std::move(row));
    }
    return {{"accuracy", accuracy},       {"macro_precision", macro_precision},
            {"macro_recall", macro_recall}, {"macro_f1", macro_f1},
            {"per_class_f1", per_class_f1}, {"per_class_f1_std", per_class_f1_std},
            {"confusion", cm}};
}

EvalReport evaluate_predictions(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                int n_classes) {
    if (y_true.size() != y_pred.size() || y_true.empty())
        throw InputError("evaluate_predictions: label/prediction size mismatch");

    EvalReport r;
    r.confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
    int correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        r.confusion(y_true[i], y_pred[i]) += 1;
        if (y_true[i] == y_pred[i]) ++correct;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(y_true.size());

    double psum = 0.0, rsum = 0.0, fsum = 0.0;
    r.per_class_f1.resize(static_cast<std::size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c) {
        const double tp = r.confusion(c, c);
        const double fp = r.confusion.col(c).sum() - tp;
        const double fn = r.confusion.row(c).sum() - tp;
        const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f1 = 2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
        psum += prec;
        rsum += rec;
        fsum += f1;
        r.per_class_f1[static_cast<std::size_t>(c)] = f1;
    }
    r.macro_precision = psum / n_classes;
    r.macro_recall = rsum / n_classes;
    r.macro_f1 = fsum / n_classes;

    double mean = r.macro_f1, var = 0.0;
    for (double f : r.per_class_f1) var += (f - mean) * (f - mean);
    r.per_class_f1_std = std::sqrt(var / n_classes);
    return r;
}

nn::Sequential<float> make_cnn_classifier(int in_channels, int n_classes) {
    nn::Sequential<float> m;
    int ch = in_channels;
    for (int out : {64, 128, 256}) {
        m.add<nn::Conv1d<float>>(ch, out, 7, 3);
        m.add<nn::BatchNorm1d<float>>(out);
        m.add<nn::ReLU<float>>();
        m.add<nn::MaxPool1d<float>>(2, 2);
        ch = out;
    }
    m.add<nn::GlobalAvgPool<float>>();
    m.add<nn::Dense<float>>(256, 128);
    m.add<nn::ReLU<float>>();
    m.add<nn::Dropout<float>>(0.15);
    m.add<nn::Dense<float>>(128, n_classes);
    return m;
}

nn::Sequential<float> make_gru_classifier(int in_channels, int n_classes) {
    nn::Sequential<float> m;
    m.add<nn::Gru<float>>(in_channels, 128, 2, /*return_sequence=*/false);
    m.add<nn::Dense<float>>(128, n_classes);
    return m;
}

Eigen::VectorXf summary_features(const Eigen::MatrixXf& window) {
    const int c = static_cast<int>(window.rows());
    const int t = static_cast<int>(window.cols());
    Eigen::VectorXf out(5 * c);
    // Least-squares slope against the centered time index.
    const double tm = (t - 1) / 2.0;
    double sxx = 0.0;
    for (int i = 0; i < t; ++i) sxx += (i - tm) * (i - tm);
    for (int ch = 0; ch < c; ++ch) {
        const auto row = window.row(ch);
        const double mean = row.mean();
        const double var =
            std::max((row.array().template cast<double>() - mean).square().mean(), 0.0);
        double sxy = 0.0;
        for (int i = 0; i < t; ++i) sxy += (i - tm) * (row(i) - mean);
        out(5 * ch + 0) = static_cast<float>(mean);
        out(5 * ch + 1) = static_cast<float>(std::sqrt(var));
        out(5 * ch + 2) = row.minCoeff();
        out(5 * ch + 3) = row.maxCoeff();
        out(5 * ch + 4) = static_cast<float>(sxy / sxx);
    }
    return out;
}

namespace {

Tensor<float> make_batch(const std::vector<const Eigen::MatrixXf*>& windows) {
    const int rows = static_cast<int>(windows[0]->rows());
    const int time = static_cast<int>(windows[0]->cols());
    Tensor<float> x(rows, static_cast<int>(windows.size()), time);
    for (std::size_t b = 0; b < windows.size(); ++b) {
        if (windows[b]->rows() != rows || windows[b]->cols() != time)
            throw SchemaError("train_classifier: heterogeneous window shapes");
        x.sample(static_cast<int>(b)) = *windows[b];
    }
    return x;
}

MatX<float> logits_for(TrainedClassifier& clf, const std::vector<const Eigen::MatrixXf*>& windows,
                       bool train) {
    if (clf.kind == "logistic_summary") {
        MatX<float> feats(clf.feat_mean.size(), static_cast<Eigen::Index>(windows.size()));
        for (std::size_t b = 0; b < windows.size(); ++b)
            feats.col(static_cast<Eigen::Index>(b)) =
                (summary_features(*windows[b]) - clf.feat_mean).cwiseQuotient(clf.feat_std);
        Tensor<float> x;
        x.batch = static_cast<int>(windows.size());
        x.time = 1;
        x.m = std::move(feats);
        return clf.model.forward(x, train).m;
    }
    return clf.model.forward(make_batch(windows), train).m;
}

std::vector<int> predict_labels(TrainedClassifier& clf,
                                const std::vector<const Eigen::MatrixXf*>& windows, int batch) {
    std::vector<int> out;
    for (std::size_t i = 0; i < windows.size(); i += static_cast<std::size_t>(batch)) {
        const std::size_t hi = std::min(windows.size(), i + static_cast<std::size_t>(batch));
        std::vector<const Eigen::MatrixXf*> chunk(windows.begin() + static_cast<long>(i),
                                                  windows.begin() + static_cast<long>(hi));
        const auto logits = logits_for(clf, chunk, false);
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            Eigen::Index best;
            logits.col(c).maxCoeff(&best);
            out.push_back(static_cast<int>(best));
        }
    }
    return out;
}

}  // namespace

Eigen::MatrixXf TrainedClassifier::predict_logits(
    const std::vector<const Eigen::MatrixXf*>& windows) {
    return logits_for(*this, windows, false);
}

std::vector<int> TrainedClassifier::predict(const FeatureSet& set, int batch) {
    std::vector<const Eigen::MatrixXf*> ptrs;
    for (const auto& w : set.windows) ptrs.push_back(&w.features);
    return predict_labels(*this, ptrs, batch);
}

std::vector<std::pair<int, float>> TrainedClassifier::predict_topk(const Eigen::MatrixXf& window,
                                                                   int k) {
    if (k < 1 || k > n_classes)
        throw InputError("predict_topk: k must be in [1, " + std::to_string(n_classes) + "]");
    std::vector<const Eigen::MatrixXf*> one = {&window};
    const auto logits = predict_logits(one);
    const auto probs = nn::softmax_cols(logits);
    std::vector<std::pair<int, float>> ranked;
    for (int c = 0; c < n_classes; ++c) ranked.push_back({c, probs(c, 0)});
    std::sort(ranked.begin(), ranked.end(),
              [](const auto& a, const auto& b) { return a.second > b.second; });
    ranked.resize(static_cast<std::size_t>(k));
    return ranked;
}

TrainedClassifier train_classifier(const std::string& kind, const FeatureSet& train_set,
                                   const ClassifierTrainConfig& cfg, int n_classes) {
    if (train_set.windows.empty()) throw InputError("train_classifier: empty training set");
    const int rows = train_set.rows;
    if (rows != kNumMonitored && rows != 2 * kNumMonitored)
        throw InputError("train_classifier: unsupported channel count " + std::to_string(rows));

    std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
    for (const auto& w : train_set.windows) seen[static_cast<std::size_t>(w.label)] = true;
    int present = 0;
    for (bool b : seen) present += b;
    if (present < 2) throw InputError("train_classifier: need at least 2 classes present");

    TrainedClassifier clf;
    clf.kind = kind;
    clf.in_channels = rows;
    clf.n_classes = n_classes;

    // Stratified validation carve from the train split.
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < train_set.windows.size(); ++i)
        by_class[static_cast<std::size_t>(train_set.windows[i].label)].push_back(i);
    std::vector<std::size_t> train_idx, val_idx;
    Rng carve_rng(hash_combine(cfg.train.seed, 0xCA57ULL));
    for (auto& idxs : by_class) {
        if (idxs.empty()) continue;
        carve_rng.shuffle(idxs);
        const std::size_t n_val =
            std::max<std::size_t>(1, static_cast<std::size_t>(cfg.val_fraction * idxs.size()));
        for (std::size_t i = 0; i < idxs.size(); ++i)
            (i < n_val ? val_idx : train_idx).push_back(idxs[i]);
    }

    auto window_ptr = [&](std::size_t i) { return &train_set.windows[i].features; };
    auto label_of = [&](std::size_t i) { return train_set.windows[i].label; };

    if (kind == "logistic_summary") {
        // Standardized summary statistics into a single softmax layer.
        const Eigen::Index dim = 5 * rows;
        MatX<float> feats(dim, static_cast<Eigen::Index>(train_set.windows.size()));
        for (std::size_t i = 0; i < train_set.windows.size(); ++i)
            feats.col(static_cast<Eigen::Index>(i)) = summary_features(*window_ptr(i));
        Eigen::VectorXf mean = feats.rowwise().mean();
        Eigen::VectorXf std =
            ((feats.colwise() - mean).array().square().rowwise().mean().sqrt() + 1e-5f)
                .matrix();
        clf.feat_mean = mean;
        clf.feat_std = std;

        clf.model.add<nn::Dense<float>>(static_cast<int>(dim), n_classes);
        clf.model.init(hash_combine(cfg.train.seed, 0x106ULL));
        auto params = clf.model.named_params();
        nn::Adam<float> adam;

        nn::TrainConfig tc = cfg.train;
        tc.lr = 0.02;
        tc.max_epochs = 300;
        tc.early_stop_patience = 60;
        tc.plateau_patience = 20;

        auto train_epoch = [&](int, double lr) {
            // Full-batch step over the carved training indices.
            MatX<float> x(dim, static_cast<Eigen::Index>(train_idx.size()));
            std::vector<int> labels;
            for (std::size_t i = 0; i < train_idx.size(); ++i) {
                x.col(static_cast<Eigen::Index>(i)) =
                    (feats.col(static_cast<Eigen::Index>(train_idx[i])) - mean)
                        .cwiseQuotient(std);
                labels.push_back(label_of(train_idx[i]));
            }
            Tensor<float> xt;
            xt.batch = static_cast<int>(train_idx.size());
            xt.time = 1;
            xt.m = std::move(x);
            clf.model.zero_grad();
            auto y = clf.model.forward(xt, true);
            auto loss = nn::softmax_cross_entropy<float>(y.m, labels);
            Tensor<float> dy;
            dy.batch = y.batch;
            dy.time = 1;
            dy.m = std::move(loss.dlogits);
            clf.model.backward(dy);
            adam.step(params, lr, tc.weight_decay);
            return loss.loss;
        };
        auto val_metric = [&]() {
            std::vector<const Eigen::MatrixXf*> ws;
            std::vector<int> yt;
            for (auto i : val_idx) {
                ws.push_back(window_ptr(i));
                yt.push_back(label_of(i));
            }
            return evaluate_predictions(yt, predict_labels(clf, ws, 256), n_classes).macro_f1;
        };
        clf.fit = nn::fit<float>(clf.model, tc, /*maximize=*/true, train_epoch, val_metric);
        return clf;
    }

    if (kind == "cnn1d")
        clf.model = make_cnn_classifier(rows, n_classes);
    else if (kind == "gru_classifier")
        clf.model = make_gru_classifier(rows, n_classes);
    else
        throw InputError("unknown classifier kind: " + kind);

    clf.model.init(hash_combine(cfg.train.seed, 0x11fULL));
    auto params = clf.model.named_params();
    nn::Adam<float> adam;
    const int B = cfg.train.batch_size;

    auto train_epoch = [&](int epoch, double lr) {
        std::vector<std::size_t> order = train_idx;
        Rng rng(hash_combine(cfg.train.seed, 0xE0c + static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(B)) {
            const std::size_t hi = std::min(order.size(), i + static_cast<std::size_t>(B));
            std::vector<const Eigen::MatrixXf*> ws;
            std::vector<int> labels;
            for (std::size_t j = i; j < hi; ++j) {
                ws.push_back(window_ptr(order[j]));
                labels.push_back(label_of(order[j]));
            }
            clf.model.zero_grad();
            auto y = clf.model.forward(make_batch(ws), true);
            auto loss = nn::softmax_cross_entropy<float>(y.m, labels);
            Tensor<float> dy;
            dy.batch = y.batch;
            dy.time = 1;
            dy.m = std::move(loss.dlogits);
            clf.model.backward(dy);
            adam.step(params, lr, cfg.train.weight_decay);
            loss_sum += loss.loss;
            ++batches;
        }
        return batches ? loss_sum / batches : 0.0;
    };

    auto val_metric = [&]() {
        std::vector<const Eigen::MatrixXf*> ws;
        std::vector<int> yt;
        for (auto i : val_idx) {
            ws.push_back(window_ptr(i));
            yt.push_back(label_of(i));
        }
        return evaluate_predictions(yt, predict_labels(clf, ws, 64), n_classes).macro_f1;
    };

    clf.fit = nn::fit<float>(clf.model, cfg.train, /*maximize=*/true, train_epoch, val_metric);
    return clf;
}

EvalReport evaluate(TrainedClassifier& clf, const FeatureSet& test_set) {
    std::vector<int> y_true;
    for (const auto& w : test_set.windows) y_true.push_back(w.label);
    return evaluate_predictions(y_true, clf.predict(test_set), clf.n_classes);
}

void save_classifier(TrainedClassifier& clf, const std::filesystem::path& path,
                     const nlohmann::json& extra_meta) {
    nlohmann::json meta = extra_meta;
    meta["kind"] = "classifier";
    meta["classifier_kind"] = clf.kind;
    meta["in_channels"] = clf.in_channels;
    meta["n_classes"] = clf.n_classes;
    if (clf.feat_mean.size() > 0) {
        meta["feat_mean"] =
            std::vector<float>(clf.feat_mean.data(), clf.feat_mean.data() + clf.feat_mean.size());
        meta["feat_std"] =
            std::vector<float>(clf.feat_std.data(), clf.feat_std.data() + clf.feat_std.size());
    }
    nn::save_checkpoint(clf.model, path.string(), meta);
}

TrainedClassifier load_classifier(const std::filesystem::path& path) {
    auto loaded = nn::load_checkpoint<float>(path.string());
    if (loaded.meta.value("kind", "") != "classifier")
        throw SchemaError("not a classifier checkpoint: " + path.string());
    TrainedClassifier clf;
    clf.kind = loaded.meta.at("classifier_kind").get<std::string>();
    clf.in_channels = loaded.meta.at("in_channels").get<int>();
    clf.n_classes = loaded.meta.at("n_classes").get<int>();
    clf.model = std::move(loaded.model);
    if (loaded.meta.contains("feat_mean")) {
        const auto fm = loaded.meta.at("feat_mean").get<std::vector<float>>();
        const auto fs = loaded.meta.at("feat_std").get<std::vector<float>>();
        clf.feat_mean = Eigen::Map<const Eigen::VectorXf>(fm.data(),
                                                          static_cast<Eigen::Index>(fm.size()));
        clf.feat_std =
            Eigen::Map<const Eigen::VectorXf>(fs.data(), static_cast<Eigen::Index>(fs.size()));
    }
    return clf;
}

nlohmann::json GridResult::to_json() const {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& r : results)
        cells.push_back({{"mode", residual::to_string(r.mode)},
                         {"config", residual::to_string(r.config)},
                         {"classifier", r.classifier},
                         {"macro_f1", r.report.macro_f1},
                         {"accuracy", r.report.accuracy},
                         {"per_class_f1_std", r.report.per_class_f1_std},
                         {"train_seconds", r.train_seconds},
                         {"report", r.report.to_json()}});
    return {{"results", cells},
            {"mode_range_at_cnn", mode_range_at_cnn},
            {"classifier_range_at_mirror", classifier_range_at_mirror},
            {"contribution_ratio", contribution_ratio}};
}

std::string GridResult::to_table() const {
    char buf[160];
    std::string out =
        "rank  scheme                                   accuracy  macro_f1  f1_std  train_s\n";
    int rank = 1;
    for (const auto& r : results) {
        const std::string scheme = residual::to_string(r.mode) + " + " + r.classifier;
        std::snprintf(buf, sizeof buf, "%-5d %-40s %8.3f  %8.3f  %6.3f  %7.1f\n", rank++,
                      scheme.c_str(), r.report.accuracy, r.report.macro_f1,
                      r.report.per_class_f1_std, r.train_seconds);
        out += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "\nfeature-mode range at cnn1d: %.3f\nclassifier range at mirror: %.3f\n"
                  "contribution ratio: %.2f\n",
                  mode_range_at_cnn, classifier_range_at_mirror, contribution_ratio);
    out += buf;
    return out;
}

std::string GridResult::to_tsv() const {
    std::string out = "mode\tconfig\tclassifier\taccuracy\tmacro_f1\tper_class_f1_std\ttrain_s\n";
    char buf[160];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, "%s\t%s\t%s\t%.4f\t%.4f\t%.4f\t%.1f\n",
                      residual::to_string(r.mode).c_str(), residual::to_string(r.config).c_str(),
                      r.classifier.c_str(), r.report.accuracy, r.report.macro_f1,
                      r.report.per_class_f1_std, r.train_seconds);
        out += buf;
    }
    return out;
}

GridResult run_scheme_grid(const std::map<FeatureMode, const BuiltFeatures*>& features,
                           const std::vector<std::string>& classifiers,
                           const ClassifierTrainConfig& cfg) {
    GridResult grid;
    for (const auto& [mode, built] : features) {
        for (const auto& kind : classifiers) {
            SchemeResult cell;
            cell.mode = mode;
            cell.config = built->train.config;
            cell.classifier = kind;
            const auto start = std::chrono::steady_clock::now();
            try {
                auto clf = train_classifier(kind, built->train, cfg);
                cell.report = evaluate(clf, built->test);
            } catch (const std::exception& e) {
                cell.report.macro_f1 = -1.0;  // failure marker; grid continues
                cell.classifier += std::string(" [failed: ") + e.what() + "]";
            }
            cell.train_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            grid.results.push_back(std::move(cell));
        }
    }

    double cnn_min = 1.0, cnn_max = 0.0, mirror_min = 1.0, mirror_max = 0.0;
    for (const auto& r : grid.results) {
        if (r.report.macro_f1 < 0) continue;
        if (r.classifier == "cnn1d") {
            cnn_min = std::min(cnn_min, r.report.macro_f1);
            cnn_max = std::max(cnn_max, r.report.macro_f1);
        }
        if (r.mode == FeatureMode::mirror) {
            mirror_min = std::min(mirror_min, r.report.macro_f1);
            mirror_max = std::max(mirror_max, r.report.macro_f1);
        }
    }
    grid.mode_range_at_cnn = cnn_max - cnn_min;
    grid.classifier_range_at_mirror = mirror_max - mirror_min;
    grid.contribution_ratio = grid.classifier_range_at_mirror > 0
                                  ? grid.mode_range_at_cnn / grid.classifier_range_at_mirror
                                  : 0.0;

    std::sort(grid.results.begin(), grid.results.end(), [](const auto& a, const auto& b) {
        return a.report.macro_f1 > b.report.macro_f1;
    });
    return grid;
}

std::string BenchResult::to_table() const {
    char buf[160];
    std::string out = "path       sim_ms    feature_ms  cnn_ms   total_ms\n";
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-10s %-9.1f %-11.1f %-8.2f %-9.1f\n", r.path.c_str(),
                      r.sim_ms, r.feature_ms, r.cnn_ms, r.total_ms);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "\nmirror simulation share: %.1f%%\nmirror/surrogate: %.2fx\n",
                  100.0 * mirror_sim_share, mirror_over_surrogate);
    out += buf;
    return out;
}

std::string BenchResult::to_tsv() const {
    std::string out = "path\tsim_ms\tfeature_ms\tcnn_ms\ttotal_ms\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s\t%.2f\t%.2f\t%.2f\t%.2f\n", r.path.c_str(), r.sim_ms,
                      r.feature_ms, r.cnn_ms, r.total_ms);
        out += buf;
    }
    return out;
}

namespace {

double median_ms(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double time_ms(F&& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

}  // namespace

BenchResult bench_inference(const data::Dataset& dataset, const std::string& run_id,
                            std::map<FeatureMode, TrainedClassifier*> classifiers,
                            const std::map<FeatureMode, const BuiltFeatures*>& features,
                            residual::Surrogate* surrogate, int reps) {
#ifdef _OPENMP
    const int prev_threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    const int prev_eigen = Eigen::nbThreads();
    Eigen::setNbThreads(1);

    const auto& meta = dataset.run(run_id);
    const auto episode = dataset.load(run_id);
    const int i0 = episode.t0_index(dataset.dt());
    const residual::NormalizationCalib floor_calib;

    sim::SimConfig mirror_cfg;
    mirror_cfg.seed = meta.seed;
    mirror_cfg.episode_duration = dataset.manifest().config.episode_duration;
    mirror_cfg.target_altitude = meta.target_altitude;
    mirror_cfg.target_speed = meta.target_speed;
    mirror_cfg.target_heading = meta.target_heading;

    BenchResult out;
    for (auto mode : {FeatureMode::mirror, FeatureMode::surrogate, FeatureMode::diff,
                      FeatureMode::raw}) {
        BenchRow row;
        row.path = residual::to_string(mode);
        auto* clf = classifiers.at(mode);
        const auto* built = features.at(mode);

        std::vector<double> sim_t, feat_t, cnn_t;
        for (int rep = 0; rep < reps; ++rep) {
            Eigen::MatrixXf window;
            data::EpisodeRecord mirror;
            switch (mode) {
                case FeatureMode::mirror: {
                    sim_t.push_back(time_ms([&] {
                        mirror = data::run_episode(mirror_cfg, meta.fault_class, meta.t0,
                                                   meta.run_id + "m", false);
                    }));
                    feat_t.push_back(time_ms([&] {
                        Eigen::MatrixXf r = residual::mirror_residual(episode, mirror);
                        window.resize(2 * kNumMonitored, residual::kWindowSteps);
                        auto res = r.middleCols(i0, residual::kWindowSteps).eval();
                        for (int c = 0; c < kNumMonitored; ++c)
                            res.row(c) /= floor_calib.divisor(c);
                        window.topRows(kNumMonitored) = res;
                        window.bottomRows(kNumMonitored) =
                            ((episode.frames.block(0, i0, kNumMonitored, residual::kWindowSteps)
                                  .colwise() -
                              built->raw_stats.mean)
                                 .array()
                                 .colwise() /
                             built->raw_stats.std.array())
                                .matrix();
                    }));
                    break;
                }
                case FeatureMode::surrogate: {
                    feat_t.push_back(time_ms([&] {
                        Eigen::MatrixXf raw = residual::surrogate_residual_raw(
                            *surrogate, episode, i0 + residual::kWindowSteps);
                        Eigen::MatrixXf z = residual::normalize_residual(
                            raw, surrogate->calib, i0, dataset.dt());
                        window.resize(2 * kNumMonitored, residual::kWindowSteps);
                        window.topRows(kNumMonitored) = z.middleCols(i0, residual::kWindowSteps);
                        window.bottomRows(kNumMonitored) =
                            ((episode.frames.block(0, i0, kNumMonitored, residual::kWindowSteps)
                                  .colwise() -
                              built->raw_stats.mean)
                                 .array()
                                 .colwise() /
                             built->raw_stats.std.array())
                                .matrix();
                    }));
                    break;
                }
                case FeatureMode::diff: {
                    feat_t.push_back(time_ms([&] {
                        Eigen::MatrixXf d = residual::simple_diff(episode);
                        window = ((d.middleCols(i0, residual::kWindowSteps).colwise() -
                                   built->diff_stats.mean)
                                      .array()
                                      .colwise() /
                                  built->diff_stats.std.array())
                                     .matrix();
                    }));
                    break;
                }
                case FeatureMode::raw: {
                    feat_t.push_back(time_ms([&] {
                        window =
                            ((episode.frames.block(0, i0, kNumMonitored, residual::kWindowSteps)
                                  .colwise() -
                              built->raw_stats.mean)
                                 .array()
                                 .colwise() /
                             built->raw_stats.std.array())
                                .matrix();
                    }));
                    break;
                }
            }
            cnn_t.push_back(time_ms([&] {
                std::vector<const Eigen::MatrixXf*> one = {&window};
                clf->predict_logits(one);
            }));
        }
        row.sim_ms = sim_t.empty() ? 0.0 : median_ms(sim_t);
        row.feature_ms = median_ms(feat_t);
        row.cnn_ms = median_ms(cnn_t);
        row.total_ms = row.sim_ms + row.feature_ms + row.cnn_ms;
        out.rows.push_back(row);
    }

    const auto& mirror_row = out.rows[0];
    const auto& surrogate_row = out.rows[1];
    out.mirror_sim_share = mirror_row.total_ms > 0 ? mirror_row.sim_ms / mirror_row.total_ms : 0;
    out.mirror_over_surrogate =
        surrogate_row.total_ms > 0 ? mirror_row.total_ms / surrogate_row.total_ms : 0;

#ifdef _OPENMP
    omp_set_num_threads(prev_threads);
#endif
    Eigen::setNbThreads(prev_eigen);
    return out;
}

}  // namespace twindiag::classify
