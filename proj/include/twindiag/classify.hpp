#pragma once

#include <json.hpp>

#include "twindiag/residual.hpp"

namespace twindiag::classify {

using residual::BuiltFeatures;
using residual::ChannelConfig;
using residual::FeatureMode;
using residual::FeatureSet;

struct EvalReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;
    double per_class_f1_std = 0.0;
    Eigen::MatrixXi confusion;  // rows = truth, cols = prediction

    nlohmann::json to_json() const;
};

// Metric definitions shared by every classifier: per-class F1 is 0 when a
// class has neither predictions nor true positives; macro metrics are
// unweighted means over all classes.
EvalReport evaluate_predictions(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                int n_classes);

nn::Sequential<float> make_cnn_classifier(int in_channels, int n_classes);
nn::Sequential<float> make_gru_classifier(int in_channels, int n_classes);

// Per-channel summary statistics (mean, std, min, max, slope) feeding the
// multinomial logistic baseline.
Eigen::VectorXf summary_features(const Eigen::MatrixXf& window);

struct TrainedClassifier {
    std::string kind;  // cnn1d | gru_classifier | logistic_summary
    int in_channels = 0;
    int n_classes = 0;
    nn::Sequential<float> model;
    // logistic_summary standardizes its summary features with train stats.
    Eigen::VectorXf feat_mean, feat_std;
    nn::FitResult fit;

    Eigen::MatrixXf predict_logits(const std::vector<const Eigen::MatrixXf*>& windows);
    std::vector<int> predict(const FeatureSet& set, int batch = 64);
    std::vector<std::pair<int, float>> predict_topk(const Eigen::MatrixXf& window, int k);
};

struct ClassifierTrainConfig {
    nn::TrainConfig train{5e-4, 1e-4, 32, 200, 0.5, 10, 1e-6, 40, 0};
    double val_fraction = 0.15;  // stratified carve from train for early stop
};

TrainedClassifier train_classifier(const std::string& kind, const FeatureSet& train_set,
                                   const ClassifierTrainConfig& cfg, int n_classes = 20);

EvalReport evaluate(TrainedClassifier& clf, const FeatureSet& test_set);

void save_classifier(TrainedClassifier& clf, const std::filesystem::path& path,
                     const nlohmann::json& extra_meta = nlohmann::json::object());
TrainedClassifier load_classifier(const std::filesystem::path& path);

struct SchemeResult {
    FeatureMode mode;
    ChannelConfig config;
    std::string classifier;
    EvalReport report;
    double train_seconds = 0.0;
};

struct GridResult {
    std::vector<SchemeResult> results;  // ranked by macro F1, descending
    double mode_range_at_cnn = 0.0;
    double classifier_range_at_mirror = 0.0;
    double contribution_ratio = 0.0;
    nlohmann::json to_json() const;
    std::string to_table() const;  // human-readable ranked table
    std::string to_tsv() const;
};

// Trains and evaluates every (mode, classifier) cell. Feature builds are
// supplied by the caller so they can be cached across invocations.
GridResult run_scheme_grid(const std::map<FeatureMode, const BuiltFeatures*>& features,
                           const std::vector<std::string>& classifiers,
                           const ClassifierTrainConfig& cfg);

struct BenchRow {
    std::string path;      // mirror | surrogate | diff | raw
    double sim_ms = 0.0;   // mirror path only
    double feature_ms = 0.0;
    double cnn_ms = 0.0;
    double total_ms = 0.0;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    double mirror_sim_share = 0.0;     // simulation fraction of the mirror total
    double mirror_over_surrogate = 0.0;
    std::string to_table() const;
    std::string to_tsv() const;
};

// Single-sample, single-threaded staged latency; median over reps. The mirror
// path re-simulates the paired mirror from the stored run configuration.
BenchResult bench_inference(const data::Dataset& dataset, const std::string& run_id,
                            std::map<FeatureMode, TrainedClassifier*> classifiers,
                            const std::map<FeatureMode, const BuiltFeatures*>& features,
                            residual::Surrogate* surrogate, int reps = 20);

}  // namespace twindiag::classify
