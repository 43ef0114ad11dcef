#pragma once

#include <functional>
#include <limits>

#include "twindiag/nn/model.hpp"

namespace twindiag::nn {

struct TrainConfig {
    double lr = 5e-4;
    double weight_decay = 1e-4;
    int batch_size = 32;
    int max_epochs = 200;
    double plateau_factor = 0.5;
    int plateau_patience = 10;
    double min_lr = 1e-6;
    int early_stop_patience = 40;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_metric = 0.0;
    double lr = 0.0;
};

struct FitResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_metric = 0.0;
};

// AdamW: bias-corrected moments plus decoupled weight decay.
template <typename S>
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    template <typename Params>
    void step(Params& params, double lr, double weight_decay) {
        if (m_.empty()) {
            for (auto& np : params) {
                m_.push_back(MatX<S>::Zero(np.ref.value->rows(), np.ref.value->cols()));
                v_.push_back(MatX<S>::Zero(np.ref.value->rows(), np.ref.value->cols()));
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].ref;
            if (!p.trainable || !p.grad) continue;
            m_[i] = S(beta1_) * m_[i] + S(1.0 - beta1_) * *p.grad;
            v_[i] = (S(beta2_) * v_[i]).eval() +
                    S(1.0 - beta2_) * p.grad->cwiseProduct(*p.grad);
            const MatX<S> mhat = m_[i] / S(bc1);
            const MatX<S> vhat = v_[i] / S(bc2);
            if (weight_decay > 0.0) *p.value *= S(1.0 - lr * weight_decay);
            p.value->array() -= S(lr) * mhat.array() / (vhat.array().sqrt() + S(eps_));
        }
    }

    long steps() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<MatX<S>> m_, v_;
};

inline MatX<float> softmax_cols(const MatX<float>& logits) {
    MatX<float> p = logits;
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
        auto col = p.col(c);
        col.array() -= col.maxCoeff();
        col = col.array().exp();
        col /= col.sum();
    }
    return p;
}

template <typename S>
struct CeLossResult {
    double loss = 0.0;
    MatX<S> dlogits;
    MatX<S> probs;
};

// Softmax cross-entropy over columns; labels index rows.
template <typename S>
CeLossResult<S> softmax_cross_entropy(const MatX<S>& logits, const std::vector<int>& labels) {
    CeLossResult<S> r;
    const auto n = static_cast<Eigen::Index>(labels.size());
    r.probs = logits;
    r.dlogits.resize(logits.rows(), logits.cols());
    double loss = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) {
        auto col = r.probs.col(c);
        col.array() -= col.maxCoeff();
        col = col.array().exp();
        col /= col.sum();
        const double p = std::max(static_cast<double>(col(labels[static_cast<std::size_t>(c)])),
                                  1e-12);
        loss -= std::log(p);
        r.dlogits.col(c) = col;
        r.dlogits(labels[static_cast<std::size_t>(c)], c) -= S(1);
    }
    r.dlogits /= static_cast<S>(n);
    r.loss = loss / static_cast<double>(n);
    return r;
}

template <typename S>
struct MseLossResult {
    double loss = 0.0;
    MatX<S> dpred;
};

// Mean squared error over masked entries (mask entries are 0 or 1).
template <typename S>
MseLossResult<S> mse_loss(const MatX<S>& pred, const MatX<S>& target, const MatX<S>* mask = nullptr) {
    MseLossResult<S> r;
    MatX<S> diff = pred - target;
    double denom;
    if (mask) {
        diff = diff.cwiseProduct(*mask);
        denom = std::max(static_cast<double>(mask->sum()), 1.0);
    } else {
        denom = static_cast<double>(diff.size());
    }
    r.loss = static_cast<double>(diff.squaredNorm()) / denom;
    r.dpred = diff * S(2.0 / denom);
    return r;
}

// Plateau scheduler + best-metric early stopping + best-weights snapshot.
// Callbacks: train_epoch(epoch, lr) -> mean train loss (must run optimizer
// steps itself), val_metric() -> scalar to maximize or minimize.
template <typename S>
FitResult fit(Sequential<S>& model, const TrainConfig& cfg, bool maximize,
              const std::function<double(int, double)>& train_epoch,
              const std::function<double()>& val_metric) {
    FitResult result;
    double lr = cfg.lr;
    double best = maximize ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
    std::vector<MatX<S>> best_params;
    int since_best = 0;
    int since_plateau = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double loss = train_epoch(epoch, lr);
        const double metric = val_metric();
        result.history.push_back({epoch, loss, metric, lr});

        const bool improved = maximize ? metric > best : metric < best;
        if (improved) {
            best = metric;
            result.best_epoch = epoch;
            best_params = model.snapshot_params();
            since_best = 0;
            since_plateau = 0;
        } else {
            ++since_best;
            ++since_plateau;
        }
        if (since_plateau > cfg.plateau_patience) {
            lr = std::max(lr * cfg.plateau_factor, cfg.min_lr);
            since_plateau = 0;
        }
        if (since_best >= cfg.early_stop_patience) break;
    }

    if (!best_params.empty()) model.restore_params(best_params);
    result.best_metric = best;
    return result;
}

}  // namespace twindiag::nn
