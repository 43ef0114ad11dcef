#pragma once

#include <cmath>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "twindiag/nn/tensor.hpp"
#include "twindiag/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace twindiag::nn {

template <typename S>
struct ParamRef {
    std::string name;
    MatX<S>* value = nullptr;
    MatX<S>* grad = nullptr;
    bool trainable = true;  // batch-norm running stats are saved but not stepped
};

template <typename S>
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string kind() const = 0;
    virtual nlohmann::json hyper() const = 0;
    virtual void init(Rng& rng) = 0;
    // train=true caches activations for backward; dropout_key seeds stochastic
    // layers deterministically.
    virtual Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t dropout_key) = 0;
    virtual Tensor<S> backward(const Tensor<S>& dy) = 0;
    virtual std::vector<ParamRef<S>> params() = 0;
};

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------
// Dense: y = W x + b applied per column; with time > 1 this acts pointwise
// over time (used as the per-step prediction head of the GRU surrogate).
template <typename S>
class Dense : public Layer<S> {
public:
    Dense(int in, int out) : in_(in), out_(out) {
        w_.resize(out, in);
        b_.resize(out, 1);
        dw_.resize(out, in);
        db_.resize(out, 1);
    }

    std::string kind() const override { return "dense"; }
    nlohmann::json hyper() const override { return {{"in", in_}, {"out", out_}}; }

    void init(Rng& rng) override {
        const double std = std::sqrt(2.0 / in_);
        for (Eigen::Index i = 0; i < w_.size(); ++i)
            w_.data()[i] = static_cast<S>(rng.normal() * std);
        b_.setZero();
    }

    Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t) override {
        x.require(in_, "dense");
        if (train) x_ = x.m;
        Tensor<S> y;
        y.batch = x.batch;
        y.time = x.time;
        y.m.noalias() = w_ * x.m;
        y.m.colwise() += b_.col(0);
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        dw_.noalias() = dy.m * x_.transpose();
        db_ = dy.m.rowwise().sum();
        Tensor<S> dx;
        dx.batch = dy.batch;
        dx.time = dy.time;
        dx.m.noalias() = w_.transpose() * dy.m;
        return dx;
    }

    std::vector<ParamRef<S>> params() override {
        return {{"weight", &w_, &dw_}, {"bias", &b_, &db_}};
    }

private:
    int in_, out_;
    MatX<S> w_, b_, dw_, db_, x_;
};

// ---------------------------------------------------------------------------
// Conv1d, stride 1, zero padding; im2col + GEMM per sample, parallel over the
// batch with per-thread weight-gradient accumulators reduced in thread order.
template <typename S>
class Conv1d : public Layer<S> {
public:
    Conv1d(int in_ch, int out_ch, int kernel, int padding)
        : in_(in_ch), out_(out_ch), k_(kernel), pad_(padding) {
        w_.resize(out_, in_ * k_);
        b_.resize(out_, 1);
        dw_.resize(out_, in_ * k_);
        db_.resize(out_, 1);
    }

    std::string kind() const override { return "conv1d"; }
    nlohmann::json hyper() const override {
        return {{"in", in_}, {"out", out_}, {"kernel", k_}, {"padding", pad_}};
    }

    void init(Rng& rng) override {
        const double std = std::sqrt(2.0 / (in_ * k_));
        for (Eigen::Index i = 0; i < w_.size(); ++i)
            w_.data()[i] = static_cast<S>(rng.normal() * std);
        b_.setZero();
    }

    int out_time(int in_time) const { return in_time + 2 * pad_ - k_ + 1; }

    Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t) override {
        x.require(in_, "conv1d");
        if (train) {
            x_ = x.m;
            in_time_ = x.time;
        }
        const int t_out = out_time(x.time);
        Tensor<S> y(out_, x.batch, t_out);
#pragma omp parallel for schedule(static)
        for (int b = 0; b < x.batch; ++b) {
            MatX<S> cols = im2col(x.sample(b), x.time);
            auto yb = y.m.middleCols(static_cast<Eigen::Index>(b) * t_out, t_out);
            yb.noalias() = w_ * cols;
            yb.colwise() += b_.col(0);
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        const int t_out = dy.time;
        Tensor<S> dx;
        dx.batch = dy.batch;
        dx.time = in_time_;
        dx.m = MatX<S>::Zero(in_, x_.cols());

        const int max_threads =
#ifdef _OPENMP
            omp_get_max_threads();
#else
            1;
#endif
        std::vector<MatX<S>> dw_acc(static_cast<std::size_t>(max_threads),
                                    MatX<S>::Zero(out_, in_ * k_));
        std::vector<MatX<S>> db_acc(static_cast<std::size_t>(max_threads),
                                    MatX<S>::Zero(out_, 1));

#pragma omp parallel for schedule(static)
        for (int b = 0; b < dy.batch; ++b) {
            const int tid =
#ifdef _OPENMP
                omp_get_thread_num();
#else
                0;
#endif
            const auto dyb = dy.m.middleCols(static_cast<Eigen::Index>(b) * t_out, t_out);
            MatX<S> cols = im2col(x_.middleCols(static_cast<Eigen::Index>(b) * in_time_, in_time_),
                                  in_time_);
            dw_acc[static_cast<std::size_t>(tid)].noalias() += dyb * cols.transpose();
            db_acc[static_cast<std::size_t>(tid)] += dyb.rowwise().sum();
            MatX<S> dcols = w_.transpose() * dyb;
            col2im(dcols, dx.m.middleCols(static_cast<Eigen::Index>(b) * in_time_, in_time_));
        }
        dw_.setZero();
        db_.setZero();
        for (int tid = 0; tid < max_threads; ++tid) {
            dw_ += dw_acc[static_cast<std::size_t>(tid)];
            db_ += db_acc[static_cast<std::size_t>(tid)];
        }
        return dx;
    }

    std::vector<ParamRef<S>> params() override {
        return {{"weight", &w_, &dw_}, {"bias", &b_, &db_}};
    }

private:
    MatX<S> im2col(const Eigen::Ref<const MatX<S>>& xs, int t_in) const {
        const int t_out = out_time(t_in);
        MatX<S> cols = MatX<S>::Zero(in_ * k_, t_out);
        for (int kk = 0; kk < k_; ++kk) {
            for (int t = 0; t < t_out; ++t) {
                const int src = t - pad_ + kk;
                if (src >= 0 && src < t_in)
                    cols.block(kk * in_, t, in_, 1) = xs.col(src);
            }
        }
        return cols;
    }

    void col2im(const MatX<S>& dcols, Eigen::Ref<MatX<S>> dxs) const {
        const int t_in = static_cast<int>(dxs.cols());
        const int t_out = static_cast<int>(dcols.cols());
        for (int kk = 0; kk < k_; ++kk) {
            for (int t = 0; t < t_out; ++t) {
                const int src = t - pad_ + kk;
                if (src >= 0 && src < t_in)
                    dxs.col(src) += dcols.block(kk * in_, t, in_, 1);
            }
        }
    }

    int in_, out_, k_, pad_;
    int in_time_ = 0;
    MatX<S> w_, b_, dw_, db_, x_;
};

// ---------------------------------------------------------------------------
// BatchNorm over channels; statistics span batch and time, as in BatchNorm1d
// on (N, C, L). Biased variance in both normalization and running updates.
template <typename S>
class BatchNorm1d : public Layer<S> {
public:
    explicit BatchNorm1d(int channels, double momentum = 0.1, double eps = 1e-5)
        : c_(channels), momentum_(momentum), eps_(eps) {
        gamma_ = MatX<S>::Ones(c_, 1);
        beta_ = MatX<S>::Zero(c_, 1);
        dgamma_ = MatX<S>::Zero(c_, 1);
        dbeta_ = MatX<S>::Zero(c_, 1);
        running_mean_ = MatX<S>::Zero(c_, 1);
        running_var_ = MatX<S>::Ones(c_, 1);
    }

    std::string kind() const override { return "batchnorm1d"; }
    nlohmann::json hyper() const override {
        return {{"channels", c_}, {"momentum", momentum_}, {"eps", eps_}};
    }
    void init(Rng&) override {}

    Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t) override {
        x.require(c_, "batchnorm1d");
        Tensor<S> y;
        y.batch = x.batch;
        y.time = x.time;
        const auto n = static_cast<S>(x.m.cols());
        if (train) {
            VecX<S> mean = x.m.rowwise().mean();
            VecX<S> var =
                (x.m.colwise() - mean).array().square().matrix().rowwise().sum() / n;
            var = var.cwiseMax(S(0));
            running_mean_.col(0) =
                (S(1) - S(momentum_)) * running_mean_.col(0) + S(momentum_) * mean;
            running_var_.col(0) =
                (S(1) - S(momentum_)) * running_var_.col(0) + S(momentum_) * var;
            inv_std_ = (var.array() + S(eps_)).rsqrt().matrix();
            xhat_ = (x.m.colwise() - mean).array().colwise() * inv_std_.col(0).array();
            y.m = (xhat_.array().colwise() * gamma_.col(0).array()).matrix();
            y.m.colwise() += beta_.col(0);
        } else {
            VecX<S> inv = (running_var_.col(0).array() + S(eps_)).rsqrt().matrix();
            y.m = ((x.m.colwise() - running_mean_.col(0)).array().colwise() *
                   (inv.array() * gamma_.col(0).array()))
                      .matrix();
            y.m.colwise() += beta_.col(0);
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        const auto n = static_cast<S>(dy.m.cols());
        dgamma_.col(0) = (dy.m.array() * xhat_.array()).rowwise().sum();
        dbeta_.col(0) = dy.m.rowwise().sum();

        // dxhat = dy * gamma; dx via the standard batch-norm backward.
        MatX<S> dxhat = dy.m.array().colwise() * gamma_.col(0).array();
        VecX<S> sum_dxhat = dxhat.rowwise().sum();
        VecX<S> sum_dxhat_xhat = (dxhat.array() * xhat_.array()).rowwise().sum();

        Tensor<S> dx;
        dx.batch = dy.batch;
        dx.time = dy.time;
        dx.m = ((dxhat * n).colwise() - sum_dxhat).array().colwise() * inv_std_.col(0).array();
        dx.m -= (xhat_.array().colwise() *
                 (sum_dxhat_xhat.array() * inv_std_.col(0).array()))
                    .matrix();
        dx.m /= n;
        return dx;
    }

    std::vector<ParamRef<S>> params() override {
        return {{"gamma", &gamma_, &dgamma_},
                {"beta", &beta_, &dbeta_},
                {"running_mean", &running_mean_, nullptr, false},
                {"running_var", &running_var_, nullptr, false}};
    }

    const MatX<S>& running_mean() const { return running_mean_; }
    const MatX<S>& running_var() const { return running_var_; }

private:
    int c_;
    double momentum_, eps_;
    MatX<S> gamma_, beta_, dgamma_, dbeta_, running_mean_, running_var_;
    MatX<S> xhat_;
    VecX<S> inv_std_;
};

// ---------------------------------------------------------------------------
template <typename S>
class ReLU : public Layer<S> {
public:
    std::string kind() const override { return "relu"; }
    nlohmann::json hyper() const override { return nlohmann::json::object(); }
    void init(Rng&) override {}

    Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t) override {
        Tensor<S> y;
        y.batch = x.batch;
        y.time = x.time;
        y.m = x.m.cwiseMax(S(0));
        if (train) mask_ = (x.m.array() > S(0)).template cast<S>();
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx;
        dx.batch = dy.batch;
        dx.time = dy.time;
        dx.m = dy.m.cwiseProduct(mask_);
        return dx;
    }

    std::vector<ParamRef<S>> params() override { return {}; }

private:
    MatX<S> mask_;
};

// ---------------------------------------------------------------------------
template <typename S>
class MaxPool1d : public Layer<S> {
public:
    explicit MaxPool1d(int kernel = 2, int stride = 2) : k_(kernel), stride_(stride) {}

    std::string kind() const override { return "maxpool1d"; }
    nlohmann::json hyper() const override { return {{"kernel", k_}, {"stride", stride_}}; }
    void init(Rng&) override {}

    Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t) override {
        const int t_out = (x.time - k_) / stride_ + 1;
        const int c = x.features();
        Tensor<S> y(c, x.batch, t_out);
        if (train) {
            argmax_.resize(static_cast<std::size_t>(c) * x.batch * t_out);
            in_time_ = x.time;
        }
        for (int b = 0; b < x.batch; ++b) {
            const auto xs = x.sample(b);
            auto ys = y.m.middleCols(static_cast<Eigen::Index>(b) * t_out, t_out);
            for (int t = 0; t < t_out; ++t) {
                for (int ch = 0; ch < c; ++ch) {
                    int best = t * stride_;
                    S v = xs(ch, best);
                    for (int kk = 1; kk < k_; ++kk) {
                        const int idx = t * stride_ + kk;
                        if (idx < x.time && xs(ch, idx) > v) {
                            v = xs(ch, idx);
                            best = idx;
                        }
                    }
                    ys(ch, t) = v;
                    if (train)
                        argmax_[(static_cast<std::size_t>(b) * t_out + t) * c + ch] = best;
                }
            }
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        const int c = dy.features();
        Tensor<S> dx(c, dy.batch, in_time_);
        for (int b = 0; b < dy.batch; ++b) {
            auto dxs = dx.m.middleCols(static_cast<Eigen::Index>(b) * in_time_, in_time_);
            const auto dys = dy.m.middleCols(static_cast<Eigen::Index>(b) * dy.time, dy.time);
            for (int t = 0; t < dy.time; ++t)
                for (int ch = 0; ch < c; ++ch)
                    dxs(ch, argmax_[(static_cast<std::size_t>(b) * dy.time + t) * c + ch]) +=
                        dys(ch, t);
        }
        return dx;
    }

    std::vector<ParamRef<S>> params() override { return {}; }

private:
    int k_, stride_;
    int in_time_ = 0;
    std::vector<int> argmax_;
};

// ---------------------------------------------------------------------------
// Mean over the time axis; emits time=1.
template <typename S>
class GlobalAvgPool : public Layer<S> {
public:
    std::string kind() const override { return "globalavgpool"; }
    nlohmann::json hyper() const override { return nlohmann::json::object(); }
    void init(Rng&) override {}

    Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t) override {
        if (train) in_time_ = x.time;
        Tensor<S> y(x.features(), x.batch, 1);
        for (int b = 0; b < x.batch; ++b) y.m.col(b) = x.sample(b).rowwise().mean();
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx(dy.features(), dy.batch, in_time_);
        const S inv = S(1) / static_cast<S>(in_time_);
        for (int b = 0; b < dy.batch; ++b)
            dx.sample(b).colwise() = (dy.m.col(b) * inv).eval();
        return dx;
    }

    std::vector<ParamRef<S>> params() override { return {}; }

private:
    int in_time_ = 0;
};

// ---------------------------------------------------------------------------
template <typename S>
class Dropout : public Layer<S> {
public:
    explicit Dropout(double rate) : rate_(rate) {}

    std::string kind() const override { return "dropout"; }
    nlohmann::json hyper() const override { return {{"rate", rate_}}; }
    void init(Rng&) override {}

    Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t dropout_key) override {
        if (!train || rate_ <= 0.0) return x;
        Tensor<S> y;
        y.batch = x.batch;
        y.time = x.time;
        mask_.resize(x.m.rows(), x.m.cols());
        const S scale = S(1.0 / (1.0 - rate_));
        for (Eigen::Index i = 0; i < mask_.size(); ++i)
            mask_.data()[i] =
                counter_uniform(dropout_key, 0xD0ULL, static_cast<std::uint64_t>(i)) >= rate_
                    ? scale
                    : S(0);
        y.m = x.m.cwiseProduct(mask_);
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        Tensor<S> dx;
        dx.batch = dy.batch;
        dx.time = dy.time;
        dx.m = dy.m.cwiseProduct(mask_);
        return dx;
    }

    std::vector<ParamRef<S>> params() override { return {}; }

private:
    double rate_;
    MatX<S> mask_;
};

// ---------------------------------------------------------------------------
// Multi-layer GRU, gates ordered (r, z, n). Input contributions for the whole
// sequence are computed in one GEMM; the recurrent term runs step-by-step.
// return_sequence=false emits only the final hidden state (time=1).
template <typename S>
class Gru : public Layer<S> {
public:
    Gru(int input, int hidden, int layers, bool return_sequence)
        : in_(input), h_(hidden), layers_(layers), return_sequence_(return_sequence) {
        wx_.resize(static_cast<std::size_t>(layers_));
        wh_.resize(static_cast<std::size_t>(layers_));
        bx_.resize(static_cast<std::size_t>(layers_));
        bh_.resize(static_cast<std::size_t>(layers_));
        dwx_.resize(static_cast<std::size_t>(layers_));
        dwh_.resize(static_cast<std::size_t>(layers_));
        dbx_.resize(static_cast<std::size_t>(layers_));
        dbh_.resize(static_cast<std::size_t>(layers_));
        for (int l = 0; l < layers_; ++l) {
            const int il = l == 0 ? in_ : h_;
            wx_[l].resize(3 * h_, il);
            wh_[l].resize(3 * h_, h_);
            bx_[l].resize(3 * h_, 1);
            bh_[l].resize(3 * h_, 1);
            dwx_[l].resize(3 * h_, il);
            dwh_[l].resize(3 * h_, h_);
            dbx_[l].resize(3 * h_, 1);
            dbh_[l].resize(3 * h_, 1);
        }
    }

    std::string kind() const override { return "gru"; }
    nlohmann::json hyper() const override {
        return {{"input", in_},
                {"hidden", h_},
                {"layers", layers_},
                {"return_sequence", return_sequence_}};
    }

    void init(Rng& rng) override {
        const double bound = 1.0 / std::sqrt(static_cast<double>(h_));
        auto fill = [&](MatX<S>& m) {
            for (Eigen::Index i = 0; i < m.size(); ++i)
                m.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
        };
        for (int l = 0; l < layers_; ++l) {
            fill(wx_[l]);
            fill(wh_[l]);
            fill(bx_[l]);
            fill(bh_[l]);
        }
    }

    Tensor<S> forward(const Tensor<S>& x, bool train, std::uint64_t) override {
        x.require(in_, "gru");
        const int T = x.time;
        const int B = x.batch;
        train_ = train;
        t_ = T;
        b_ = B;

        MatX<S> layer_in = to_time_major(x);  // (features x T*B)
        if (train) {
            cache_.assign(static_cast<std::size_t>(layers_), LayerCache{});
            x_tm_ = layer_in;
        }

        for (int l = 0; l < layers_; ++l) {
            MatX<S> gx = wx_[l] * layer_in;
            gx.colwise() += bx_[l].col(0);

            MatX<S> hseq(h_, static_cast<Eigen::Index>(T) * B);
            LayerCache& cc = train ? cache_[static_cast<std::size_t>(l)] : scratch_;
            if (train) {
                cc.r.resize(h_, static_cast<Eigen::Index>(T) * B);
                cc.z.resize(h_, static_cast<Eigen::Index>(T) * B);
                cc.n.resize(h_, static_cast<Eigen::Index>(T) * B);
                cc.ghn.resize(h_, static_cast<Eigen::Index>(T) * B);
                cc.input = layer_in;
            }

            MatX<S> h = MatX<S>::Zero(h_, B);
            MatX<S> gh(3 * h_, B);
            for (int t = 0; t < T; ++t) {
                const auto gxt = gx.middleCols(static_cast<Eigen::Index>(t) * B, B);
                gh.noalias() = wh_[l] * h;
                gh.colwise() += bh_[l].col(0);

                auto r = (gxt.topRows(h_) + gh.topRows(h_))
                             .unaryExpr([](S v) { return sigmoid(v); })
                             .eval();
                auto z = (gxt.middleRows(h_, h_) + gh.middleRows(h_, h_))
                             .unaryExpr([](S v) { return sigmoid(v); })
                             .eval();
                auto ghn = gh.bottomRows(h_).eval();
                auto n = (gxt.bottomRows(h_) + r.cwiseProduct(ghn))
                             .unaryExpr([](S v) { return std::tanh(v); })
                             .eval();
                MatX<S> h_new =
                    ((MatX<S>::Ones(h_, B) - z).cwiseProduct(n) + z.cwiseProduct(h)).eval();

                if (train) {
                    cc.r.middleCols(static_cast<Eigen::Index>(t) * B, B) = r;
                    cc.z.middleCols(static_cast<Eigen::Index>(t) * B, B) = z;
                    cc.n.middleCols(static_cast<Eigen::Index>(t) * B, B) = n;
                    cc.ghn.middleCols(static_cast<Eigen::Index>(t) * B, B) = ghn;
                }
                hseq.middleCols(static_cast<Eigen::Index>(t) * B, B) = h_new;
                h = std::move(h_new);
            }
            if (train) cache_[static_cast<std::size_t>(l)].hseq = hseq;
            layer_in = std::move(hseq);
        }

        Tensor<S> y;
        y.batch = B;
        if (return_sequence_) {
            y.time = T;
            Tensor<S> tmp;
            tmp.batch = B;
            tmp.time = T;
            tmp.m = std::move(layer_in);
            y.m = from_time_major(tmp.m, B, T);
        } else {
            y.time = 1;
            y.m = layer_in.rightCols(B);
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        const int T = t_;
        const int B = b_;

        // Gradient w.r.t. the top layer's hidden sequence, time-major.
        MatX<S> dhseq;
        if (return_sequence_) {
            dhseq = to_time_major(dy);
        } else {
            dhseq = MatX<S>::Zero(h_, static_cast<Eigen::Index>(T) * B);
            dhseq.rightCols(B) = dy.m;
        }

        for (int l = layers_ - 1; l >= 0; --l) {
            LayerCache& cc = cache_[static_cast<std::size_t>(l)];
            MatX<S> dgx(3 * h_, static_cast<Eigen::Index>(T) * B);
            MatX<S> dh_carry = MatX<S>::Zero(h_, B);
            dwh_[l].setZero();
            dbh_[l].setZero();

            MatX<S> dgh(3 * h_, B);
            for (int t = T - 1; t >= 0; --t) {
                const Eigen::Index off = static_cast<Eigen::Index>(t) * B;
                const auto r = cc.r.middleCols(off, B);
                const auto z = cc.z.middleCols(off, B);
                const auto n = cc.n.middleCols(off, B);
                const auto ghn = cc.ghn.middleCols(off, B);
                const MatX<S> h_prev = t == 0
                                           ? MatX<S>::Zero(h_, B)
                                           : cc.hseq.middleCols(off - B, B).eval();

                MatX<S> dh = dhseq.middleCols(off, B) + dh_carry;
                MatX<S> dz = dh.cwiseProduct(h_prev - n);
                MatX<S> dn = dh.cwiseProduct(MatX<S>::Ones(h_, B) - z);
                dh_carry = dh.cwiseProduct(z);

                MatX<S> dn_pre =
                    dn.cwiseProduct(MatX<S>::Ones(h_, B) - n.cwiseProduct(n));
                MatX<S> dr = dn_pre.cwiseProduct(ghn);
                MatX<S> dr_pre =
                    dr.cwiseProduct(r.cwiseProduct(MatX<S>::Ones(h_, B) - r));
                MatX<S> dz_pre =
                    dz.cwiseProduct(z.cwiseProduct(MatX<S>::Ones(h_, B) - z));

                dgx.block(0, off, h_, B) = dr_pre;
                dgx.block(h_, off, h_, B) = dz_pre;
                dgx.block(2 * h_, off, h_, B) = dn_pre;

                dgh.topRows(h_) = dr_pre;
                dgh.middleRows(h_, h_) = dz_pre;
                dgh.bottomRows(h_) = dn_pre.cwiseProduct(r);

                dwh_[l].noalias() += dgh * h_prev.transpose();
                dbh_[l] += dgh.rowwise().sum();
                dh_carry.noalias() += wh_[l].transpose() * dgh;
            }

            dwx_[l].noalias() = dgx * cc.input.transpose();
            dbx_[l] = dgx.rowwise().sum();
            if (l > 0) {
                dhseq.noalias() = wx_[l].transpose() * dgx;
            } else {
                Tensor<S> dx;
                dx.batch = B;
                dx.time = T;
                dx.m = from_time_major<S>((wx_[0].transpose() * dgx).eval(), B, T);
                return dx;
            }
        }
        return Tensor<S>{};
    }

    std::vector<ParamRef<S>> params() override {
        std::vector<ParamRef<S>> out;
        for (int l = 0; l < layers_; ++l) {
            const std::string p = "l" + std::to_string(l) + ".";
            out.push_back({p + "wx", &wx_[l], &dwx_[l]});
            out.push_back({p + "wh", &wh_[l], &dwh_[l]});
            out.push_back({p + "bx", &bx_[l], &dbx_[l]});
            out.push_back({p + "bh", &bh_[l], &dbh_[l]});
        }
        return out;
    }

private:
    struct LayerCache {
        MatX<S> input, hseq, r, z, n, ghn;
    };

    int in_, h_, layers_;
    bool return_sequence_;
    bool train_ = false;
    int t_ = 0, b_ = 0;
    std::vector<MatX<S>> wx_, wh_, bx_, bh_, dwx_, dwh_, dbx_, dbh_;
    std::vector<LayerCache> cache_;
    LayerCache scratch_;
    MatX<S> x_tm_;
};

}  // namespace twindiag::nn
