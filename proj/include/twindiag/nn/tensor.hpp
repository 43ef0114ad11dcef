#pragma once

#include <Eigen/Core>
#include <string>

#include "twindiag/errors.hpp"

namespace twindiag::nn {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Batched sequence tensor: rows are features/channels, columns are samples
// laid out sample-major (column b*time + t). time == 1 after pooling.
template <typename S>
struct Tensor {
    MatX<S> m;
    int batch = 0;
    int time = 0;

    Tensor() = default;
    Tensor(int features, int batch_, int time_)
        : m(MatX<S>::Zero(features, static_cast<Eigen::Index>(batch_) * time_)),
          batch(batch_),
          time(time_) {}

    int features() const { return static_cast<int>(m.rows()); }

    auto sample(int b) { return m.middleCols(static_cast<Eigen::Index>(b) * time, time); }
    auto sample(int b) const { return m.middleCols(static_cast<Eigen::Index>(b) * time, time); }

    void require(int features_, const std::string& where) const {
        if (features() != features_)
            throw SchemaError(where + ": expected " + std::to_string(features_) +
                              " features, got " + std::to_string(features()));
        if (static_cast<Eigen::Index>(batch) * time != m.cols())
            throw SchemaError(where + ": inconsistent tensor geometry");
    }
};

// Reorders (F x B*T, column b*T+t) into time-major (F x T*B, column t*B+b).
template <typename S>
MatX<S> to_time_major(const Tensor<S>& x) {
    MatX<S> out(x.m.rows(), x.m.cols());
    for (int b = 0; b < x.batch; ++b)
        for (int t = 0; t < x.time; ++t)
            out.col(static_cast<Eigen::Index>(t) * x.batch + b) =
                x.m.col(static_cast<Eigen::Index>(b) * x.time + t);
    return out;
}

template <typename S>
MatX<S> from_time_major(const MatX<S>& tm, int batch, int time) {
    MatX<S> out(tm.rows(), tm.cols());
    for (int b = 0; b < batch; ++b)
        for (int t = 0; t < time; ++t)
            out.col(static_cast<Eigen::Index>(b) * time + t) =
                tm.col(static_cast<Eigen::Index>(t) * batch + b);
    return out;
}

}  // namespace twindiag::nn
