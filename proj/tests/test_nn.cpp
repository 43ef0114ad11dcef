#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "twindiag/nn/train.hpp"
#include "twindiag/rng.hpp"

using namespace twindiag;
using namespace twindiag::nn;
namespace fs = std::filesystem;

namespace {

// Scalar probe loss L = sum(out .* R) with fixed random R, so dL/dout = R.
template <typename S>
struct Probe {
    MatX<S> r;
    explicit Probe(const Tensor<S>& out, std::uint64_t seed) {
        r.resize(out.m.rows(), out.m.cols());
        for (Eigen::Index i = 0; i < r.size(); ++i)
            r.data()[i] = static_cast<S>(counter_uniform(seed, 7, static_cast<std::uint64_t>(i)) - 0.5);
    }
    double loss(const Tensor<S>& out) const {
        return static_cast<double>((out.m.cwiseProduct(r)).sum());
    }
    Tensor<S> grad(const Tensor<S>& out) const {
        Tensor<S> g;
        g.batch = out.batch;
        g.time = out.time;
        g.m = r;
        return g;
    }
};

template <typename S>
Tensor<S> random_input(int features, int batch, int time, std::uint64_t seed, double scale = 1.0) {
    Tensor<S> x(features, batch, time);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < x.m.size(); ++i)
        x.m.data()[i] = static_cast<S>(rng.normal() * scale);
    return x;
}

// Central finite differences on every parameter and on the input. The layer
// must be run in train mode with a fixed dropout key.
double gradcheck(Layer<double>& layer, Tensor<double> x, std::uint64_t key,
                 double eps = 1e-6) {
    Rng rng(hash_combine(key, 1));
    layer.init(rng);

    auto out = layer.forward(x, true, key);
    Probe<double> probe(out, hash_combine(key, 2));
    auto dx = layer.backward(probe.grad(out));

    double worst = 0.0;
    auto check_matrix = [&](MatX<double>& value, const MatX<double>& analytic) {
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            const double orig = value.data()[i];
            value.data()[i] = orig + eps;
            const double up = probe.loss(layer.forward(x, true, key));
            value.data()[i] = orig - eps;
            const double dn = probe.loss(layer.forward(x, true, key));
            value.data()[i] = orig;
            const double numeric = (up - dn) / (2 * eps);
            const double a = analytic.data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
            worst = std::max(worst, rel);
        }
    };

    for (auto& p : layer.params()) {
        if (!p.trainable) continue;
        MatX<double> analytic = *p.grad;  // copy: re-forwards overwrite grads? no, but caches
        check_matrix(*p.value, analytic);
    }
    // Input gradient.
    {
        MatX<double> analytic = dx.m;
        for (Eigen::Index i = 0; i < x.m.size(); ++i) {
            const double orig = x.m.data()[i];
            x.m.data()[i] = orig + eps;
            const double up = probe.loss(layer.forward(x, true, key));
            x.m.data()[i] = orig - eps;
            const double dn = probe.loss(layer.forward(x, true, key));
            x.m.data()[i] = orig;
            const double numeric = (up - dn) / (2 * eps);
            const double a = analytic.data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("gradcheck dense") {
    Dense<double> layer(5, 4);
    CHECK(gradcheck(layer, random_input<double>(5, 3, 2, 1), 11) < 1e-5);
}

TEST_CASE("gradcheck conv1d") {
    Conv1d<double> layer(3, 4, 7, 3);
    CHECK(gradcheck(layer, random_input<double>(3, 2, 12, 2), 12) < 1e-5);
}

TEST_CASE("gradcheck batchnorm in train mode") {
    BatchNorm1d<double> layer(4);
    CHECK(gradcheck(layer, random_input<double>(4, 3, 5, 3), 13) < 1e-5);
}

TEST_CASE("gradcheck relu away from the kink") {
    ReLU<double> layer;
    auto x = random_input<double>(4, 2, 6, 4);
    // push values away from zero
    for (Eigen::Index i = 0; i < x.m.size(); ++i)
        x.m.data()[i] += x.m.data()[i] > 0 ? 0.5 : -0.5;
    CHECK(gradcheck(layer, x, 14) < 1e-5);
}

TEST_CASE("gradcheck maxpool with distinct values") {
    MaxPool1d<double> layer(2, 2);
    Tensor<double> x(3, 2, 8);
    Rng rng(5);
    std::vector<double> vals;
    for (Eigen::Index i = 0; i < x.m.size(); ++i) vals.push_back(0.01 * static_cast<double>(i));
    rng.shuffle(vals);
    for (Eigen::Index i = 0; i < x.m.size(); ++i) x.m.data()[i] = vals[static_cast<std::size_t>(i)];
    CHECK(gradcheck(layer, x, 15) < 1e-5);
}

TEST_CASE("gradcheck global average pool") {
    GlobalAvgPool<double> layer;
    CHECK(gradcheck(layer, random_input<double>(4, 3, 7, 6), 16) < 1e-5);
}

TEST_CASE("gradcheck dropout with fixed mask") {
    Dropout<double> layer(0.3);
    CHECK(gradcheck(layer, random_input<double>(6, 2, 4, 7), 17) < 1e-5);
}

TEST_CASE("gradcheck gru through 20 timesteps") {
    Gru<double> seq(3, 5, 2, true);
    CHECK(gradcheck(seq, random_input<double>(3, 2, 20, 8), 18) < 1e-5);

    Gru<double> last(3, 4, 2, false);
    CHECK(gradcheck(last, random_input<double>(3, 2, 20, 9), 19) < 1e-5);
}

TEST_CASE("gradcheck float32 conv within loose tolerance") {
    Conv1d<float> layer(3, 4, 7, 3);
    Rng rng(31);
    layer.init(rng);
    auto x = random_input<float>(3, 2, 10, 21);
    auto out = layer.forward(x, true, 0);
    Probe<float> probe(out, 33);
    layer.backward(probe.grad(out));

    auto params = layer.params();
    auto& w = *params[0].value;
    const MatX<float> analytic = *params[0].grad;
    const float eps = 1e-3f;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(w.size(), 40); ++i) {
        const float orig = w.data()[i];
        w.data()[i] = orig + eps;
        const double up = probe.loss(layer.forward(x, true, 0));
        w.data()[i] = orig - eps;
        const double dn = probe.loss(layer.forward(x, true, 0));
        w.data()[i] = orig;
        const double numeric = (up - dn) / (2 * eps);
        const double a = analytic.data()[i];
        worst = std::max(worst, std::abs(a - numeric) /
                                    std::max({std::abs(a), std::abs(numeric), 1e-2}));
    }
    CHECK(worst < 1e-2);
}

TEST_CASE("softmax cross-entropy gradient and zero-loss case") {
    MatX<double> logits(3, 2);
    logits << 2.0, -1.0, 0.5, 3.0, -1.0, 0.2;
    auto r = softmax_cross_entropy<double>(logits, {0, 1});
    // finite differences on the loss
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        MatX<double> up = logits, dn = logits;
        up.data()[i] += eps;
        dn.data()[i] -= eps;
        const double numeric = (softmax_cross_entropy<double>(up, {0, 1}).loss -
                                softmax_cross_entropy<double>(dn, {0, 1}).loss) /
                               (2 * eps);
        CHECK(r.dlogits.data()[i] == doctest::Approx(numeric).epsilon(1e-5));
    }

    // Near-perfect prediction: gradient norm vanishes.
    MatX<double> confident(3, 1);
    confident << 40.0, 0.0, 0.0;
    auto perfect = softmax_cross_entropy<double>(confident, {0});
    CHECK(perfect.loss < 1e-9);
    CHECK(perfect.dlogits.norm() < 1e-6);
}

TEST_CASE("mse loss with mask") {
    MatX<double> pred(2, 3), target(2, 3), mask(2, 3);
    pred << 1, 2, 3, 4, 5, 6;
    target << 1, 1, 1, 1, 1, 1;
    mask << 1, 1, 0, 1, 0, 1;
    auto r = mse_loss<double>(pred, target, &mask);
    CHECK(r.loss == doctest::Approx((0 + 1 + 9 + 25) / 4.0));
    CHECK(r.dpred(0, 1) == doctest::Approx(2.0 * 1.0 / 4.0));
    CHECK(r.dpred(1, 1) == 0.0);
}

TEST_CASE("adam hand-computed first step") {
    // theta = 1, g = 0.5, lr = 1e-3: bias corrections cancel at t=1 and the
    // update is lr * g / sqrt(g^2) = lr.
    Dense<float> layer(1, 1);
    auto params = layer.params();
    params[0].value->setConstant(1.0f);
    params[1].value->setConstant(0.0f);
    params[0].grad->setConstant(0.5f);
    params[1].grad->setConstant(0.0f);

    struct Named { ParamRef<float> ref; };
    std::vector<Sequential<float>::NamedParam> wrapped;
    for (auto& p : params) wrapped.push_back({"p", p});

    Adam<float> adam;
    adam.step(wrapped, 1e-3, 0.0);
    CHECK((*params[0].value)(0, 0) == doctest::Approx(0.999).epsilon(1e-5));

    // Zero gradient, zero decay: parameters unchanged.
    Adam<float> adam2;
    params[0].value->setConstant(1.0f);
    params[0].grad->setConstant(0.0f);
    adam2.step(wrapped, 1e-3, 0.0);
    CHECK((*params[0].value)(0, 0) == doctest::Approx(1.0));

    // Decay only: theta' = theta * (1 - lr*lambda).
    Adam<float> adam3;
    params[0].value->setConstant(1.0f);
    params[0].grad->setConstant(0.0f);
    adam3.step(wrapped, 0.1, 0.01);
    CHECK((*params[0].value)(0, 0) == doctest::Approx(1.0 * (1.0 - 0.1 * 0.01)));
}

TEST_CASE("identity dense passes input through") {
    Dense<float> layer(3, 3);
    auto params = layer.params();
    params[0].value->setIdentity();
    params[1].value->setZero();
    auto x = random_input<float>(3, 2, 4, 40);
    auto y = layer.forward(x, false, 0);
    CHECK(y.m == x.m);
}

TEST_CASE("conv1d kernel 7 padding 3 preserves length 1500") {
    Conv1d<float> layer(2, 3, 7, 3);
    Rng rng(3);
    layer.init(rng);
    auto x = random_input<float>(2, 1, 1500, 41);
    CHECK(layer.forward(x, false, 0).time == 1500);
}

TEST_CASE("softmax columns sum to one") {
    MatX<float> logits(20, 5);
    Rng rng(4);
    for (Eigen::Index i = 0; i < logits.size(); ++i)
        logits.data()[i] = static_cast<float>(rng.normal() * 3);
    auto p = softmax_cols(logits);
    for (Eigen::Index c = 0; c < p.cols(); ++c)
        CHECK(p.col(c).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("batchnorm running statistics converge to batch statistics") {
    BatchNorm1d<float> layer(3, 0.1, 1e-5);
    auto x = random_input<float>(3, 4, 5, 42);
    for (int i = 0; i < 100; ++i) layer.forward(x, true, 0);

    const auto n = static_cast<float>(x.m.cols());
    Eigen::VectorXf mean = x.m.rowwise().mean();
    Eigen::VectorXf var = (x.m.colwise() - mean).array().square().matrix().rowwise().sum() / n;
    for (int c = 0; c < 3; ++c) {
        CHECK(layer.running_mean()(c, 0) == doctest::Approx(mean(c)).epsilon(1e-4));
        CHECK(layer.running_var()(c, 0) == doctest::Approx(var(c)).epsilon(1e-4));
    }
}

TEST_CASE("dropout is the identity in eval mode") {
    Dropout<float> layer(0.5);
    auto x = random_input<float>(4, 2, 3, 43);
    CHECK(layer.forward(x, false, 123).m == x.m);
    CHECK(layer.forward(x, false, 456).m == x.m);
}

TEST_CASE("checkpoint save/load round trip") {
    Sequential<float> model;
    model.add<Conv1d<float>>(3, 4, 7, 3);
    model.add<BatchNorm1d<float>>(4);
    model.add<ReLU<float>>();
    model.add<GlobalAvgPool<float>>();
    model.add<Dense<float>>(4, 2);
    model.init(77);

    auto x = random_input<float>(3, 2, 20, 44);
    model.forward(x, true);  // populate running stats
    const auto y = model.forward(x, false);

    const auto path = (fs::temp_directory_path() / "twindiag_ckpt_test.bin").string();
    save_checkpoint(model, path, {{"note", "test"}});

    auto loaded = load_checkpoint<float>(path);
    CHECK(loaded.meta.at("note") == "test");
    CHECK(loaded.model.forward(x, false).m == y.m);

    // Bit-identical parameters.
    auto a = model.named_params();
    auto b = loaded.model.named_params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].ref.value == *b[i].ref.value);

    // Truncation is detected.
    fs::resize_file(path, fs::file_size(path) - 16);
    CHECK_THROWS_AS(load_checkpoint<float>(path), SchemaError);

    // Loading into a different architecture is rejected with the layer path.
    save_checkpoint(model, path);
    Sequential<float> other;
    other.add<Dense<float>>(3, 2);
    other.init(1);
    try {
        load_checkpoint_into(other, path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
    }
    fs::remove(path);
}

TEST_CASE("fit overfits a separable toy problem and stops early") {
    // Three well-separated clusters in 8 dimensions.
    Rng rng(50);
    const int per_class = 20;
    MatX<float> xs(8, 3 * per_class);
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < per_class; ++i) {
            for (int f = 0; f < 8; ++f)
                xs(f, c * per_class + i) =
                    static_cast<float>((f % 3 == c ? 2.0 : -1.0) + 0.3 * rng.normal());
            labels.push_back(c);
        }

    Sequential<float> model;
    model.add<Dense<float>>(8, 16);
    model.add<ReLU<float>>();
    model.add<Dense<float>>(16, 3);
    model.init(7);

    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.max_epochs = 200;
    cfg.early_stop_patience = 200;
    auto params = model.named_params();
    Adam<float> adam;

    auto accuracy = [&]() {
        Tensor<float> x;
        x.batch = 3 * per_class;
        x.time = 1;
        x.m = xs;
        const auto y = model.forward(x, false);
        int correct = 0;
        for (Eigen::Index c = 0; c < y.m.cols(); ++c) {
            Eigen::Index best;
            y.m.col(c).maxCoeff(&best);
            correct += best == labels[static_cast<std::size_t>(c)];
        }
        return static_cast<double>(correct) / static_cast<double>(labels.size());
    };

    auto train_epoch = [&](int, double lr) {
        Tensor<float> x;
        x.batch = 3 * per_class;
        x.time = 1;
        x.m = xs;
        model.zero_grad();
        auto y = model.forward(x, true);
        auto loss = softmax_cross_entropy<float>(y.m, labels);
        Tensor<float> dy;
        dy.batch = y.batch;
        dy.time = 1;
        dy.m = loss.dlogits;
        model.backward(dy);
        adam.step(params, lr, 0.0);
        return loss.loss;
    };

    auto result = fit<float>(model, cfg, true, train_epoch, accuracy);
    CHECK(result.history.size() <= 200);
    CHECK(accuracy() == doctest::Approx(1.0));

    // A stuck metric stops after exactly patience epochs past the best.
    Sequential<float> dummy;
    dummy.add<Dense<float>>(2, 2);
    dummy.init(1);
    TrainConfig stop_cfg;
    stop_cfg.max_epochs = 500;
    stop_cfg.early_stop_patience = 40;
    auto r2 = fit<float>(
        dummy, stop_cfg, true, [&](int, double) { return 0.0; }, [&]() { return 0.5; });
    CHECK(r2.history.size() == 41);  // best at epoch 0, 40 more without improvement
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto run = [&]() {
        Sequential<float> model;
        model.add<Dense<float>>(4, 8);
        model.add<ReLU<float>>();
        model.add<Dropout<float>>(0.2);
        model.add<Dense<float>>(8, 2);
        model.init(123);
        auto params = model.named_params();
        Adam<float> adam;

        auto x = random_input<float>(4, 6, 1, 60);
        std::vector<int> labels = {0, 1, 0, 1, 0, 1};
        std::vector<double> losses;
        for (int e = 0; e < 20; ++e) {
            model.zero_grad();
            auto y = model.forward(x, true);
            auto loss = softmax_cross_entropy<float>(y.m, labels);
            Tensor<float> dy;
            dy.batch = y.batch;
            dy.time = 1;
            dy.m = loss.dlogits;
            model.backward(dy);
            adam.step(params, 0.01, 1e-4);
            losses.push_back(loss.loss);
        }
        return losses;
    };
    CHECK(run() == run());
}
