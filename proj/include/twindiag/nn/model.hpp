#pragma once

#include <fstream>
#include <memory>

#include "twindiag/nn/layers.hpp"

namespace twindiag::nn {

// Ordered layer stack. Parameter paths are "<index>.<kind>.<param>", stable
// across save/load. Dropout keys derive from (seed, forward counter, layer).
template <typename S>
class Sequential {
public:
    Sequential() = default;

    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    template <typename L, typename... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    void add_layer(std::unique_ptr<Layer<S>> layer) { layers_.push_back(std::move(layer)); }

    void init(std::uint64_t seed) {
        seed_ = seed;
        Rng rng(hash_combine(seed, 0x1217ULL));
        for (auto& l : layers_) l->init(rng);
    }

    Tensor<S> forward(const Tensor<S>& x, bool train) {
        if (train) ++forward_counter_;
        Tensor<S> cur = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const std::uint64_t key =
                hash_combine(hash_combine(seed_, forward_counter_), i);
            cur = layers_[i]->forward(cur, train, key);
        }
        return cur;
    }

    // dloss must match the last layer's output geometry.
    Tensor<S> backward(const Tensor<S>& dloss) {
        Tensor<S> cur = dloss;
        for (std::size_t i = layers_.size(); i-- > 0;) cur = layers_[i]->backward(cur);
        return cur;
    }

    struct NamedParam {
        std::string path;
        ParamRef<S> ref;
    };

    std::vector<NamedParam> named_params() {
        std::vector<NamedParam> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (auto& p : layers_[i]->params())
                out.push_back({std::to_string(i) + "." + layers_[i]->kind() + "." + p.name, p});
        return out;
    }

    void zero_grad() {
        for (auto& np : named_params())
            if (np.ref.grad) np.ref.grad->setZero();
    }

    std::vector<MatX<S>> snapshot_params() {
        std::vector<MatX<S>> out;
        for (auto& np : named_params()) out.push_back(*np.ref.value);
        return out;
    }

    void restore_params(const std::vector<MatX<S>>& snap) {
        auto params = named_params();
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].ref.value = snap[i];
    }

    std::size_t num_layers() const { return layers_.size(); }
    Layer<S>& layer(std::size_t i) { return *layers_[i]; }

    std::uint64_t seed() const { return seed_; }
    void set_seed(std::uint64_t s) { seed_ = s; }

private:
    std::vector<std::unique_ptr<Layer<S>>> layers_;
    std::uint64_t seed_ = 0;
    std::uint64_t forward_counter_ = 0;
};

template <typename S>
std::unique_ptr<Layer<S>> make_layer(const std::string& kind, const nlohmann::json& hyper) {
    if (kind == "dense")
        return std::make_unique<Dense<S>>(hyper.at("in").get<int>(), hyper.at("out").get<int>());
    if (kind == "conv1d")
        return std::make_unique<Conv1d<S>>(hyper.at("in").get<int>(), hyper.at("out").get<int>(),
                                           hyper.at("kernel").get<int>(),
                                           hyper.at("padding").get<int>());
    if (kind == "batchnorm1d")
        return std::make_unique<BatchNorm1d<S>>(hyper.at("channels").get<int>(),
                                                hyper.at("momentum").get<double>(),
                                                hyper.at("eps").get<double>());
    if (kind == "relu") return std::make_unique<ReLU<S>>();
    if (kind == "maxpool1d")
        return std::make_unique<MaxPool1d<S>>(hyper.at("kernel").get<int>(),
                                              hyper.at("stride").get<int>());
    if (kind == "globalavgpool") return std::make_unique<GlobalAvgPool<S>>();
    if (kind == "dropout") return std::make_unique<Dropout<S>>(hyper.at("rate").get<double>());
    if (kind == "gru")
        return std::make_unique<Gru<S>>(hyper.at("input").get<int>(), hyper.at("hidden").get<int>(),
                                        hyper.at("layers").get<int>(),
                                        hyper.at("return_sequence").get<bool>());
    throw SchemaError("unknown layer kind: " + kind);
}

// Checkpoint format: one JSON header line (magic, layer specs, param shapes,
// user metadata) followed by raw little-endian float32 blocks in header order.
constexpr const char* kCheckpointMagic = "TDCKPT1";

template <typename S>
void save_checkpoint(Sequential<S>& model, const std::string& path,
                     const nlohmann::json& meta = nlohmann::json::object()) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < model.num_layers(); ++i) {
        auto& l = model.layer(i);
        nlohmann::json params = nlohmann::json::array();
        for (auto& p : l.params())
            params.push_back({{"name", p.name},
                              {"rows", p.value->rows()},
                              {"cols", p.value->cols()}});
        layers.push_back({{"kind", l.kind()}, {"hyper", l.hyper()}, {"params", params}});
    }
    const nlohmann::json header = {
        {"magic", kCheckpointMagic}, {"version", 1}, {"dtype", "f32le"},
        {"layers", layers},          {"meta", meta}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out << header.dump() << '\n';
    for (auto& np : model.named_params()) {
        const MatX<S>& m = *np.ref.value;
        if constexpr (std::is_same_v<S, float>) {
            out.write(reinterpret_cast<const char*>(m.data()),
                      static_cast<std::streamsize>(sizeof(float) * m.size()));
        } else {
            Eigen::MatrixXf f = m.template cast<float>();
            out.write(reinterpret_cast<const char*>(f.data()),
                      static_cast<std::streamsize>(sizeof(float) * f.size()));
        }
    }
    if (!out) throw IoError("short checkpoint write: " + path);
}

template <typename S>
struct LoadedCheckpoint {
    Sequential<S> model;
    nlohmann::json meta;
};

template <typename S>
LoadedCheckpoint<S> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string header_line;
    std::getline(in, header_line);
    const auto header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded() || header.value("magic", "") != kCheckpointMagic)
        throw SchemaError("not a checkpoint file: " + path);

    LoadedCheckpoint<S> out;
    out.meta = header.value("meta", nlohmann::json::object());
    for (const auto& l : header.at("layers"))
        out.model.add_layer(make_layer<S>(l.at("kind").get<std::string>(), l.at("hyper")));

    auto params = out.model.named_params();
    std::size_t pi = 0;
    for (const auto& l : header.at("layers")) {
        for (const auto& p : l.at("params")) {
            if (pi >= params.size()) throw SchemaError("checkpoint parameter list overflow");
            auto& ref = params[pi++];
            const auto rows = p.at("rows").get<Eigen::Index>();
            const auto cols = p.at("cols").get<Eigen::Index>();
            if (ref.ref.value->rows() != rows || ref.ref.value->cols() != cols)
                throw SchemaError("checkpoint shape mismatch at " + ref.path);
            Eigen::MatrixXf f(rows, cols);
            in.read(reinterpret_cast<char*>(f.data()),
                    static_cast<std::streamsize>(sizeof(float) * f.size()));
            if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * f.size()))
                throw SchemaError("truncated checkpoint: " + path);
            *ref.ref.value = f.cast<S>();
        }
    }
    return out;
}

// Loads into an existing model; layer paths must match exactly.
template <typename S>
void load_checkpoint_into(Sequential<S>& model, const std::string& path) {
    auto loaded = load_checkpoint<S>(path);
    auto have = model.named_params();
    auto want = loaded.model.named_params();
    if (have.size() != want.size())
        throw SchemaError("checkpoint layer-path mismatch: model has " +
                          std::to_string(have.size()) + " params, checkpoint " +
                          std::to_string(want.size()));
    for (std::size_t i = 0; i < have.size(); ++i) {
        if (have[i].path != want[i].path)
            throw SchemaError("checkpoint layer-path mismatch at " + have[i].path + " vs " +
                              want[i].path);
        *have[i].ref.value = *want[i].ref.value;
    }
}

}  // namespace twindiag::nn
