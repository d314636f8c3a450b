#pragma once

// TSception model: a multi-scale temporal learner over raw EEG segments, a
// spatial learner with one global and one hemisphere kernel, and a two-layer
// classifier head. Tception/Sception are the single-learner ablations.
//
// Input layout is (batch, 1, channels, samples) with the channel axis ordered
// [left channels..., right channels...] so the hemisphere kernel sees one
// hemisphere per stride step.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsception/errors.hpp"
#include "tsception/ops.hpp"
#include "tsception/rng.hpp"
#include "tsception/tensor.hpp"

namespace tsception {

enum class ModelKind { tsception, tception, sception };

inline std::string kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::tsception: return "tsception";
        case ModelKind::tception: return "tception";
        case ModelKind::sception: return "sception";
    }
    throw ConfigError("invalid model kind");
}

inline ModelKind kind_from_name(const std::string& name) {
    if (name == "tsception") return ModelKind::tsception;
    if (name == "tception") return ModelKind::tception;
    if (name == "sception") return ModelKind::sception;
    throw ConfigError("unknown model kind '" + name + "' (expected tsception|tception|sception)");
}

struct ModelConfig {
    int fs = 256;                                       // sampling rate, Hz
    int num_channels = 4;                               // C, must be even
    int segment_len = 1024;                             // samples per segment
    std::vector<double> ratio_coeffs = {0.5, 0.25, 0.125};  // level i kernel = ratio*fs
    int num_t_kernels = 9;                              // temporal kernels per level
    int num_s_kernels = 6;                              // spatial kernels per kernel type
    int t_pool = 8;                                     // temporal average-pool width
    int s_pool = 16;                                    // spatial average-pool width
    int hidden = 128;                                   // FC1 width
    int num_classes = 2;
    double dropout_rate = 0.3;

    void validate() const {
        if (fs < 1) throw ConfigError("fs must be >= 1");
        if (num_channels < 2 || num_channels % 2 != 0)
            throw ConfigError("num_channels must be even and >= 2, got " +
                              std::to_string(num_channels));
        if (segment_len < 1) throw ConfigError("segment_len must be >= 1");
        if (ratio_coeffs.empty()) throw ConfigError("ratio_coeffs must be non-empty");
        for (std::size_t i = 1; i < ratio_coeffs.size(); ++i)
            if (ratio_coeffs[i] >= ratio_coeffs[i - 1])
                throw ConfigError("ratio_coeffs must be strictly decreasing");
        if (num_t_kernels < 1 || num_s_kernels < 1)
            throw ConfigError("kernel counts must be >= 1");
        if (t_pool < 1 || s_pool < 1) throw ConfigError("pool widths must be >= 1");
        if (hidden < 1) throw ConfigError("hidden must be >= 1");
        if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw ConfigError("dropout_rate must be in [0, 1)");
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"fs", c.fs},
                       {"num_channels", c.num_channels},
                       {"segment_len", c.segment_len},
                       {"ratio_coeffs", c.ratio_coeffs},
                       {"num_t_kernels", c.num_t_kernels},
                       {"num_s_kernels", c.num_s_kernels},
                       {"t_pool", c.t_pool},
                       {"s_pool", c.s_pool},
                       {"hidden", c.hidden},
                       {"num_classes", c.num_classes},
                       {"dropout_rate", c.dropout_rate}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("fs").get_to(c.fs);
    j.at("num_channels").get_to(c.num_channels);
    j.at("segment_len").get_to(c.segment_len);
    j.at("ratio_coeffs").get_to(c.ratio_coeffs);
    j.at("num_t_kernels").get_to(c.num_t_kernels);
    j.at("num_s_kernels").get_to(c.num_s_kernels);
    j.at("t_pool").get_to(c.t_pool);
    j.at("s_pool").get_to(c.s_pool);
    j.at("hidden").get_to(c.hidden);
    j.at("num_classes").get_to(c.num_classes);
    j.at("dropout_rate").get_to(c.dropout_rate);
}

// Temporal kernel sizes (1, round(ratio_i * fs)), round-half-up.
inline std::vector<std::pair<int, int>> t_kernel_sizes(const ModelConfig& config) {
    config.validate();
    std::vector<std::pair<int, int>> sizes;
    for (double r : config.ratio_coeffs) {
        const int w = static_cast<int>(std::floor(r * config.fs + 0.5));
        if (w < 1)
            throw ConfigError("temporal kernel width rounds to " + std::to_string(w) +
                              " for ratio " + std::to_string(r));
        if (w > config.segment_len)
            throw ConfigError("temporal kernel width " + std::to_string(w) +
                              " exceeds segment_len " + std::to_string(config.segment_len));
        sizes.emplace_back(1, w);
    }
    return sizes;
}

template <typename S>
long count_parameters(const std::vector<Tensor<S>>& params) {
    long n = 0;
    for (const auto& p : params) n += p.size();
    return n;
}

template <typename S>
class Model {
public:
    struct NamedTensor {
        std::string name;
        Tensor<S> tensor;
        bool trainable;
    };

    Model(ModelKind kind, ModelConfig config, std::uint64_t seed = 0)
        : kind_(kind), config_(std::move(config)) {
        config_.validate();
        build(seed);
    }

    ModelKind kind() const { return kind_; }
    const ModelConfig& config() const { return config_; }
    bool training() const { return training_; }
    void train() { training_ = true; }
    void eval() { training_ = false; }
    int flatten_dim() const { return flatten_dim_; }

    // --- stage forwards -----------------------------------------------------

    Tensor<S> temporal_forward(const Tensor<S>& x) {
        if (!has_temporal())
            throw ConfigError(kind_name(kind_) + " has no temporal learner");
        check_input(x);
        std::vector<Tensor<S>> parts;
        for (std::size_t i = 0; i < t_weights_.size(); ++i) {
            auto h = conv2d(x, t_weights_[i], t_biases_[i]);
            h = relu(h);
            parts.push_back(avgpool2d(h, 1, config_.t_pool));
        }
        auto z = concat(parts, 3);  // feature axis
        return batchnorm2d(z, t_gamma_, t_beta_, t_bn_, training_);
    }

    // z rows come out ordered [global, hemisphere-left, hemisphere-right]
    Tensor<S> spatial_forward(const Tensor<S>& z) {
        if (!has_spatial())
            throw ConfigError(kind_name(kind_) + " has no spatial learner");
        const int in_ch = kind_ == ModelKind::sception ? 1 : config_.num_t_kernels;
        if (z.rank() != 4 || z.dim(1) != in_ch || z.dim(2) != config_.num_channels)
            throw DimensionError("spatial learner expects (B," + std::to_string(in_ch) + "," +
                                 std::to_string(config_.num_channels) + ",F), got " +
                                 shape_str(z.shape()));
        auto g = avgpool2d(relu(conv2d(z, s_global_w_, s_global_b_)), 1, config_.s_pool);
        auto h = avgpool2d(relu(conv2d(z, s_hemi_w_, s_hemi_b_, config_.num_channels / 2, 1)), 1,
                           config_.s_pool);
        auto out = concat<S>({g, h}, 2);  // spatial axis: 1 global row + 2 hemisphere rows
        return batchnorm2d(out, s_gamma_, s_beta_, s_bn_, training_);
    }

    Tensor<S> classifier_forward(const Tensor<S>& z, Rng* dropout_rng = nullptr) {
        const int B = z.dim(0);
        if (z.size() != static_cast<long>(B) * flatten_dim_)
            throw DimensionError("classifier expects " + std::to_string(flatten_dim_) +
                                 " features per row, got input " + shape_str(z.shape()));
        auto h = relu(linear(reshape(z, {B, flatten_dim_}), fc1_w_, fc1_b_));
        if (training_ && config_.dropout_rate > 0.0) {
            if (!dropout_rng)
                throw ConfigError("train-mode forward with dropout needs an rng");
            h = dropout(h, config_.dropout_rate, true, *dropout_rng);
        }
        return linear(h, fc2_w_, fc2_b_);  // raw logits; softmax lives in the loss
    }

    Tensor<S> forward(const Tensor<S>& x, Rng* dropout_rng = nullptr) {
        switch (kind_) {
            case ModelKind::tsception:
                return classifier_forward(spatial_forward(temporal_forward(x)), dropout_rng);
            case ModelKind::tception:
                return classifier_forward(temporal_forward(x), dropout_rng);
            case ModelKind::sception: {
                check_input(x);
                return classifier_forward(spatial_forward(x), dropout_rng);
            }
        }
        throw ConfigError("invalid model kind");
    }

    // --- parameter access ----------------------------------------------------

    const std::vector<NamedTensor>& named_tensors() const { return registry_; }

    std::vector<Tensor<S>> parameters() const {
        std::vector<Tensor<S>> out;
        for (const auto& nt : registry_)
            if (nt.trainable) out.push_back(nt.tensor);
        return out;
    }

    long count_parameters() const { return tsception::count_parameters(parameters()); }

    // Full state (parameters + BN running statistics) for early-stopping
    // snapshots. Restore writes values back into the live tensors.
    std::vector<std::vector<S>> state_snapshot() const {
        std::vector<std::vector<S>> state;
        sync_bn_registry();
        for (const auto& nt : registry_) state.push_back(nt.tensor.vec());
        return state;
    }

    void state_restore(const std::vector<std::vector<S>>& state) {
        if (state.size() != registry_.size())
            throw ValueError("state snapshot has " + std::to_string(state.size()) +
                             " tensors, model has " + std::to_string(registry_.size()));
        for (std::size_t i = 0; i < state.size(); ++i) {
            if (state[i].size() != registry_[i].tensor.vec().size())
                throw ValueError("state tensor " + registry_[i].name + " size mismatch");
            registry_[i].tensor.vec() = state[i];
        }
        load_bn_from_registry();
    }

    // --- checkpoint io ---------------------------------------------------------

    static constexpr char kMagic[9] = "TSCKPT01";

    void save(const std::string& path) const {
        sync_bn_registry();
        nlohmann::json header;
        header["format_version"] = 1;
        header["kind"] = kind_name(kind_);
        header["config"] = config_;
        auto& tensors = header["tensors"];
        tensors = nlohmann::json::array();
        for (const auto& nt : registry_) {
            tensors.push_back({{"name", nt.name},
                               {"shape", nt.tensor.shape()},
                               {"trainable", nt.trainable}});
        }
        const std::string header_str = header.dump();

        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open checkpoint for writing: " + path);
        f.write(kMagic, 8);
        const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
        f.write(reinterpret_cast<const char*>(&len), 4);
        f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const auto& nt : registry_) {
            std::vector<float> blob(nt.tensor.vec().begin(), nt.tensor.vec().end());
            f.write(reinterpret_cast<const char*>(blob.data()),
                    static_cast<std::streamsize>(blob.size() * sizeof(float)));
        }
        if (!f) throw DataError("failed writing checkpoint: " + path);
    }

    static Model load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open checkpoint: " + path);
        char magic[8];
        if (!f.read(magic, 8) || std::string(magic, 8) != std::string(kMagic, 8))
            throw FormatError("bad checkpoint magic in " + path);
        std::uint32_t len = 0;
        if (!f.read(reinterpret_cast<char*>(&len), 4))
            throw FormatError("truncated checkpoint header length in " + path);
        std::string header_str(len, '\0');
        if (!f.read(header_str.data(), len))
            throw FormatError("truncated checkpoint header in " + path);
        nlohmann::json header;
        try {
            header = nlohmann::json::parse(header_str);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("invalid checkpoint header JSON in " + path + ": " + e.what());
        }
        if (header.at("format_version").get<int>() != 1)
            throw FormatError("unsupported checkpoint format_version in " + path);

        Model model(kind_from_name(header.at("kind").get<std::string>()),
                    header.at("config").get<ModelConfig>(), 0);
        const auto& tensors = header.at("tensors");
        if (tensors.size() != model.registry_.size())
            throw FormatError("checkpoint lists " + std::to_string(tensors.size()) +
                              " tensors, model expects " +
                              std::to_string(model.registry_.size()));
        for (std::size_t i = 0; i < model.registry_.size(); ++i) {
            auto& nt = model.registry_[i];
            const auto& entry = tensors.at(i);
            if (entry.at("name").get<std::string>() != nt.name)
                throw FormatError("checkpoint tensor " + std::to_string(i) + " is '" +
                                  entry.at("name").get<std::string>() + "', expected '" +
                                  nt.name + "'");
            if (entry.at("shape").get<Shape>() != nt.tensor.shape())
                throw FormatError("checkpoint tensor " + nt.name + " has shape " +
                                  shape_str(entry.at("shape").get<Shape>()) + ", expected " +
                                  shape_str(nt.tensor.shape()));
            std::vector<float> blob(static_cast<std::size_t>(nt.tensor.size()));
            if (!f.read(reinterpret_cast<char*>(blob.data()),
                        static_cast<std::streamsize>(blob.size() * sizeof(float))))
                throw FormatError("truncated checkpoint payload at tensor " + nt.name + " in " +
                                  path);
            std::copy(blob.begin(), blob.end(), nt.tensor.vec().begin());
        }
        model.load_bn_from_registry();
        return model;
    }

private:
    bool has_temporal() const { return kind_ != ModelKind::sception; }
    bool has_spatial() const { return kind_ != ModelKind::tception; }

    void check_input(const Tensor<S>& x) const {
        if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != config_.num_channels ||
            x.dim(3) != config_.segment_len)
            throw DimensionError("model expects input (B,1," +
                                 std::to_string(config_.num_channels) + "," +
                                 std::to_string(config_.segment_len) + "), got " +
                                 shape_str(x.shape()));
    }

    Tensor<S> make_param(const std::string& name, Shape shape, Rng& rng, double fan_in) {
        Tensor<S> t(std::move(shape), true);
        const double stddev = std::sqrt(2.0 / fan_in);
        for (long i = 0; i < t.size(); ++i)
            t.data()[i] = static_cast<S>(rng.normal() * stddev);
        registry_.push_back({name, t, true});
        return t;
    }

    Tensor<S> make_const(const std::string& name, Shape shape, S value, bool trainable) {
        Tensor<S> t(std::move(shape), trainable);
        for (long i = 0; i < t.size(); ++i) t.data()[i] = value;
        registry_.push_back({name, t, trainable});
        return t;
    }

    void build(std::uint64_t seed) {
        Rng rng(mix_seed(seed, 0x7363657074696f6eULL));  // model-init stream
        const int C = config_.num_channels;
        const int T = config_.num_t_kernels;
        const int Sk = config_.num_s_kernels;

        int t_feat_sum = 0;
        if (has_temporal()) {
            const auto sizes = t_kernel_sizes(config_);
            for (std::size_t i = 0; i < sizes.size(); ++i) {
                const int w = sizes[i].second;
                const int conv_len = config_.segment_len - w + 1;
                const int pooled = conv_len / config_.t_pool;
                if (pooled < 1)
                    throw ConfigError("temporal level " + std::to_string(i) +
                                      " pools to zero length");
                t_feat_sum += pooled;
                const std::string base = "temporal.conv" + std::to_string(i);
                t_weights_.push_back(make_param(base + ".weight", {T, 1, 1, w}, rng, w));
                t_biases_.push_back(make_const(base + ".bias", {T}, S(0), true));
            }
            t_gamma_ = make_const("temporal.bn.gamma", {T}, S(1), true);
            t_beta_ = make_const("temporal.bn.beta", {T}, S(0), true);
            t_bn_ = BatchNormState<S>(T);
            make_const("temporal.bn.running_mean", {T}, S(0), false);
            make_const("temporal.bn.running_var", {T}, S(1), false);
        }

        if (has_spatial()) {
            const int in_ch = kind_ == ModelKind::sception ? 1 : T;
            s_global_w_ = make_param("spatial.global.weight", {Sk, in_ch, C, 1}, rng,
                                     static_cast<double>(in_ch) * C);
            s_global_b_ = make_const("spatial.global.bias", {Sk}, S(0), true);
            s_hemi_w_ = make_param("spatial.hemi.weight", {Sk, in_ch, C / 2, 1}, rng,
                                   static_cast<double>(in_ch) * C / 2);
            s_hemi_b_ = make_const("spatial.hemi.bias", {Sk}, S(0), true);
            s_gamma_ = make_const("spatial.bn.gamma", {Sk}, S(1), true);
            s_beta_ = make_const("spatial.bn.beta", {Sk}, S(0), true);
            s_bn_ = BatchNormState<S>(Sk);
            make_const("spatial.bn.running_mean", {Sk}, S(0), false);
            make_const("spatial.bn.running_var", {Sk}, S(1), false);
        }

        switch (kind_) {
            case ModelKind::tsception: {
                const int f = t_feat_sum / config_.s_pool;
                if (f < 1) throw ConfigError("spatial pool leaves zero features");
                flatten_dim_ = Sk * 3 * f;
                break;
            }
            case ModelKind::tception:
                flatten_dim_ = T * C * t_feat_sum;
                break;
            case ModelKind::sception: {
                const int f = config_.segment_len / config_.s_pool;
                if (f < 1) throw ConfigError("spatial pool leaves zero features");
                flatten_dim_ = Sk * 3 * f;
                break;
            }
        }

        fc1_w_ = make_param("classifier.fc1.weight", {flatten_dim_, config_.hidden}, rng,
                            flatten_dim_);
        fc1_b_ = make_const("classifier.fc1.bias", {config_.hidden}, S(0), true);
        fc2_w_ = make_param("classifier.fc2.weight", {config_.hidden, config_.num_classes}, rng,
                            config_.hidden);
        fc2_b_ = make_const("classifier.fc2.bias", {config_.num_classes}, S(0), true);
    }

    // BN running stats live in BatchNormState (mutated by forward); registry
    // holds mirror tensors for snapshot/checkpoint, synced on demand.
    void sync_bn_registry() const {
        auto put = [this](const std::string& name, const std::vector<S>& values) {
            for (const auto& nt : registry_)
                if (nt.name == name) {
                    Tensor<S> handle = nt.tensor;  // shares the node
                    handle.vec() = values;
                    return;
                }
        };
        if (has_temporal()) {
            put("temporal.bn.running_mean", t_bn_.running_mean);
            put("temporal.bn.running_var", t_bn_.running_var);
        }
        if (has_spatial()) {
            put("spatial.bn.running_mean", s_bn_.running_mean);
            put("spatial.bn.running_var", s_bn_.running_var);
        }
    }

    void load_bn_from_registry() {
        auto get = [this](const std::string& name, std::vector<S>& into) {
            for (const auto& nt : registry_)
                if (nt.name == name) {
                    into = nt.tensor.vec();
                    return;
                }
        };
        if (has_temporal()) {
            get("temporal.bn.running_mean", t_bn_.running_mean);
            get("temporal.bn.running_var", t_bn_.running_var);
        }
        if (has_spatial()) {
            get("spatial.bn.running_mean", s_bn_.running_mean);
            get("spatial.bn.running_var", s_bn_.running_var);
        }
    }

    ModelKind kind_;
    ModelConfig config_;
    bool training_ = false;
    int flatten_dim_ = 0;

    std::vector<NamedTensor> registry_;
    std::vector<Tensor<S>> t_weights_, t_biases_;
    Tensor<S> t_gamma_, t_beta_;
    BatchNormState<S> t_bn_;
    Tensor<S> s_global_w_, s_global_b_, s_hemi_w_, s_hemi_b_;
    Tensor<S> s_gamma_, s_beta_;
    BatchNormState<S> s_bn_;
    Tensor<S> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

// Variant factory: the ablation variants use pool width 16 in their single
// learner; the full model uses (t_pool=8, s_pool=16).
template <typename S>
Model<S> build_variant(ModelKind kind, ModelConfig config, std::uint64_t seed = 0) {
    if (kind == ModelKind::tception) config.t_pool = 16;
    if (kind == ModelKind::sception) config.s_pool = 16;
    return Model<S>(kind, std::move(config), seed);
}

}  // namespace tsception
