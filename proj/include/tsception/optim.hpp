#pragma once

// Training: the regularized cross-entropy objective, Adam, the
// early-stopping fit loop, evaluation, and the leave-one-session-out
// cross-validation driver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <numeric>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "tsception/data.hpp"
#include "tsception/errors.hpp"
#include "tsception/model.hpp"
#include "tsception/ops.hpp"
#include "tsception/rng.hpp"

namespace tsception {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 128;
    double lambda_l1 = 1e-6;
    int patience = 4;
    int max_epochs = 500;  // safety bound; early stopping is the real criterion
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;

    // cross-validation split parameters
    double window_s = 4.0;
    int step_samples = 25;
    double val_fraction = 0.2;
    bool chronological = false;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (lambda_l1 < 0.0) throw ConfigError("L1 coefficient must be >= 0");
        if (patience < 1) throw ConfigError("early-stopping patience must be >= 1");
        if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("Adam betas must lie in [0,1)");
        if (!(eps_adam > 0.0)) throw ConfigError("Adam epsilon must be > 0");
        if (!(window_s > 0.0)) throw ConfigError("window must be > 0 seconds");
        if (step_samples < 1) throw ConfigError("step must be >= 1 samples");
        if (!(0.0 < val_fraction && val_fraction < 1.0))
            throw ConfigError("validation fraction must lie in (0,1)");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate},
                       {"batch_size", c.batch_size},
                       {"lambda_l1", c.lambda_l1},
                       {"patience", c.patience},
                       {"max_epochs", c.max_epochs},
                       {"seed", c.seed},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"eps_adam", c.eps_adam},
                       {"window_s", c.window_s},
                       {"step_samples", c.step_samples},
                       {"val_fraction", c.val_fraction},
                       {"chronological", c.chronological}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lambda_l1 = j.value("lambda_l1", c.lambda_l1);
    c.patience = j.value("patience", c.patience);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps_adam = j.value("eps_adam", c.eps_adam);
    c.window_s = j.value("window_s", c.window_s);
    c.step_samples = j.value("step_samples", c.step_samples);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.chronological = j.value("chronological", c.chronological);
}

// cross-entropy mean plus lambda * sum |theta| over the trainable parameters
template <typename S>
Tensor<S> loss(const Tensor<S>& logits, const std::vector<int>& labels,
               const std::vector<Tensor<S>>& params, double lambda) {
    Tensor<S> ce = softmax_cross_entropy(logits, labels);
    if (lambda > 0.0 && !params.empty())
        return add(ce, l1_penalty(params, static_cast<S>(lambda)));
    return ce;
}

// Adam with bias correction. Holds handles to the parameters it updates;
// gradients are read from each parameter's accumulated grad buffer.
template <typename S>
class Adam {
public:
    Adam(std::vector<Tensor<S>> params, std::vector<std::string> names, double lr,
         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)),
          names_(std::move(names)),
          lr_(lr),
          beta1_(beta1),
          beta2_(beta2),
          eps_(eps) {
        if (!names_.empty() && names_.size() != params_.size())
            throw DimensionError("Adam got " + std::to_string(params_.size()) +
                                 " parameters but " + std::to_string(names_.size()) + " names");
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    long step_count() const { return t_; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor<S>& p = params_[i];
            const std::vector<S>& g = p.node()->grad;
            std::vector<S>& x = p.vec();
            if (g.size() != x.size())
                throw DimensionError("parameter " + name(i) + " has no gradient of its size");
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double gk = static_cast<double>(g[k]);
                if (!std::isfinite(gk))
                    throw ValueError("non-finite gradient in parameter " + name(i) +
                                     " at element " + std::to_string(k));
                m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * gk;
                v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * gk * gk;
                const double mhat = m_[i][k] / bc1;
                const double vhat = v_[i][k] / bc2;
                x[k] = static_cast<S>(static_cast<double>(x[k]) -
                                      lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    std::string name(std::size_t i) const {
        return names_.empty() ? "#" + std::to_string(i) : names_[i];
    }

    std::vector<Tensor<S>> params_;
    std::vector<std::string> names_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Patience counter: strict improvement resets it, anything else burns one
// epoch of patience. Tracks the best value and the epoch it occurred.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {
        if (patience < 1) throw ConfigError("early-stopping patience must be >= 1");
    }

    // feeds one epoch's validation accuracy; true when it is a new best
    bool observe(double value) {
        ++epoch_;
        if (value > best_) {
            best_ = value;
            best_epoch_ = epoch_;
            impatience_ = 0;
            return true;
        }
        ++impatience_;
        return false;
    }

    bool should_stop() const { return impatience_ >= patience_; }
    double best() const { return best_; }
    int best_epoch() const { return best_epoch_; }
    int epochs_observed() const { return epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    int impatience_ = 0;
    double best_ = 0.0;
};

struct FitReport {
    std::vector<double> epoch_losses;     // mean training loss per epoch
    std::vector<double> val_accuracies;   // one per epoch
    double best_val_accuracy = 0.0;
    int best_epoch = 0;                   // 1-based; 0 when never improved
    int stop_epoch = 0;                   // last epoch that ran
    double test_accuracy = -1.0;          // negative when no test set was given
};

inline void to_json(nlohmann::json& j, const FitReport& r) {
    j = nlohmann::json{{"epoch_losses", r.epoch_losses},
                       {"val_accuracies", r.val_accuracies},
                       {"best_val_accuracy", r.best_val_accuracy},
                       {"best_epoch", r.best_epoch},
                       {"stop_epoch", r.stop_epoch}};
    if (r.test_accuracy >= 0.0)
        j["test_accuracy"] = r.test_accuracy;
    else
        j["test_accuracy"] = nullptr;
}

namespace detail {

template <typename S>
Tensor<S> batch_tensor(const SegmentSet& set, const std::vector<long>& idx) {
    Tensor<float> f = set.batch(idx);
    if constexpr (std::is_same_v<S, float>) {
        return f;
    } else {
        Tensor<S> out(f.shape());
        for (std::size_t i = 0; i < out.vec().size(); ++i)
            out.vec()[i] = static_cast<S>(f.vec()[i]);
        return out;
    }
}

inline std::vector<long> batch_indices(const std::vector<long>& order, long offset, int batch) {
    const long end = std::min<long>(offset + batch, static_cast<long>(order.size()));
    return std::vector<long>(order.begin() + offset, order.begin() + end);
}

}  // namespace detail

// argmax(logits) accuracy; ties resolve to the lowest class index
template <typename S>
double evaluate(Model<S>& model, const SegmentSet& data, int batch_size = 256) {
    if (data.size() == 0) throw DataError("cannot evaluate on an empty segment set");
    model.eval();
    NoGradGuard guard;
    std::vector<long> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), 0L);
    long correct = 0;
    for (long offset = 0; offset < data.size(); offset += batch_size) {
        const auto idx = detail::batch_indices(order, offset, batch_size);
        const Tensor<S> logits = model.forward(detail::batch_tensor<S>(data, idx));
        const long B = logits.shape()[0];
        const long K = logits.shape()[1];
        for (long b = 0; b < B; ++b) {
            long arg = 0;
            for (long k = 1; k < K; ++k)
                if (logits.vec()[static_cast<std::size_t>(b * K + k)] >
                    logits.vec()[static_cast<std::size_t>(b * K + arg)])
                    arg = k;
            correct += arg == data.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(b)])];
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// One training run with early stopping: per epoch, shuffle/train/validate;
// strict validation improvement snapshots the parameters and resets patience;
// the best snapshot is restored before returning. When a test set is given,
// its accuracy under the restored parameters completes the report.
template <typename S>
FitReport fit(Model<S>& model, const SegmentSet& train, const SegmentSet& val,
              const TrainConfig& cfg, const SegmentSet* test = nullptr) {
    cfg.validate();
    if (train.size() == 0 || val.size() == 0)
        throw DataError("fit needs non-empty train and validation splits");
    const int K = model.config().num_classes;
    for (const SegmentSet* part : {&train, &val})
        for (std::size_t i = 0; i < part->labels.size(); ++i)
            if (part->labels[i] < 0 || part->labels[i] >= K)
                throw ValueError("label " + std::to_string(part->labels[i]) + " of segment " +
                                 std::to_string(i) + " is out of range for " +
                                 std::to_string(K) + " classes");

    Rng shuffle_rng(mix_seed(cfg.seed, 0x73687566ULL));
    Rng dropout_rng(mix_seed(cfg.seed, 0x64726F70ULL));

    std::vector<Tensor<S>> params;
    std::vector<std::string> names;
    for (const auto& nt : model.named_tensors()) {
        if (!nt.trainable) continue;
        params.push_back(nt.tensor);
        names.push_back(nt.name);
    }
    Adam<S> adam(params, names, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_adam);
    EarlyStopping stopper(cfg.patience);

    FitReport report;
    std::vector<long> order(static_cast<std::size_t>(train.size()));
    std::iota(order.begin(), order.end(), 0L);
    auto best_state = model.state_snapshot();

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        model.train();
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        long batches = 0;
        for (long offset = 0; offset < train.size(); offset += cfg.batch_size) {
            const auto idx = detail::batch_indices(order, offset, cfg.batch_size);
            for (auto& p : params) p.zero_grad();
            const Tensor<S> logits =
                model.forward(detail::batch_tensor<S>(train, idx), &dropout_rng);
            Tensor<S> objective = loss(logits, train.batch_labels(idx), params, cfg.lambda_l1);
            const double value = static_cast<double>(objective.item());
            if (!std::isfinite(value))
                throw ValueError("training diverged: non-finite loss in epoch " +
                                 std::to_string(epoch) + ", batch " + std::to_string(batches));
            backward(objective);
            adam.step();
            loss_sum += value;
            ++batches;
        }
        report.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
        report.val_accuracies.push_back(evaluate(model, val, cfg.batch_size));
        report.stop_epoch = epoch;
        if (stopper.observe(report.val_accuracies.back())) best_state = model.state_snapshot();
        if (stopper.should_stop()) break;
    }

    report.best_val_accuracy = stopper.best();
    report.best_epoch = stopper.best_epoch();
    model.state_restore(best_state);
    model.eval();
    if (test != nullptr) report.test_accuracy = evaluate(model, *test, cfg.batch_size);
    return report;
}

struct FoldResult {
    std::string held_out_session;
    double accuracy = 0.0;
    FitReport report;
};

struct CrossvalResult {
    std::vector<FoldResult> folds;
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation over folds
};

// Leave-one-session-out driver: one fold per session, each trained from a
// fresh seeded model. Folds are independent; jobs > 1 runs them concurrently.
template <typename S = float>
CrossvalResult loso_crossval(const SubjectData& subject, const TrainConfig& cfg,
                             ModelKind kind, int jobs = 1) {
    cfg.validate();
    if (subject.sessions.empty() || subject.sessions[0].recordings.empty())
        throw DataError("subject " + subject.subject_id + " has no recordings");
    const EegRecording& first = subject.sessions[0].recordings[0];

    ModelConfig mc;
    mc.fs = first.fs;
    mc.num_channels = first.channels();
    mc.segment_len = static_cast<int>(std::llround(cfg.window_s * first.fs));

    const auto folds = build_loso_folds(subject, mc.segment_len, cfg.step_samples,
                                        cfg.val_fraction, cfg.seed, cfg.chronological);

    auto run_fold = [&](std::size_t f) {
        Model<S> model = build_variant<S>(kind, mc, cfg.seed);
        FoldResult result;
        result.held_out_session = folds[f].held_out_session;
        result.report = fit(model, folds[f].train, folds[f].val, cfg, &folds[f].test);
        result.accuracy = result.report.test_accuracy;
        return result;
    };

    CrossvalResult out;
    out.folds.resize(folds.size());
    if (jobs <= 1) {
        for (std::size_t f = 0; f < folds.size(); ++f) out.folds[f] = run_fold(f);
    } else {
        std::vector<std::future<FoldResult>> futures;
        for (std::size_t f = 0; f < folds.size(); ++f)
            futures.push_back(std::async(std::launch::async, run_fold, f));
        for (std::size_t f = 0; f < folds.size(); ++f) out.folds[f] = futures[f].get();
    }

    for (const auto& fr : out.folds) out.mean += fr.accuracy;
    out.mean /= static_cast<double>(out.folds.size());
    for (const auto& fr : out.folds) {
        const double d = fr.accuracy - out.mean;
        out.stddev += d * d;
    }
    out.stddev = std::sqrt(out.stddev / static_cast<double>(out.folds.size()));
    return out;
}

}  // namespace tsception
