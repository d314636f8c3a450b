#include "tsception/gradsuite.hpp"

#include <cmath>
#include <vector>

#include "tsception/model.hpp"
#include "tsception/ops.hpp"
#include "tsception/rng.hpp"

namespace tsception {

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
    Tensor<double> t(std::move(shape), requires_grad);
    for (long i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
}

// fixed random projection: reduces any output to a scalar while staying
// sensitive to each coordinate independently
Tensor<double> project(const Tensor<double>& out, const Tensor<double>& direction) {
    return sum(mul(out, direction));
}

// Identity whose backward scales gradients by 1.02 — a deliberately wrong
// derivative used as the suite's negative control.
Tensor<double> wrong_backward_identity(const Tensor<double>& x) {
    Tensor<double> out(x.shape(), x.vec());
    detail::attach(out, {x}, [=](detail::TensorNode<double>* self) {
        auto xn = x.node();
        return [=]() {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (long i = 0; i < static_cast<long>(self->grad.size()); ++i)
                xn->grad[static_cast<std::size_t>(i)] += 1.02 * self->grad[static_cast<std::size_t>(i)];
        };
    });
    return out;
}

void merge(GradSuiteReport& suite, const std::string& component, const GradCheckReport& r) {
    suite.coords_checked += r.coords_checked;
    if (r.max_rel_err > suite.max_rel_err) {
        suite.max_rel_err = r.max_rel_err;
        suite.worst = component + ": " + r.worst;
    }
}

}  // namespace

GradSuiteReport gradcheck_suite(std::uint64_t seed, bool inject_conv_fault) {
    GradSuiteReport suite;

    {  // conv2d over input, weight, and bias
        Rng rng(mix_seed(seed, 1));
        auto x = random_tensor({2, 2, 4, 10}, rng);
        auto w = random_tensor({3, 2, 2, 3}, rng);
        auto b = random_tensor({3}, rng);
        auto dir = random_tensor({2, 3, 3, 8}, rng, false);
        auto loss = [&] {
            const auto weight = inject_conv_fault ? wrong_backward_identity(w) : w;
            return project(conv2d(x, weight, b), dir);
        };
        merge(suite, "conv2d", gradient_check(loss, {x, w, b}));
    }
    {  // relu, sampled away from the kink
        Rng rng(mix_seed(seed, 2));
        Tensor<double> x({3, 7}, true);
        for (long i = 0; i < x.size(); ++i) {
            const double v = rng.normal();
            x.data()[i] = (std::abs(v) + 0.1) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        }
        auto dir = random_tensor({3, 7}, rng, false);
        auto loss = [&] { return project(relu(x), dir); };
        merge(suite, "relu", gradient_check(loss, {x}));
    }
    {  // avgpool2d with a truncated trailing column (W = 9, pool 2)
        Rng rng(mix_seed(seed, 3));
        auto x = random_tensor({2, 3, 4, 9}, rng);
        auto dir = random_tensor({2, 3, 2, 4}, rng, false);
        auto loss = [&] { return project(avgpool2d(x, 2, 2), dir); };
        merge(suite, "avgpool2d", gradient_check(loss, {x}));
    }
    {  // batchnorm2d in training mode: batch statistics are part of the graph
        Rng rng(mix_seed(seed, 4));
        auto x = random_tensor({4, 3, 2, 5}, rng);
        auto gamma = random_tensor({3}, rng);
        auto beta = random_tensor({3}, rng);
        auto dir = random_tensor({4, 3, 2, 5}, rng, false);
        BatchNormState<double> state(3);
        auto loss = [&]() mutable {
            return project(batchnorm2d(x, gamma, beta, state, true), dir);
        };
        merge(suite, "batchnorm2d", gradient_check(loss, {x, gamma, beta}));
    }
    {  // linear over input, weight, and bias
        Rng rng(mix_seed(seed, 5));
        auto x = random_tensor({4, 6}, rng);
        auto w = random_tensor({6, 5}, rng);
        auto b = random_tensor({5}, rng);
        auto dir = random_tensor({4, 5}, rng, false);
        auto loss = [&] { return project(linear(x, w, b), dir); };
        merge(suite, "linear", gradient_check(loss, {x, w, b}));
    }
    {  // softmax cross entropy
        Rng rng(mix_seed(seed, 6));
        auto logits = random_tensor({5, 3}, rng);
        std::vector<int> labels;
        for (int i = 0; i < 5; ++i) labels.push_back(static_cast<int>(rng.uniform_int(3)));
        auto loss = [&] { return softmax_cross_entropy(logits, labels); };
        merge(suite, "softmax_cross_entropy", gradient_check(loss, {logits}));
    }
    {  // composed miniature model in training mode (dropout disabled so the
       // loss is deterministic; batch norm still runs on batch statistics)
        Rng rng(mix_seed(seed, 7));
        ModelConfig mc;
        mc.fs = 32;
        mc.segment_len = 128;
        mc.dropout_rate = 0.0;
        Model<double> model = build_variant<double>(ModelKind::tsception, mc, seed);
        model.train();
        auto x = random_tensor({2, 1, mc.num_channels, mc.segment_len}, rng);
        const std::vector<int> labels = {0, 1};
        auto loss = [&] { return softmax_cross_entropy(model.forward(x), labels); };
        std::vector<Tensor<double>> params = model.parameters();
        params.push_back(x);
        merge(suite, "tsception_miniature",
              gradient_check(loss, params, 1e-5, 24, mix_seed(seed, 8)));
    }

    return suite;
}

}  // namespace tsception
