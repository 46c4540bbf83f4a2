#pragma once

// central finite-difference gradient checks shared by the unit and
// acceptance suites

#include <cmath>
#include <functional>
#include <vector>

#include "sniforge/common.hpp"
#include "sniforge/nn.hpp"

namespace gradcheck {

using sniforge::Rng;
namespace nn = sniforge::nn;

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

inline double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// max relative error between analytic grads and central differences of
// loss_fn over the given array
inline double check_array(std::vector<double>& values, const std::vector<double>& analytic,
                          const std::function<double()>& loss_fn) {
    double worst = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        double saved = values[i];
        values[i] = saved + kStep;
        double up = loss_fn();
        values[i] = saved - kStep;
        double down = loss_fn();
        values[i] = saved;
        double numeric = (up - down) / (2 * kStep);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

inline nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1, double hi = 1) {
    nn::Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Weighted-sum loss L = sum(w * layer(x)); returns the worst relative error
// over dL/dx and every parameter gradient.
inline double check_layer(nn::Layer& layer, nn::Tensor x, Rng& rng) {
    nn::Tensor probe = layer.forward(x, true);
    nn::Tensor w = random_tensor(probe.shape, rng);

    auto loss_fn = [&] {
        nn::Tensor y = layer.forward(x, true);
        double loss = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) loss += w.data[i] * y.data[i];
        return loss;
    };

    loss_fn();  // refresh caches
    nn::Tensor dx = layer.backward(w);

    double worst = check_array(x.data, dx.data, loss_fn);
    for (const nn::Param& p : layer.params()) worst = std::max(worst, check_array(*p.value, *p.grad, loss_fn));
    return worst;
}

// two stacked layers, upstream weighted-sum loss
inline double check_stack(nn::Layer& first, nn::Layer& second, nn::Tensor x, Rng& rng) {
    nn::Tensor probe = second.forward(first.forward(x, true), true);
    nn::Tensor w = random_tensor(probe.shape, rng);

    auto loss_fn = [&] {
        nn::Tensor y = second.forward(first.forward(x, true), true);
        double loss = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) loss += w.data[i] * y.data[i];
        return loss;
    };

    loss_fn();
    nn::Tensor dx = first.backward(second.backward(w));

    double worst = check_array(x.data, dx.data, loss_fn);
    for (const nn::Param& p : first.params()) worst = std::max(worst, check_array(*p.value, *p.grad, loss_fn));
    for (const nn::Param& p : second.params())
        worst = std::max(worst, check_array(*p.value, *p.grad, loss_fn));
    return worst;
}

// softmax cross-entropy on logits
inline double check_xent(nn::Tensor logits, const std::vector<int>& labels) {
    nn::SoftmaxXent loss;
    auto loss_fn = [&] { return loss.forward(logits, labels); };
    loss_fn();
    nn::Tensor g = loss.backward();
    return check_array(logits.data, g.data, loss_fn);
}

struct OpCheck {
    const char* name;
    std::function<double(Rng&)> run;  // returns worst relative error for one instance
};

// one randomized instance per op, sized small enough for finite differences
inline std::vector<OpCheck> standard_checks() {
    return {
        {"conv1d",
         [](Rng& rng) {
             std::size_t k = 2 + rng.below(2);
             std::size_t c = 1 + rng.below(3);
             std::size_t f = 1 + rng.below(4);
             std::size_t t = k + rng.below(4);
             std::size_t b = 1 + rng.below(3);
             nn::Conv1D layer(k, c, f);
             layer.init(rng);
             return check_layer(layer, random_tensor({b, t, c}, rng), rng);
         }},
        {"batchnorm",
         [](Rng& rng) {
             std::size_t c = 1 + rng.below(4);
             std::size_t t = 1 + rng.below(4);
             std::size_t b = 2 + rng.below(3);
             nn::BatchNorm layer(c);
             layer.init(rng);
             return check_layer(layer, random_tensor({b, t, c}, rng), rng);
         }},
        {"gru",
         [](Rng& rng) {
             std::size_t in = 1 + rng.below(3);
             std::size_t hid = 1 + rng.below(4);
             std::size_t b = 1 + rng.below(3);
             bool seqs = rng.uniform() < 0.5;
             nn::Gru layer(in, hid, seqs);
             layer.init(rng);
             return check_layer(layer, random_tensor({b, 5, in}, rng), rng);  // 5 time steps
         }},
        {"dense",
         [](Rng& rng) {
             std::size_t in = 1 + rng.below(6);
             std::size_t out = 1 + rng.below(6);
             std::size_t b = 1 + rng.below(4);
             nn::Dense layer(in, out);
             layer.init(rng);
             return check_layer(layer, random_tensor({b, in}, rng), rng);
         }},
        {"softmax_xent",
         [](Rng& rng) {
             std::size_t n = 2 + rng.below(5);
             std::size_t b = 1 + rng.below(5);
             nn::Tensor logits = random_tensor({b, n}, rng, -2, 2);
             std::vector<int> labels(b);
             for (auto& y : labels) y = static_cast<int>(rng.below(n));
             return check_xent(logits, labels);
         }},
    };
}

}  // namespace gradcheck
