#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sniforge::eval {

// rows = samples, cols = classes; rows on the probability simplex
using ProbMatrix = std::vector<std::vector<double>>;

void check_same_shape(std::span<const ProbMatrix* const> mats);

// Element-wise unweighted mean; the softmax-averaging ensemble.
ProbMatrix average_softmax(std::span<const ProbMatrix* const> mats);
ProbMatrix average_softmax(const std::vector<ProbMatrix>& mats);

// argmax per row, ties broken by lowest class index
std::vector<int> argmax_rows(const ProbMatrix& m);

// argmax over sum_i weights[i] * mats[i]
std::vector<int> weighted_argmax(std::span<const ProbMatrix* const> mats, std::span<const double> weights);

inline constexpr std::array<double, 4> kRfDlWeights{0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};

// argmax_y 1/2 rf + 1/6 d1 + 1/6 d2 + 1/6 d3 (weights overridable)
std::vector<int> combined_rf_dl(const ProbMatrix& rf, const ProbMatrix& d1, const ProbMatrix& d2,
                                const ProbMatrix& d3, std::span<const double> weights = kRfDlWeights);

double accuracy(std::span<const int> pred, std::span<const int> truth);

struct Prf {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

// Macro average over all n_classes; a class with a zero denominator
// contributes 0.
Prf macro_prf(std::span<const int> pred, std::span<const int> truth, int n_classes);

// Accuracy restricted to samples of each true class; classes absent from
// truth are omitted.
std::map<std::string, double> per_sni_accuracy(std::span<const int> pred, std::span<const int> truth,
                                               std::span<const std::string> classes);

}  // namespace sniforge::eval
