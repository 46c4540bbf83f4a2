#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace sniforge::nn {

// Dense row-major tensor of doubles; rank 2 (batch, features) or rank 3
// (batch, time, channels).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::initializer_list<std::size_t> dims) : shape(dims) { data.assign(numel(), 0.0); }
    explicit Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) { data.assign(numel(), 0.0); }

    std::size_t rank() const { return shape.size(); }

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    double& at(std::size_t b, std::size_t f) { return data[b * shape[1] + f]; }
    double at(std::size_t b, std::size_t f) const { return data[b * shape[1] + f]; }

    double& at(std::size_t b, std::size_t t, std::size_t c) { return data[(b * shape[1] + t) * shape[2] + c]; }
    double at(std::size_t b, std::size_t t, std::size_t c) const {
        return data[(b * shape[1] + t) * shape[2] + c];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    std::string shape_string() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

}  // namespace sniforge::nn
