#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "autood/errors.hpp"

namespace autood {

// Dense row-major tensor of doubles. All training numerics are 64-bit.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw ShapeError("tensor data length does not match shape product");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        t.data.assign(t.data.size(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor from(std::initializer_list<double> v, std::vector<int> s) {
        return Tensor(std::move(s), std::vector<double>(v));
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    void fill(double v) { data.assign(data.size(), v); }
    void zero() { fill(0.0); }

    std::string shape_str() const;
};

using TensorMap = std::map<std::string, Tensor>;

// Human-readable "[a,b,c]" for error messages.
std::string shape_to_string(const std::vector<int>& s);

}  // namespace autood
