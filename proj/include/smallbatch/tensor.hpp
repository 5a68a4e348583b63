#pragma once
// Named rank-1/rank-2 tensors of 64-bit floats and the keyed collections
// that carry model parameters and gradients.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace smallbatch {

struct Tensor {
    std::string name;
    std::int64_t rows = 0;
    std::int64_t cols = 1;   // 1 for rank-1 tensors
    int rank = 1;
    bool hidden = false;     // routes a rank-2 tensor to Muon's orthogonalized update
    std::vector<double> data;

    static Tensor vector(std::string name, std::int64_t n) {
        Tensor t;
        t.name = std::move(name);
        t.rows = n;
        t.cols = 1;
        t.rank = 1;
        t.data.assign(static_cast<std::size_t>(n), 0.0);
        return t;
    }

    static Tensor matrix(std::string name, std::int64_t r, std::int64_t c, bool hidden = false) {
        Tensor t;
        t.name = std::move(name);
        t.rows = r;
        t.cols = c;
        t.rank = 2;
        t.hidden = hidden;
        t.data.assign(static_cast<std::size_t>(r * c), 0.0);
        return t;
    }

    std::int64_t numel() const { return rows * cols; }

    double& at(std::int64_t i, std::int64_t j) { return data[static_cast<std::size_t>(i * cols + j)]; }
    double at(std::int64_t i, std::int64_t j) const { return data[static_cast<std::size_t>(i * cols + j)]; }

    bool same_shape(const Tensor& o) const {
        return rank == o.rank && rows == o.rows && cols == o.cols;
    }
};

// Ordered collection of uniquely named tensors.
struct TensorSet {
    std::vector<Tensor> tensors;

    Tensor& add(Tensor t) {
        for (const auto& existing : tensors) {
            if (existing.name == t.name) {
                throw std::invalid_argument("duplicate tensor name: " + t.name);
            }
        }
        tensors.push_back(std::move(t));
        return tensors.back();
    }

    Tensor& operator[](std::size_t i) { return tensors[i]; }
    const Tensor& operator[](std::size_t i) const { return tensors[i]; }
    std::size_t size() const { return tensors.size(); }

    Tensor& find(const std::string& name) {
        for (auto& t : tensors) {
            if (t.name == name) return t;
        }
        throw std::invalid_argument("no tensor named " + name);
    }
    const Tensor& find(const std::string& name) const {
        return const_cast<TensorSet*>(this)->find(name);
    }

    // Zero-filled copy with the same names/shapes/tags.
    TensorSet zeros_like() const {
        TensorSet out = *this;
        for (auto& t : out.tensors) {
            t.data.assign(t.data.size(), 0.0);
        }
        return out;
    }

    std::int64_t numel() const {
        std::int64_t n = 0;
        for (const auto& t : tensors) n += t.numel();
        return n;
    }
};

using ParamSet = TensorSet;
using GradSet = TensorSet;

// Shape-only descriptor, for accounting over models too large to materialize.
struct TensorShape {
    std::string name;
    std::int64_t rows = 0;
    std::int64_t cols = 1;
    int rank = 1;
    bool hidden = false;

    static TensorShape vector(std::string name, std::int64_t n) {
        return {std::move(name), n, 1, 1, false};
    }
    static TensorShape matrix(std::string name, std::int64_t r, std::int64_t c,
                              bool hidden = false) {
        return {std::move(name), r, c, 2, hidden};
    }

    std::int64_t numel() const { return rows * cols; }
};

using ShapeSet = std::vector<TensorShape>;

inline ShapeSet shapes_of(const TensorSet& set) {
    ShapeSet out;
    out.reserve(set.size());
    for (const auto& t : set.tensors) {
        out.push_back({t.name, t.rows, t.cols, t.rank, t.hidden});
    }
    return out;
}

inline void require_same_structure(const TensorSet& a, const TensorSet& b, const char* what) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(what) + ": tensor count mismatch");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name || !a[i].same_shape(b[i])) {
            throw std::invalid_argument(std::string(what) + ": shape or name mismatch at tensor " +
                                        a[i].name);
        }
    }
}

}  // namespace smallbatch
