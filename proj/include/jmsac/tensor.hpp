#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "jmsac/rng.hpp"

namespace jmsac {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) {
        if (e < 0) throw std::invalid_argument("negative tensor extent");
        n *= e;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

// Flat buffer with value semantics and an explicit uninitialized mode, so hot
// ops that fully overwrite their output skip the zero fill.
template <typename S>
class Buf {
public:
    Buf() = default;
    Buf(size_t n, bool zero) : p_(zero ? new S[n]() : new S[n]), n_(n) {}
    Buf(const Buf& o) : p_(o.n_ ? new S[o.n_] : nullptr), n_(o.n_) {
        if (n_) std::copy(o.p_.get(), o.p_.get() + n_, p_.get());
    }
    Buf(Buf&&) noexcept = default;
    Buf& operator=(const Buf& o) {
        if (this != &o) {
            Buf tmp(o);
            *this = std::move(tmp);
        }
        return *this;
    }
    Buf& operator=(Buf&&) noexcept = default;

    size_t size() const { return n_; }
    S* data() { return p_.get(); }
    const S* data() const { return p_.get(); }
    S& operator[](size_t i) { return p_[i]; }
    const S& operator[](size_t i) const { return p_[i]; }

private:
    std::unique_ptr<S[]> p_;
    size_t n_ = 0;
};

} // namespace detail

// Dense row-major tensor with value semantics. Training paths instantiate
// S=float; verification oracles instantiate S=double.
template <typename S>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), true) {}
    Tensor(Shape shape, S fill) : Tensor(std::move(shape)) {
        std::fill(data_.data(), data_.data() + data_.size(), fill);
    }
    Tensor(Shape shape, const std::vector<S>& data) : shape_(std::move(shape)) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape_))
            throw std::invalid_argument("tensor data length does not match shape " + shape_str(shape_));
        data_ = detail::Buf<S>(data.size(), false);
        std::copy(data.begin(), data.end(), data_.data());
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, S v) { return Tensor(std::move(shape), v); }

    // Allocated but not zero-filled; caller must write every element.
    static Tensor uninit(Shape shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = detail::Buf<S>(static_cast<size_t>(shape_numel(t.shape_)), false);
        return t;
    }

    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
        Tensor t = uninit(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.gaussian() * stddev);
        return t;
    }

    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
        Tensor t = uninit(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t extent(int64_t d) const { return shape_[static_cast<size_t>(d)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.size() == 0; }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }

    S& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const S& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    S& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
    const S& at(std::initializer_list<int64_t> idx) const {
        return data_[static_cast<size_t>(offset(idx))];
    }

    Tensor reshaped(Shape ns) const {
        if (shape_numel(ns) != numel())
            throw std::invalid_argument("reshape numel mismatch: " + shape_str(shape_) + " -> " + shape_str(ns));
        Tensor t = *this;
        t.shape_ = std::move(ns);
        return t;
    }

    void fill(S v) { std::fill(data_.data(), data_.data() + data_.size(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (size_t i = 0; i < data_.size(); ++i)
            if (!std::isfinite(static_cast<double>(data_[i]))) return false;
        return true;
    }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> t(shape_);
        for (int64_t i = 0; i < numel(); ++i) t[i] = static_cast<T>(data_[static_cast<size_t>(i)]);
        return t;
    }

private:
    int64_t offset(std::initializer_list<int64_t> idx) const {
        if (static_cast<int64_t>(idx.size()) != rank())
            throw std::invalid_argument("index rank mismatch");
        int64_t off = 0;
        size_t d = 0;
        for (int64_t i : idx) {
            if (i < 0 || i >= shape_[d]) throw std::out_of_range("tensor index out of range");
            off = off * shape_[d] + i;
            ++d;
        }
        return off;
    }

    Shape shape_;
    detail::Buf<S> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Plain-tensor row gather (rank-2 input).
template <typename S>
Tensor<S> gather_rows_tensor(const Tensor<S>& x, const std::vector<int64_t>& idx) {
    if (x.rank() != 2) throw std::invalid_argument("gather_rows_tensor expects rank-2");
    const int64_t cols = x.extent(1);
    Tensor<S> out({static_cast<int64_t>(idx.size()), cols});
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= x.extent(0)) throw std::out_of_range("gather_rows_tensor index");
        std::copy(x.data() + idx[i] * cols, x.data() + (idx[i] + 1) * cols,
                  out.data() + static_cast<int64_t>(i) * cols);
    }
    return out;
}

} // namespace jmsac
