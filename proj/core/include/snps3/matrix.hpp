#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "snps3/errors.hpp"

namespace snps3 {

/// Dense row-major matrix.
template <typename T>
class BasicMatrix {
public:
    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) throw ArgumentError("matrix data length does not match its shape");
    }

    template <typename U>
    static BasicMatrix cast(const BasicMatrix<U>& other) {
        BasicMatrix out(other.rows(), other.cols());
        for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] = static_cast<T>(other.data()[i]);
        return out;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    bool operator==(const BasicMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

/// 32-bit storage for features read from or written to disk.
using FeatureMatrix = BasicMatrix<float>;
/// 64-bit working precision used by the kernels and the gradient checker.
using Matrix64 = BasicMatrix<double>;

/// batch x n_l x dim block of token features.
template <typename T>
class BasicTokenBlock {
public:
    BasicTokenBlock() = default;
    BasicTokenBlock(std::size_t batch, std::size_t n_l, std::size_t dim)
        : batch_(batch), n_l_(n_l), dim_(dim), data_(batch * n_l * dim, T{}) {}
    BasicTokenBlock(std::size_t batch, std::size_t n_l, std::size_t dim, std::vector<T> data)
        : batch_(batch), n_l_(n_l), dim_(dim), data_(std::move(data)) {
        if (data_.size() != batch_ * n_l_ * dim_) throw ArgumentError("token block data length does not match its shape");
    }

    std::size_t batch() const { return batch_; }
    std::size_t n_l() const { return n_l_; }
    std::size_t dim() const { return dim_; }

    std::span<T> token(std::size_t b, std::size_t l) { return {data_.data() + (b * n_l_ + l) * dim_, dim_}; }
    std::span<const T> token(std::size_t b, std::size_t l) const {
        return {data_.data() + (b * n_l_ + l) * dim_, dim_};
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    /// View as a (batch * n_l) x dim matrix.
    BasicMatrix<T> flatten() const { return BasicMatrix<T>(batch_ * n_l_, dim_, data_); }

private:
    std::size_t batch_ = 0;
    std::size_t n_l_ = 0;
    std::size_t dim_ = 0;
    std::vector<T> data_;
};

using TokenBlock = BasicTokenBlock<float>;
using TokenBlock64 = BasicTokenBlock<double>;

}  // namespace snps3
