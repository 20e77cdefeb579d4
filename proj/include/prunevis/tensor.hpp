// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace prunevis {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// Tensors are immutable once built: the buffer is shared between copies, so
/// passing them by value is cheap. Construction validates that the buffer
/// length matches the shape and that every value is finite.
class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    /// 2-D tensor from nested rows; all rows must have the same length.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_ ? data_->size() : 0; }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    double operator[](std::size_t i) const { return (*data_)[i]; }
    double at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }
    /// Single value of a one-element tensor.
    double item() const;

    /// Copy of the buffer, for building a modified tensor.
    std::vector<double> to_vector() const;

    bool bit_equal(const Tensor& other) const;

private:
    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
};

/// Throws NumericError naming `what` if any value is NaN or infinite.
void check_finite(std::span<const double> values, const char* what);

}  // namespace prunevis
