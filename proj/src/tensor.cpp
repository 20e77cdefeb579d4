// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#include "prunevis/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>

#include "prunevis/errors.hpp"

namespace prunevis {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void check_finite(std::span<const double> values, const char* what) {
    constexpr std::uint64_t exponent = 0x7ff0000000000000ULL;
    std::uint64_t any = 0;
    for (double v : values) any |= ((std::bit_cast<std::uint64_t>(v) & exponent) == exponent);
    if (any) throw NumericError(std::string("non-finite value in ") + what);
}

Tensor::Tensor() : shape_{0}, data_(std::make_shared<const std::vector<double>>()) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != data.size()) {
        throw ShapeError("tensor shape " + shape_str(shape_) + " does not match buffer of " +
                         std::to_string(data.size()) + " values");
    }
    check_finite(data, "tensor construction");
    data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> data;
    std::size_t ncols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
        if (r.size() != ncols) throw ShapeError("ragged matrix literal");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), ncols}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 1) return 1;
    if (shape_.size() != 2) throw ShapeError("rows() on non-matrix " + shape_str(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 1) return shape_[0];
    if (shape_.size() != 2) throw ShapeError("cols() on non-matrix " + shape_str(shape_));
    return shape_[1];
}

std::span<const double> Tensor::data() const { return {data_->data(), data_->size()}; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor " + shape_str(shape_));
    return (*data_)[0];
}

std::vector<double> Tensor::to_vector() const { return *data_; }

bool Tensor::bit_equal(const Tensor& other) const {
    if (shape_ != other.shape_) return false;
    return std::memcmp(data_->data(), other.data_->data(), data_->size() * sizeof(double)) == 0;
}

}  // namespace prunevis
