// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/dense_array.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "vtm/errors.hpp"

namespace vtm {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

DenseArray::DenseArray(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

DenseArray::DenseArray(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (product(shape_) != data_.size()) {
        throw ShapeError("shape " + format_shape(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
    }
}

DenseArray DenseArray::matrix(std::size_t rows, std::size_t cols, float fill) {
    return DenseArray({rows, cols}, fill);
}

DenseArray DenseArray::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<float> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged rows in from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return DenseArray({r, c}, std::move(data));
}

std::size_t DenseArray::rows() const {
    if (shape_.size() != 2) throw ShapeError("expected a matrix, got shape " + shape_string());
    return shape_[0];
}

std::size_t DenseArray::cols() const {
    if (shape_.size() != 2) throw ShapeError("expected a matrix, got shape " + shape_string());
    return shape_[1];
}

DenseArray DenseArray::reshaped(std::vector<std::size_t> shape) const {
    return DenseArray(std::move(shape), data_);
}

std::string DenseArray::shape_string() const { return format_shape(shape_); }

std::string format_shape(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

double max_abs_diff(const DenseArray& a, const DenseArray& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

bool all_finite(const DenseArray& a) {
    for (float v : a.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace vtm
