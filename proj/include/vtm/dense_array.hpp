// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vtm {

/// Row-major array of 32-bit floats with an arbitrary shape.
///
/// Most of the library works on rank-2 arrays (tokens x channels); the file
/// formats use higher ranks. Reductions over the data are carried out in
/// double precision by the callers.
class DenseArray {
public:
    DenseArray() = default;
    explicit DenseArray(std::vector<std::size_t> shape, float fill = 0.0f);
    DenseArray(std::vector<std::size_t> shape, std::vector<float> data);

    static DenseArray matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
    static DenseArray from_rows(std::initializer_list<std::initializer_list<float>> rows);
    static DenseArray scalar(float v) { return DenseArray({1, 1}, std::vector<float>{v}); }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Rank-2 accessors; throw ShapeError on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }
    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }
    std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * shape_[1], shape_[1]}; }
    std::span<const float> row(std::size_t r) const noexcept {
        return {data_.data() + r * shape_[1], shape_[1]};
    }

    /// Same data, new shape with equal element count.
    DenseArray reshaped(std::vector<std::size_t> shape) const;

    std::string shape_string() const;

    bool operator==(const DenseArray&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<float> data_;
};

std::string format_shape(std::span<const std::size_t> shape);

/// Largest |a - b| over all elements; shapes must agree.
double max_abs_diff(const DenseArray& a, const DenseArray& b);

bool all_finite(const DenseArray& a);

}  // namespace vtm
