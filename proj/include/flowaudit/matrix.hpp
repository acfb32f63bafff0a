#pragma once

#include <cstddef>
#include <vector>

namespace flowaudit {

// Row-major dense matrix of doubles. Small helper, value semantics.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }

    double& operator()(size_t i, size_t j) { return data_[i * cols_ + j]; }
    double operator()(size_t i, size_t j) const { return data_[i * cols_ + j]; }

    double* row(size_t i) { return data_.data() + i * cols_; }
    const double* row(size_t i) const { return data_.data() + i * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    size_t size() const { return data_.size(); }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool operator==(const Matrix&) const = default;

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace flowaudit
