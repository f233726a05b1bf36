#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ssa {

// Row-major dense matrix of doubles. All internal computation is 64-bit;
// 32-bit floats appear only at file-format boundaries (io.hpp).
// Constructors that accept data reject non-finite values.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols); // zero-filled
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }

    bool all_finite() const;
    bool same_shape(const DenseMatrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// a (m x k) * b (k x n)
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// a (m x k) * b^T with b (n x k); avoids materializing transposes.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

double dot(std::span<const double> a, std::span<const double> b);

bool all_finite(std::span<const double> xs);

} // namespace ssa
