#pragma once

// Row-oriented matrix storage (dense and compressed sparse row) and the
// plain-text coordinate / vector file formats.

#include <algorithm>
#include <concepts>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "sqne/linalg.hpp"

namespace sqne {

/// Anything the block iteration can work on row by row.
template <typename M>
concept RowMatrix = requires(const M& a, std::size_t i, ConstView x, std::span<double> y, double s) {
    { a.rows() } -> std::convertible_to<std::size_t>;
    { a.cols() } -> std::convertible_to<std::size_t>;
    { a.row_dot(i, x) } -> std::convertible_to<double>;
    { a.row_norm2(i) } -> std::convertible_to<double>;
    a.add_scaled_row(i, s, y);
};

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    ConstView row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    double row_dot(std::size_t i, ConstView x) const {
        const double* r = data_.data() + i * cols_;
        double s = 0.0;
        for (std::size_t j = 0; j < cols_; ++j)
            s += r[j] * x[j];
        return s;
    }

    double row_norm2(std::size_t i) const { return norm2(row(i)); }

    void add_scaled_row(std::size_t i, double alpha, std::span<double> y) const {
        const double* r = data_.data() + i * cols_;
        for (std::size_t j = 0; j < cols_; ++j)
            y[j] += alpha * r[j];
    }

    void scale_row(std::size_t i, double c) {
        for (std::size_t j = 0; j < cols_; ++j)
            (*this)(i, j) *= c;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row, 0-based indices.
class CsrMatrix {
public:
    CsrMatrix() = default;

    /// Builds from unordered triplets; duplicates are summed.
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
        std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        CsrMatrix m;
        m.rows_ = rows;
        m.cols_ = cols;
        m.row_ptr_.assign(rows + 1, 0);
        for (std::size_t e = 0; e < entries.size(); ++e) {
            const auto& t = entries[e];
            if (t.row >= rows || t.col >= cols)
                throw InvalidArgument(fmt::format("CsrMatrix: entry ({}, {}) outside {}x{}", t.row, t.col, rows, cols));
            if (!m.col_idx_.empty() && e > 0 && entries[e - 1].row == t.row && entries[e - 1].col == t.col) {
                m.values_.back() += t.value;
                continue;
            }
            m.col_idx_.push_back(t.col);
            m.values_.push_back(t.value);
            ++m.row_ptr_[t.row + 1];
        }
        for (std::size_t i = 0; i < rows; ++i)
            m.row_ptr_[i + 1] += m.row_ptr_[i];
        return m;
    }

    static CsrMatrix from_dense(const DenseMatrix& d) {
        std::vector<Triplet> t;
        for (std::size_t i = 0; i < d.rows(); ++i)
            for (std::size_t j = 0; j < d.cols(); ++j)
                if (d(i, j) != 0.0)
                    t.push_back({i, j, d(i, j)});
        return from_triplets(d.rows(), d.cols(), std::move(t));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }

    std::size_t row_begin(std::size_t i) const { return row_ptr_[i]; }
    std::size_t row_end(std::size_t i) const { return row_ptr_[i + 1]; }
    std::size_t col_index(std::size_t e) const { return col_idx_[e]; }
    double value(std::size_t e) const { return values_[e]; }

    double row_dot(std::size_t i, ConstView x) const {
        double s = 0.0;
        for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e)
            s += values_[e] * x[col_idx_[e]];
        return s;
    }

    double row_norm2(std::size_t i) const {
        double s = 0.0;
        for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e)
            s += values_[e] * values_[e];
        return s;
    }

    double row_sum(std::size_t i) const {
        double s = 0.0;
        for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e)
            s += values_[e];
        return s;
    }

    void add_scaled_row(std::size_t i, double alpha, std::span<double> y) const {
        for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e)
            y[col_idx_[e]] += alpha * values_[e];
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> values_;
};

template <RowMatrix M>
Vector multiply(const M& a, ConstView x) {
    if (x.size() != a.cols())
        throw InvalidArgument("multiply: dimension mismatch");
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        y[i] = a.row_dot(i, x);
    return y;
}

// ---------------------------------------------------------------------------
// text formats
//
// Coordinate file: header "rows cols nnz", then one "i j value" per line,
// 1-based. Lines starting with '%' are comments. Vector file: one value per
// line. Values are written with 17 significant digits so files round-trip.

inline void write_coordinate(std::ostream& out, const CsrMatrix& a) {
    out << fmt::format("{} {} {}\n", a.rows(), a.cols(), a.nnz());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t e = a.row_begin(i); e < a.row_end(i); ++e)
            out << fmt::format("{} {} {:.17g}\n", i + 1, a.col_index(e) + 1, a.value(e));
}

inline CsrMatrix read_coordinate(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line[0] != '%' && line.find_first_not_of(" \t\r") != std::string::npos)
                return true;
        }
        return false;
    };
    if (!next_line())
        throw InvalidArgument("coordinate file: missing header");
    std::size_t rows = 0, cols = 0, nnz = 0;
    {
        std::istringstream hs(line);
        if (!(hs >> rows >> cols >> nnz))
            throw InvalidArgument(fmt::format("coordinate file line {}: expected 'rows cols nnz'", lineno));
    }
    std::vector<Triplet> t;
    t.reserve(nnz);
    for (std::size_t e = 0; e < nnz; ++e) {
        if (!next_line())
            throw InvalidArgument(fmt::format("coordinate file: expected {} entries, found {}", nnz, e));
        std::istringstream ls(line);
        std::size_t i = 0, j = 0;
        double v = 0.0;
        if (!(ls >> i >> j >> v) || i == 0 || j == 0 || i > rows || j > cols)
            throw InvalidArgument(fmt::format("coordinate file line {}: bad entry '{}'", lineno, line));
        t.push_back({i - 1, j - 1, v});
    }
    return CsrMatrix::from_triplets(rows, cols, std::move(t));
}

inline void write_vector(std::ostream& out, ConstView v) {
    for (double x : v)
        out << fmt::format("{:.17g}\n", x);
}

inline Vector read_vector(std::istream& in) {
    Vector v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '%' || line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        double x = 0.0;
        if (!(ls >> x))
            throw InvalidArgument(fmt::format("vector file line {}: not a number: '{}'", lineno, line));
        v.push_back(x);
    }
    return v;
}

inline void write_coordinate_file(const std::string& path, const CsrMatrix& a) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot open " + path + " for writing");
    write_coordinate(out, a);
}

inline CsrMatrix read_coordinate_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open " + path);
    return read_coordinate(in);
}

inline void write_vector_file(const std::string& path, ConstView v) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot open " + path + " for writing");
    write_vector(out, v);
}

inline Vector read_vector_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open " + path);
    return read_vector(in);
}

}  // namespace sqne
