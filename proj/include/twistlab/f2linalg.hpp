#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"

namespace twistlab {

using Word = std::uint64_t;
inline constexpr std::size_t word_bits = 64;

// Dense F2 matrix, rows packed into 64-bit words, unused high bits kept zero.
class BitMatrix {
public:
    BitMatrix() = default;
    BitMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), stride_((cols + word_bits - 1) / word_bits),
          bits_(rows * stride_, 0) {}

    static BitMatrix identity(std::size_t n) {
        BitMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m.set(i, i, true);
        return m;
    }

    static BitMatrix from_rows(const std::vector<std::vector<int>>& rows) {
        std::size_t cols = rows.empty() ? 0 : rows.front().size();
        BitMatrix m(rows.size(), cols);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != cols) throw dimension_error("ragged row list");
            for (std::size_t j = 0; j < cols; ++j) m.set(i, j, rows[i][j] & 1);
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t words_per_row() const { return stride_; }

    bool get(std::size_t i, std::size_t j) const {
        return (bits_[i * stride_ + j / word_bits] >> (j % word_bits)) & 1u;
    }
    void set(std::size_t i, std::size_t j, bool v) {
        Word& w = bits_[i * stride_ + j / word_bits];
        Word mask = Word{1} << (j % word_bits);
        w = v ? (w | mask) : (w & ~mask);
    }
    void flip(std::size_t i, std::size_t j) {
        bits_[i * stride_ + j / word_bits] ^= Word{1} << (j % word_bits);
    }

    std::span<const Word> row(std::size_t i) const {
        return {bits_.data() + i * stride_, stride_};
    }
    std::span<Word> row(std::size_t i) { return {bits_.data() + i * stride_, stride_}; }

    void swap_rows(std::size_t i, std::size_t j) {
        if (i == j) return;
        std::swap_ranges(bits_.begin() + i * stride_, bits_.begin() + (i + 1) * stride_,
                         bits_.begin() + j * stride_);
    }
    void add_row(std::size_t dst, std::size_t src) {
        for (std::size_t w = 0; w < stride_; ++w) bits_[dst * stride_ + w] ^= bits_[src * stride_ + w];
    }

    bool is_square() const { return rows_ == cols_; }

    bool is_alternating() const {
        if (!is_square()) return false;
        for (std::size_t i = 0; i < rows_; ++i) {
            if (get(i, i)) return false;
            for (std::size_t j = i + 1; j < cols_; ++j)
                if (get(i, j) != get(j, i)) return false;
        }
        return true;
    }

    bool padding_clear() const {
        if (cols_ % word_bits == 0) return true;
        Word mask = ~Word{0} << (cols_ % word_bits);
        for (std::size_t i = 0; i < rows_; ++i)
            if (bits_[i * stride_ + stride_ - 1] & mask) return false;
        return true;
    }

    BitMatrix transposed() const {
        BitMatrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                if (get(i, j)) t.set(j, i, true);
        return t;
    }

    std::string to_string() const {
        std::string s;
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) s += get(i, j) ? '1' : '0';
            s += '\n';
        }
        return s;
    }

    friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

private:
    std::size_t rows_ = 0, cols_ = 0, stride_ = 0;
    std::vector<Word> bits_;
};

namespace detail {

// Rank of up to 64 columns held one word per row; rows are clobbered.
inline std::size_t rank_single_word(Word* rows, std::size_t n) {
    std::size_t rank = 0;
    for (std::size_t r = 0; r < n && rank < n; ++r) {
        // pick the lowest set bit of the next nonzero row as pivot
        Word v = rows[r];
        if (!v) continue;
        Word pivot = v & (~v + 1);
        for (std::size_t s = r + 1; s < n; ++s)
            if (rows[s] & pivot) rows[s] ^= v;
        ++rank;
    }
    return rank;
}

}  // namespace detail

inline std::size_t rank(const BitMatrix& m) {
    const std::size_t n = m.rows(), stride = m.words_per_row();
    if (n == 0 || m.cols() == 0) return 0;
    if (stride == 1) {
        Word small[64];
        std::vector<Word> big;
        Word* rows = small;
        if (n > 64) {
            big.resize(n);
            rows = big.data();
        }
        for (std::size_t i = 0; i < n; ++i) rows[i] = m.row(i)[0];
        return detail::rank_single_word(rows, n);
    }
    BitMatrix a = m;
    std::size_t rank = 0;
    for (std::size_t col = 0; col < a.cols() && rank < n; ++col) {
        std::size_t w = col / word_bits;
        Word bit = Word{1} << (col % word_bits);
        std::size_t piv = rank;
        while (piv < n && !(a.row(piv)[w] & bit)) ++piv;
        if (piv == n) continue;
        a.swap_rows(rank, piv);
        for (std::size_t r = rank + 1; r < n; ++r)
            if (a.row(r)[w] & bit) a.add_row(r, rank);
        ++rank;
    }
    return rank;
}

inline std::size_t kernel_rank(const BitMatrix& m) {
    if (!m.is_square())
        throw dimension_error("kernel_rank needs a square matrix, got " + std::to_string(m.rows()) +
                              "x" + std::to_string(m.cols()));
    return m.cols() - rank(m);
}

// Basis of {v : M v = 0}, one vector per row of the result.
inline BitMatrix nullspace(const BitMatrix& m) {
    BitMatrix a = m;
    const std::size_t n = a.rows(), c = a.cols();
    std::vector<std::size_t> pivot_col;
    std::size_t rank = 0;
    for (std::size_t col = 0; col < c && rank < n; ++col) {
        std::size_t piv = rank;
        while (piv < n && !a.get(piv, col)) ++piv;
        if (piv == n) continue;
        a.swap_rows(rank, piv);
        for (std::size_t r = 0; r < n; ++r)
            if (r != rank && a.get(r, col)) a.add_row(r, rank);
        pivot_col.push_back(col);
        ++rank;
    }
    std::vector<bool> is_pivot(c, false);
    for (auto pc : pivot_col) is_pivot[pc] = true;
    BitMatrix basis(c - rank, c);
    std::size_t out = 0;
    for (std::size_t f = 0; f < c; ++f) {
        if (is_pivot[f]) continue;
        basis.set(out, f, true);
        for (std::size_t r = 0; r < rank; ++r)
            if (a.get(r, f)) basis.set(out, pivot_col[r], true);
        ++out;
    }
    return basis;
}

enum class MatrixKind { alternating, general };

inline const char* to_string(MatrixKind k) {
    return k == MatrixKind::alternating ? "alternating" : "general";
}

inline std::size_t free_bits(std::size_t n, MatrixKind kind) {
    return kind == MatrixKind::alternating ? n * (n - (n > 0)) / 2 : n * n;
}

inline BitMatrix sample_matrix(std::size_t n, MatrixKind kind, Rng& rng) {
    BitMatrix m(n, n);
    if (kind == MatrixKind::general) {
        Word mask = (n % word_bits) ? (Word{1} << (n % word_bits)) - 1 : ~Word{0};
        for (std::size_t i = 0; i < n; ++i) {
            auto r = m.row(i);
            for (std::size_t w = 0; w < r.size(); ++w) r[w] = rng();
            r[r.size() - 1] &= mask;
        }
        return m;
    }
    Word pool = 0;
    unsigned left = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (left == 0) {
                pool = rng();
                left = 64;
            }
            bool b = pool & 1u;
            pool >>= 1;
            --left;
            if (b) {
                m.set(i, j, true);
                m.set(j, i, true);
            }
        }
    return m;
}

inline constexpr std::size_t enumeration_bit_limit = 30;

// All matrices of a class in lexicographic order of their free bits, the free
// bits read in row-major order (upper triangle only for alternating).
class MatrixEnumeration {
public:
    MatrixEnumeration(std::size_t n, MatrixKind kind) : n_(n), kind_(kind) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (kind == MatrixKind::general || j > i) slots_.emplace_back(i, j);
        if (slots_.size() > enumeration_bit_limit)
            throw capacity_error("enumerating " + std::to_string(slots_.size()) +
                                 " free bits exceeds the limit of " +
                                 std::to_string(enumeration_bit_limit));
    }

    std::uint64_t size() const { return std::uint64_t{1} << slots_.size(); }
    std::size_t n() const { return n_; }
    MatrixKind kind() const { return kind_; }

    BitMatrix at(std::uint64_t index) const {
        BitMatrix m(n_, n_);
        const std::size_t f = slots_.size();
        for (std::size_t s = 0; s < f; ++s) {
            if (!((index >> (f - 1 - s)) & 1u)) continue;
            auto [i, j] = slots_[s];
            m.set(i, j, true);
            if (kind_ == MatrixKind::alternating) m.set(j, i, true);
        }
        return m;
    }

    class iterator {
    public:
        using iterator_category = std::input_iterator_tag;
        using value_type = BitMatrix;
        using difference_type = std::ptrdiff_t;
        iterator() = default;
        iterator(const MatrixEnumeration* e, std::uint64_t i) : e_(e), i_(i) {}
        BitMatrix operator*() const { return e_->at(i_); }
        iterator& operator++() {
            ++i_;
            return *this;
        }
        iterator operator++(int) {
            auto t = *this;
            ++i_;
            return t;
        }
        bool operator==(const iterator& o) const { return i_ == o.i_; }

    private:
        const MatrixEnumeration* e_ = nullptr;
        std::uint64_t i_ = 0;
    };

    iterator begin() const { return {this, 0}; }
    iterator end() const { return {this, size()}; }

private:
    std::size_t n_;
    MatrixKind kind_;
    std::vector<std::pair<std::size_t, std::size_t>> slots_;
};

inline MatrixEnumeration enumerate_matrices(std::size_t n, MatrixKind kind) {
    return MatrixEnumeration(n, kind);
}

}  // namespace twistlab
