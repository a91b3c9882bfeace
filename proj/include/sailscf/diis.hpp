#pragma once

#include <deque>
#include <optional>

#include "sailscf/integrals.hpp"
#include "sailscf/types.hpp"

namespace sailscf {

/// Commutator residual transformed to the orthonormal basis:
///   R = F P S - S P F,  Rt = X^T R X.
/// Antisymmetric; vanishes iff (F, P) commute in the orthonormal basis.
Mat diis_residual(const Mat& F, const Mat& P, const BasisContext& ctx);

/// Pulay DIIS state: bounded FIFO of (Fock, orthonormal-basis residual)
/// pairs plus the coefficients of the last solve.
class DiisState {
public:
    explicit DiisState(int capacity = 8) : capacity_(capacity) {}

    void push(const Mat& F, const Mat& residual);
    int size() const { return static_cast<int>(entries_.size()); }
    int capacity() const { return capacity_; }
    const Mat& fock(int i) const { return entries_[i].F; }
    const Mat& residual(int i) const { return entries_[i].R; }
    const Vec& last_coefficients() const { return last_coefficients_; }
    void drop_oldest() { entries_.pop_front(); }

    friend Mat diis_extrapolate(DiisState& state);

private:
    struct Entry {
        Mat F;
        Mat R;
    };
    int capacity_;
    std::deque<Entry> entries_;
    Vec last_coefficients_;
};

/// Solves the bordered Pulay system for the given Gram matrix of
/// residuals. Returns nullopt when the system is numerically singular
/// (condition estimate above 1e12).
std::optional<Vec> solve_pulay(const Mat& gram);

/// Pulay extrapolation F_diis = sum_i a_i F^(i) with sum a_i = 1.
/// A singular bordered system drops the oldest entry and retries; with a
/// single entry left the latest Fock matrix is returned unmodified.
Mat diis_extrapolate(DiisState& state);

} // namespace sailscf
