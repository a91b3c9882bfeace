#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sailscf/chem.hpp"
#include "sailscf/types.hpp"

namespace sailscf {

/// Dense two-electron repulsion tensor (mu nu | lambda sigma) with full
/// 8-fold permutational symmetry, stored as B^4 doubles.
class EriTensor {
public:
    EriTensor() = default;
    EriTensor(int b) : b_(b), v_(static_cast<size_t>(b) * b * b * b, 0.0) {}

    int dim() const { return b_; }
    double operator()(int mu, int nu, int la, int si) const {
        return v_[idx(mu, nu, la, si)];
    }
    double& at(int mu, int nu, int la, int si) { return v_[idx(mu, nu, la, si)]; }
    const std::vector<double>& data() const { return v_; }
    std::vector<double>& data() { return v_; }

    /// Coulomb contraction  J_{mu nu} = sum_{ls} (mn|ls) P_{ls}.
    Mat coulomb(const Mat& P) const;
    /// Exchange contraction K_{mu nu} = sum_{ls} (ml|ns) P_{ls}.
    Mat exchange(const Mat& P) const;

private:
    size_t idx(int mu, int nu, int la, int si) const {
        return ((static_cast<size_t>(mu) * b_ + nu) * b_ + la) * b_ + si;
    }
    int b_ = 0;
    std::vector<double> v_;
};

struct OneElectron {
    Mat S;
    Mat T;
    Mat Vne;
    std::array<Mat, 3> D; // electron-position integrals <mu| r_a |nu>
};

/// Everything the solver needs for one molecule at a fixed basis:
/// one-electron matrices, dipole integrals, the dense ERI tensor, the
/// symmetric orthogonalizer and its inverse, and bookkeeping scalars.
struct BasisContext {
    Mat S;
    Mat T;
    Mat Vne;
    Mat Hcore;
    std::array<Mat, 3> D;
    EriTensor eri;
    Mat X;    // S^{-1/2}
    Mat Xinv; // S^{+1/2}
    double e_nuc = 0.0;
    int B = 0;
    int n_occ = 0;
    std::vector<Shell> shells;
    std::vector<int> atom_of_function; // owning atom per basis function
    std::vector<int> atomic_numbers;   // per atom
    uint64_t content_hash = 0;
};

/// McMurchie-Davidson evaluation of S, T, Vne and the three dipole
/// matrices. Throws on (near-)linear dependence: smallest eigenvalue of
/// S below 1e-8.
OneElectron one_electron_integrals(const std::vector<Shell>& shells, const Molecule& mol);

/// Dense ERI tensor; the unique class under 8-fold symmetry is computed
/// once and mirrored. Throws when B^4 doubles exceed `memory_cap_bytes`.
EriTensor two_electron_integrals(const std::vector<Shell>& shells,
                                 size_t memory_cap_bytes = size_t(1) << 30);

/// X = S^{-1/2} from the symmetric eigendecomposition, with an eigenvalue
/// floor of 1e-8. X^T S X = I to machine precision.
Mat inverse_sqrt_overlap(const Mat& S);

double nuclear_repulsion(const Molecule& mol);

/// Content hash of (geometry, basis text); keys the binary context cache
/// and the label metadata.
uint64_t geometry_basis_hash(const Molecule& mol, const std::string& basis_text);

/// Builds the full context (integrals + orthogonalizer + scalars).
BasisContext build_context(const Molecule& mol, const std::string& basis_text,
                           size_t memory_cap_bytes = size_t(1) << 30);

/// Binary dump/load of a BasisContext, little-endian arrays behind a
/// versioned header, keyed by content hash. load returns nullopt when the
/// file is missing or the hash/version does not match.
void save_context(const BasisContext& ctx, const std::string& path);
std::optional<BasisContext> load_context(const std::string& path, uint64_t expected_hash);

/// Cache-aware build: looks for <dir>/<hash>.ctx, otherwise builds and
/// stores. Empty dir means no caching.
BasisContext build_context_cached(const Molecule& mol, const std::string& basis_text,
                                  const std::string& cache_dir,
                                  size_t memory_cap_bytes = size_t(1) << 30);

} // namespace sailscf
