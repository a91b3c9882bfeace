#pragma once

#include <map>
#include <string>
#include <vector>

#include "sailscf/integrals.hpp"
#include "sailscf/types.hpp"

namespace sailscf {

/// Converged spherically-averaged atomic densities per element, each in
/// the element's own minimal basis. Built once per exchange fraction and
/// shared; these SCF cycles are amortized setup cost and never counted
/// in per-molecule ERIC budgets.
struct AtomicDensityTable {
    double alpha = 1.0;
    std::map<int, Mat> densities;

    const Mat& at(int z) const {
        auto it = densities.find(z);
        if (it == densities.end())
            throw Error("AtomicDensityTable: no entry for Z=" + std::to_string(z));
        return it->second;
    }
};

/// Fractionally-occupied restricted atomic SCF (equal thirds across the
/// p components), converged to 1e-10; throws on non-convergence.
Mat atomic_density(int z, double alpha, const std::string& basis_text);

AtomicDensityTable build_atomic_density_table(const std::vector<int>& elements, double alpha,
                                              const std::string& basis_text);

enum class ClassicalGuess { core, gwh, sad };

ClassicalGuess classical_guess_from_name(const std::string& name);
const char* classical_guess_name(ClassicalGuess kind);

struct PurifyResult {
    Mat P;
    bool degenerate_boundary = false;
};

/// Projects a symmetric matrix onto the valid-density manifold: occupy
/// the n_occ largest natural orbitals of S^1/2 P S^1/2 with occupation 2.
/// A natural-occupation gap below 1e-10 at the occupation boundary is
/// resolved deterministically by orbital index and flagged.
PurifyResult purify(const Mat& P_raw, const BasisContext& ctx, int n_occ);

/// Block-diagonal superposition of atomic densities, pre-purification.
Mat sad_raw(const BasisContext& ctx, const AtomicDensityTable& table);

/// Classical initial guesses. None of them spends a Fock build.
Mat classical_guess(ClassicalGuess kind, const BasisContext& ctx, const AtomicDensityTable& table);

// ---------------------------------------------------------------------
// Learned delta guesses: invariant per-pair features drive a small MLP
// that emits one multiplicative gain and one additive diagonal shift per
// atom-pair block of the base matrix (SAD density or SAD Fock).
// ---------------------------------------------------------------------

enum class Ansatz { delta_density, delta_fock };

struct FeatureSpec {
    double r_cut = 10.0; // Bohr
    int n_rbf = 16;
    std::vector<int> elements = {1, 3, 6, 7, 8, 9};

    int dim() const { return 2 * static_cast<int>(elements.size()) + n_rbf; }
    int element_index(int z) const;
    /// Symmetric pair feature: one-hot of the sorted (Z,Z) pair plus a
    /// Gaussian radial expansion of the distance.
    Vec pair_features(int z1, int z2, double r) const;
};

struct GuessModel {
    Ansatz ansatz = Ansatz::delta_density;
    FeatureSpec feature_spec;
    int hidden = 64;
    Mat W1, W2, W3;
    Vec b1, b2, b3;
    // training metadata
    double alpha = 1.0;
    uint64_t basis_hash = 0;
    uint64_t seed = 0;

    /// Hidden layers get small random weights; the output layer starts at
    /// zero so a fresh model is exactly the identity on its base matrix.
    static GuessModel init(Ansatz ansatz, const FeatureSpec& fs, uint64_t seed, int hidden = 64);

    int parameter_count() const;
    /// Flattened parameter order: W1, b1, W2, b2, W3, b3 (column-major).
    Vec flatten() const;
    void unflatten(const Vec& theta);
};

void save_checkpoint(const GuessModel& model, const std::string& path);
GuessModel load_checkpoint(const std::string& path);

/// Per-molecule block structure: pair list, invariant features, and the
/// 0/1 gain masks plus identity-pattern shift masks (entries matched by
/// within-atom position, angular type and Cartesian component, so the
/// induced map is exactly rotation-equivariant).
struct PairBlocks {
    std::vector<std::pair<int, int>> pairs; // i <= j over atoms
    Mat features;                           // dim x n_pairs
    std::vector<Mat> gain_masks;
    std::vector<Mat> shift_masks;
};

PairBlocks pair_blocks(const Molecule& mol, const BasisContext& ctx, const FeatureSpec& fs);

/// Plain (non-recording) model evaluation: per-pair gains and shifts.
struct BlockScalars {
    Vec gains;  // n_pairs
    Vec shifts; // n_pairs
};
BlockScalars eval_block_scalars(const GuessModel& model, const PairBlocks& blocks);

/// Applies gains/shifts to a base matrix through the masks.
Mat apply_block_scaling(const Mat& base, const PairBlocks& blocks, const BlockScalars& s);

struct ModelGuessResult {
    Mat P0;
    Mat raw;                 // pre-purification prediction (delta_density)
                             // or the shifted Fock F^(-1) (delta_fock)
    int fock_builds_spent = 0;
    bool fell_back_to_sad = false;
    bool degenerate_flag = false;
};

/// Learned guess on top of the SAD base. delta_density spends no Fock
/// build; delta_fock spends exactly one (it flows into ERIC). Non-finite
/// model output falls back to plain SAD and flags the sample.
ModelGuessResult model_guess(const GuessModel& model, const Molecule& mol,
                             const BasisContext& ctx, const AtomicDensityTable& table);

} // namespace sailscf
