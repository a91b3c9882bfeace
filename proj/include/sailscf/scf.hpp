#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sailscf/integrals.hpp"
#include "sailscf/types.hpp"

namespace sailscf {

struct ScfOptions {
    int max_iterations = 100;
    double energy_threshold = 1e-9;   // Hartree
    double gradient_threshold = 1e-6; // RMS orbital gradient
    double exchange_fraction = 1.0;   // alpha; 1.0 = pure Hartree-Fock
    bool diis_enabled = true;
    int diis_history = 8;
    bool count_init_fock_builds = false;

    void validate() const {
        if (max_iterations < 1) throw Error("ScfOptions: max_iterations must be >= 1");
        if (energy_threshold <= 0 || gradient_threshold <= 0)
            throw Error("ScfOptions: thresholds must be > 0");
        if (exchange_fraction <= 0 || exchange_fraction > 1)
            throw Error("ScfOptions: exchange fraction must be in (0, 1]");
    }
};

/// Per-run Fock-build counter; the unit of cost in ERIC accounting.
struct FockCounter {
    int count = 0;
};

/// One SCF iterate. For t = 0 the orbitals are the natural orbitals of
/// the initial density and `eps` holds its natural occupations; for
/// t >= 1 they solve the (DIIS-extrapolated) Fock matrix of the previous
/// body and `eps` holds orbital energies.
struct ScfIterate {
    Mat P;
    Mat F;
    Mat C; // occupied columns first
    Vec eps;
    double E = 0.0;
    double g_rms = 0.0;
    double residual_norm = 0.0; // Frobenius norm of the orthonormal-basis residual
};

struct ScfTrajectory {
    std::vector<ScfIterate> iterates;
    int fock_build_count = 0;
    bool converged = false;
    bool diverged = false;
    int iterations = 0; // loop bodies executed
    std::optional<int> iterations_to_converge;

    const ScfIterate& final() const { return iterates.back(); }
};

/// F = Hcore + J(P) - (alpha/2) K(P); increments the counter by exactly 1.
Mat fock_build(const Mat& P, const BasisContext& ctx, double alpha, FockCounter& counter);

/// Roothaan-Hall solve via the symmetric orthogonalizer:
/// F' = X^T F X, F' = U diag(eps) U^T (ascending), C = X U.
struct RoothaanSolution {
    Mat C;
    Vec eps;
};
RoothaanSolution solve_roothaan(const Mat& F, const BasisContext& ctx);

/// P = 2 C_occ C_occ^T over the first n_occ columns.
Mat density_from_orbitals(const Mat& C, int n_occ);

/// E = 1/2 sum P o (Hcore + F) + E_nuc for the scaled-exchange family.
double energy(const Mat& P, const Mat& F, const BasisContext& ctx);

/// RMS of the occupied-virtual orbital gradient C_occ^T F C_virt;
/// defined as 0 when there are no virtuals.
double orbital_gradient_rms(const Mat& C, const Mat& F, int n_occ);

/// Natural orbitals of a density: eigenvectors of S^1/2 P S^1/2 mapped
/// back by X, ordered by descending occupation (occupied first).
struct NaturalOrbitals {
    Mat C;
    Vec occupations; // descending
};
NaturalOrbitals natural_orbitals(const Mat& P, const BasisContext& ctx);

/// The SCF fixed-point loop: fock_build -> (DIIS) -> solve_roothaan ->
/// density, one Fock build per loop body. Converged when |dE| and the
/// gradient RMS both drop below their thresholds. Non-convergence within
/// max_iterations returns converged = false (not an error); |E| > 1e6
/// sets the diverged flag. `guess_fock_builds` is added to the counter
/// when options.count_init_fock_builds is set.
ScfTrajectory scf_run(const Mat& P0, const BasisContext& ctx, const ScfOptions& options,
                      int guess_fock_builds = 0);

/// Runs exactly `steps` solver steps with convergence checks disabled
/// (training mode). The trajectory has steps+1 recorded iterates
/// (t = 0..steps); the final body only pairs the last density with its
/// Fock matrix so every step contributes a supervisable iterate.
ScfTrajectory scf_run_fixed(const Mat& P0, const BasisContext& ctx, const ScfOptions& options,
                            int steps);

/// JSON trajectory export: per-iteration E, G_rms, residual norm, plus
/// the final P and C as flat row-major arrays.
std::string trajectory_to_json(const ScfTrajectory& traj, const std::string& molecule_name);

} // namespace sailscf
