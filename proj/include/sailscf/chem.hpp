#pragma once

#include <array>
#include <string>
#include <vector>

#include "sailscf/types.hpp"

namespace sailscf {

struct Atom {
    int atomic_number = 0;
    Vec3 position = Vec3::Zero(); // Bohr
};

/// A molecular geometry. Charge is fixed at zero and the electron count
/// must be even (spin-restricted closed shell only).
struct Molecule {
    std::vector<Atom> atoms;
    int charge = 0;
    std::string name;

    int electron_count() const;
    int heavy_atom_count() const; // atoms with Z > 1

    /// Enforces the geometry invariants: at least one atom, pairwise
    /// distances > 0.1 Bohr, even electron count. Throws Error.
    void validate() const;
};

/// One contracted Gaussian shell. angular_momentum 0 = s, 1 = p.
/// Contraction coefficients carry primitive norms and an overall
/// rescaling so the contracted self-overlap is exactly 1.
struct Shell {
    int center_atom = 0;
    Vec3 center = Vec3::Zero(); // Bohr
    int angular_momentum = 0;
    std::vector<double> exponents;
    std::vector<double> coefficients;

    int n_functions() const { return 2 * angular_momentum + 1; }
};

int atomic_number_from_symbol(const std::string& symbol);
const char* symbol_from_atomic_number(int z);

/// Parses XYZ text (count line, comment line, `symbol x y z` in Angstrom).
/// Positions are converted to Bohr. Throws Error with a line number on
/// malformed input, unknown symbols, or an odd electron count.
Molecule parse_xyz(const std::string& text, const std::string& name = "");

/// Canonical XYZ emitter: coordinates in Angstrom, 12 significant digits.
std::string emit_xyz(const Molecule& mol);

/// Parses a Gaussian-94 basis block and instantiates shells for every atom,
/// in atom order. SP blocks expand to an s shell and a p shell sharing
/// exponents. Shells are renormalized to unit self-overlap.
std::vector<Shell> load_basis(const Molecule& mol, const std::string& basis_text);

/// The embedded STO-3G parameters (H, Li, C, N, O, F) in Gaussian-94 text.
const std::string& builtin_sto3g();

/// Displaces every coordinate by an independent uniform draw in
/// [-amplitude, amplitude] Bohr using the SplitMix64 stream of `seed`.
/// Retries with derived sub-seeds (up to 100) when the minimum-distance
/// invariant fails; throws Error when retries are exhausted.
Molecule perturb_geometry(const Molecule& mol, double amplitude, uint64_t seed);

/// Number of basis functions contributed by a shell list.
int basis_dimension(const std::vector<Shell>& shells);

} // namespace sailscf
