#pragma once

// Independent numerical oracles for the integral engine. Nothing here
// shares code or algorithm with the Hermite-recursion path: overlaps,
// kinetic and dipole integrals are brute-force Gauss-Legendre grids over
// primitive pairs, nuclear attraction uses a singularity-centered
// spherical quadrature, and the electron repulsion oracle combines the
// Gaussian product expansion with classical shell electrostatics and an
// outer 3-D grid.

#include <vector>

#include "sailscf/chem.hpp"
#include "sailscf/types.hpp"

namespace sailscf::oracle {

/// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Boys function by direct quadrature of its definition
/// int_0^1 t^{2n} exp(-x t^2) dt.
double boys_by_quadrature(int n, double x);

/// One contracted Cartesian function (lx+ly+lz <= 1 in this project).
struct OracleFn {
    Vec3 center;
    int lx = 0, ly = 0, lz = 0;
    std::vector<double> exponents;
    std::vector<double> coefficients; // normalized contraction coefficients
};

/// Expands shells into Cartesian functions (x,y,z order for p).
std::vector<OracleFn> expand(const std::vector<Shell>& shells);

double overlap(const OracleFn& a, const OracleFn& b);
double kinetic(const OracleFn& a, const OracleFn& b);
double dipole(const OracleFn& a, const OracleFn& b, int axis);
double nuclear_attraction(const OracleFn& a, const OracleFn& b, const Molecule& mol);

/// (ab|cd) by Gaussian-product + shell-electrostatics + outer 3-D grid.
double eri(const OracleFn& a, const OracleFn& b, const OracleFn& c, const OracleFn& d);

/// Plain Monte-Carlo estimate of (ab|cd) with a seeded sampler; returns
/// the estimate and its standard error.
struct McResult {
    double value;
    double stderr_;
};
McResult eri_monte_carlo(const OracleFn& a, const OracleFn& b, const OracleFn& c,
                         const OracleFn& d, long samples, uint64_t seed);

} // namespace sailscf::oracle
