#pragma once

namespace sailscf {

/// Boys function F_n(x) = int_0^1 t^{2n} exp(-x t^2) dt.
/// Hybrid evaluation: convergent ascending series below the crossover,
/// closed-form asymptotic tail above it, both followed by stable downward
/// recursion. Absolute accuracy better than 1e-12 on [0, 60] for n <= 8.
double boys(int n, double x);

/// Fills out[0..nmax] with F_0(x) .. F_nmax(x).
void boys_array(int nmax, double x, double* out);

} // namespace sailscf
