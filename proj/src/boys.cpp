#include "sailscf/boys.hpp"

#include <cmath>

namespace sailscf {

namespace {

constexpr double kSeriesCrossover = 35.0;

// F_n(x) by the ascending series e^{-x} sum_k (2x)^k / prod_{m=0..k}(2n+2m+1).
double boys_series(int n, double x) {
    double term = 1.0 / (2.0 * n + 1.0);
    double sum = term;
    for (int k = 1; k < 400; ++k) {
        term *= 2.0 * x / (2.0 * n + 2.0 * k + 1.0);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return std::exp(-x) * sum;
}

// Large-x tail: F_n(x) ~ (2n-1)!! / 2^{n+1} * sqrt(pi / x^{2n+1}),
// with error O(e^{-x}) which is below 1e-14 past the crossover.
double boys_asymptotic(int n, double x) {
    double dfact = 1.0;
    for (int m = 2 * n - 1; m > 1; m -= 2) dfact *= m;
    return dfact / std::pow(2.0, n + 1) * std::sqrt(M_PI / std::pow(x, 2 * n + 1));
}

} // namespace

double boys(int n, double x) {
    if (x < kSeriesCrossover) return boys_series(n, x);
    return boys_asymptotic(n, x);
}

void boys_array(int nmax, double x, double* out) {
    out[nmax] = boys(nmax, x);
    if (nmax == 0) return;
    double ex = std::exp(-x);
    for (int m = nmax; m > 0; --m) out[m - 1] = (2.0 * x * out[m] + ex) / (2.0 * m - 1.0);
}

} // namespace sailscf
