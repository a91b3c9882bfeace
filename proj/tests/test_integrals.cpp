#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "oracle/quadrature.hpp"
#include "oracle/reference.hpp"
#include "sailscf/boys.hpp"
#include "sailscf/integrals.hpp"
#include "sailscf/rng.hpp"

using namespace sailscf;

namespace {

Molecule h2_at(double bohr) {
    Molecule m;
    m.name = "H2";
    m.atoms = {{1, Vec3(0, 0, 0)}, {1, Vec3(0, 0, bohr)}};
    return m;
}

const char* kWaterXyz =
    "3\nwater\n"
    "O 0.000000 0.000000 0.117300\n"
    "H 0.000000 0.757200 -0.469200\n"
    "H 0.000000 -0.757200 -0.469200\n";

} // namespace

TEST_CASE("Boys function matches its quadrature definition to 1e-12 on [0,60]") {
    for (int n = 0; n <= 6; ++n)
        for (double x : {0.0, 1e-8, 0.05, 0.5, 1.0, 3.7, 10.0, 25.0, 34.9, 35.1, 45.0, 60.0}) {
            double ref = oracle::boys_by_quadrature(n, x);
            CHECK(std::abs(boys(n, x) - ref) < 1e-12);
        }
    // downward-recursion array path agrees with scalar path
    double F[5];
    boys_array(4, 17.3, F);
    for (int n = 0; n <= 4; ++n) CHECK(std::abs(F[n] - boys(n, 17.3)) < 1e-13);
}

TEST_CASE("single H atom: S = [[1]]") {
    Molecule m;
    m.atoms = {{1, Vec3(0, 0, 0)}, {1, Vec3(0, 0, 40.0)}}; // far-away partner keeps N_e even
    auto shells = load_basis(m, builtin_sto3g());
    auto one = one_electron_integrals(shells, m);
    CHECK(std::abs(one.S(0, 0) - 1.0) < 1e-10);
    CHECK(std::abs(one.S(1, 1) - 1.0) < 1e-10);
}

TEST_CASE("H2 off-diagonal overlap matches 3-D quadrature and the textbook value") {
    Molecule m = h2_at(1.4);
    auto shells = load_basis(m, builtin_sto3g());
    auto one = one_electron_integrals(shells, m);
    auto fns = oracle::expand(shells);
    double s01 = oracle::overlap(fns[0], fns[1]);
    CHECK(std::abs(one.S(0, 1) - s01) < 1e-6);
    // standard zeta=1.24 minimal-basis H2 at R = 1.4 a0
    CHECK(std::abs(one.S(0, 1) - 0.6593) < 5e-4);
    CHECK(std::abs(one.T(0, 0) - 0.7600) < 5e-4);
}

TEST_CASE("translation invariance of S, T and Vne") {
    Molecule m = parse_xyz(kWaterXyz);
    Molecule shifted = m;
    for (auto& a : shifted.atoms) a.position += Vec3(1, 2, 3);
    auto s1 = load_basis(m, builtin_sto3g());
    auto s2 = load_basis(shifted, builtin_sto3g());
    auto one1 = one_electron_integrals(s1, m);
    auto one2 = one_electron_integrals(s2, shifted);
    CHECK((one1.S - one2.S).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((one1.T - one2.T).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((one1.Vne - one2.Vne).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("near-linear dependence rejected via smallest overlap eigenvalue") {
    // two essentially identical s shells on the same center
    Molecule m;
    m.atoms = {{1, Vec3(0, 0, 0)}, {1, Vec3(0, 0, 1.4)}};
    const char* basis =
        "H 0\nS 1 1.00\n 1.0 1.0\nS 1 1.00\n 0.9999999 1.0\n****\n";
    auto shells = load_basis(m, basis);
    CHECK_THROWS_WITH_AS(one_electron_integrals(shells, m), doctest::Contains("singular"), Error);
}

TEST_CASE("H2 (00|00) matches the direct numerical Coulomb oracle and Monte Carlo") {
    Molecule m = h2_at(1.4);
    auto shells = load_basis(m, builtin_sto3g());
    auto eri = two_electron_integrals(shells);
    auto fns = oracle::expand(shells);
    double q = oracle::eri(fns[0], fns[0], fns[0], fns[0]);
    CHECK(std::abs(eri(0, 0, 0, 0) - q) < 1e-4);
    CHECK(std::abs(eri(0, 0, 0, 0) - 0.7746) < 5e-4); // textbook anchor

    auto mc = oracle::eri_monte_carlo(fns[0], fns[0], fns[0], fns[0], 4000000, 20240817);
    CHECK(std::abs(eri(0, 0, 0, 0) - mc.value) < 5.0 * mc.stderr_ + 1e-6);
}

TEST_CASE("mirrored storage: (01|23) equals (10|32) exactly") {
    Molecule m = parse_xyz(kWaterXyz);
    auto shells = load_basis(m, builtin_sto3g());
    auto eri = two_electron_integrals(shells);
    CHECK(eri(0, 1, 2, 3) == eri(1, 0, 3, 2));
    CHECK(eri(0, 1, 2, 3) == eri(2, 3, 0, 1));
    CHECK(eri(4, 2, 6, 1) == eri(2, 4, 1, 6));
}

TEST_CASE("relabeling the two H atoms permutes the ERI tensor consistently") {
    Molecule m;
    m.atoms = {{1, Vec3(0.1, -0.2, 0)}, {1, Vec3(0, 0, 1.4)}};
    Molecule swapped = m;
    std::swap(swapped.atoms[0], swapped.atoms[1]);
    auto e1 = two_electron_integrals(load_basis(m, builtin_sto3g()));
    auto e2 = two_electron_integrals(load_basis(swapped, builtin_sto3g()));
    int perm[2] = {1, 0};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int d = 0; d < 2; ++d)
                    CHECK(std::abs(e1(a, b, c, d) - e2(perm[a], perm[b], perm[c], perm[d])) < 1e-12);
}

TEST_CASE("memory cap rejection carries the required byte count") {
    Molecule m = parse_xyz(kWaterXyz);
    auto shells = load_basis(m, builtin_sto3g());
    CHECK_THROWS_WITH_AS(two_electron_integrals(shells, 1000), doctest::Contains("bytes"), Error);
}

TEST_CASE("inverse_sqrt_overlap: identity, scalar, random SPD") {
    CHECK((inverse_sqrt_overlap(Mat::Identity(3, 3)) - Mat::Identity(3, 3)).norm() < 1e-12);

    Mat s1(1, 1);
    s1 << 4.0;
    CHECK(std::abs(inverse_sqrt_overlap(s1)(0, 0) - 0.5) < 1e-12);

    SplitMix64 rng(11);
    Mat A(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) A(i, j) = rng.next_symmetric(1.0);
    Mat SPD = A * A.transpose() + 0.5 * Mat::Identity(5, 5);
    Mat X = inverse_sqrt_overlap(SPD);
    CHECK((X.transpose() * SPD * X - Mat::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((X - X.transpose()).cwiseAbs().maxCoeff() < 1e-12);

    Mat tiny = Mat::Identity(2, 2) * 1e-9;
    CHECK_THROWS_AS(inverse_sqrt_overlap(tiny), Error);
}

TEST_CASE("context invariants on water: S diag, ERI symmetry, X^T S X") {
    Molecule m = parse_xyz(kWaterXyz);
    auto ctx = build_context(m, builtin_sto3g());
    CHECK(ctx.B == 7);
    CHECK(ctx.n_occ == 5);
    for (int i = 0; i < ctx.B; ++i) CHECK(std::abs(ctx.S(i, i) - 1.0) < 1e-10);
    CHECK((ctx.X.transpose() * ctx.S * ctx.X - Mat::Identity(ctx.B, ctx.B)).cwiseAbs().maxCoeff() <
          1e-10);

    SplitMix64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        int a = int(rng.next_double() * ctx.B), b = int(rng.next_double() * ctx.B);
        int c = int(rng.next_double() * ctx.B), d = int(rng.next_double() * ctx.B);
        double v = ctx.eri(a, b, c, d);
        CHECK(std::abs(v - ctx.eri(b, a, c, d)) < 1e-10);
        CHECK(std::abs(v - ctx.eri(a, b, d, c)) < 1e-10);
        CHECK(std::abs(v - ctx.eri(c, d, a, b)) < 1e-10);
        CHECK(std::isfinite(v));
    }
}

TEST_CASE("one- and two-electron integrals match the quadrature oracles on water") {
    Molecule m = parse_xyz(kWaterXyz);
    auto shells = load_basis(m, builtin_sto3g());
    auto one = one_electron_integrals(shells, m);
    auto eri = two_electron_integrals(shells);
    auto fns = oracle::expand(shells);
    int B = static_cast<int>(fns.size());

    SplitMix64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        int a = int(rng.next_double() * B), b = int(rng.next_double() * B);
        CHECK(std::abs(one.S(a, b) - oracle::overlap(fns[a], fns[b])) < 1e-6);
        CHECK(std::abs(one.T(a, b) - oracle::kinetic(fns[a], fns[b])) < 1e-6);
        int ax = trial % 3;
        CHECK(std::abs(one.D[ax](a, b) - oracle::dipole(fns[a], fns[b], ax)) < 1e-6);
    }
    for (int trial = 0; trial < 6; ++trial) {
        int a = int(rng.next_double() * B), b = int(rng.next_double() * B);
        CHECK(std::abs(one.Vne(a, b) - oracle::nuclear_attraction(fns[a], fns[b], m)) < 1e-6);
    }
    for (int trial = 0; trial < 8; ++trial) {
        int a = int(rng.next_double() * B), b = int(rng.next_double() * B);
        int c = int(rng.next_double() * B), d = int(rng.next_double() * B);
        CHECK(std::abs(eri(a, b, c, d) - oracle::eri(fns[a], fns[b], fns[c], fns[d])) < 1e-4);
    }
}

TEST_CASE("McMurchie-Davidson agrees with the Obara-Saika reference elementwise") {
    Molecule m = parse_xyz(kWaterXyz);
    auto shells = load_basis(m, builtin_sto3g());
    auto one = one_electron_integrals(shells, m);
    auto eri = two_electron_integrals(shells);
    auto ref = reference::compute_integrals(shells, m);
    CHECK((one.S - ref.S).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((one.T - ref.T).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((one.Vne - ref.Vne).cwiseAbs().maxCoeff() < 1e-10);
    double dmax = 0;
    for (int a = 0; a < ref.B; ++a)
        for (int b = 0; b < ref.B; ++b)
            for (int c = 0; c < ref.B; ++c)
                for (int d = 0; d < ref.B; ++d)
                    dmax = std::max(dmax, std::abs(eri(a, b, c, d) - ref.g(a, b, c, d)));
    CHECK(dmax < 1e-10);
}

TEST_CASE("context binary cache round trip via content hash") {
    Molecule m = h2_at(1.4);
    std::string dir = std::filesystem::temp_directory_path() / "sailscf_ctx_cache";
    std::filesystem::remove_all(dir);
    auto ctx1 = build_context_cached(m, builtin_sto3g(), dir);
    auto ctx2 = build_context_cached(m, builtin_sto3g(), dir); // loads from disk
    CHECK(ctx1.content_hash == ctx2.content_hash);
    CHECK((ctx1.S - ctx2.S).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ctx1.Hcore - ctx2.Hcore).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ctx1.eri.data() == ctx2.eri.data());
    CHECK(ctx1.e_nuc == ctx2.e_nuc);
    std::filesystem::remove_all(dir);
}
