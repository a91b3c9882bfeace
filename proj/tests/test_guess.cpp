#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "sailscf/guess.hpp"
#include "sailscf/rng.hpp"
#include "sailscf/scf.hpp"

using namespace sailscf;

namespace {

const char* kWaterXyz =
    "3\nwater\n"
    "O 0.000000 0.000000 0.117300\n"
    "H 0.000000 0.757200 -0.469200\n"
    "H 0.000000 -0.757200 -0.469200\n";

const AtomicDensityTable& table() {
    static AtomicDensityTable t =
        build_atomic_density_table({1, 3, 6, 7, 8, 9}, 1.0, builtin_sto3g());
    return t;
}

struct WaterSetup {
    Molecule mol;
    BasisContext ctx;
};

const WaterSetup& water() {
    static WaterSetup w = [] {
        WaterSetup s;
        s.mol = parse_xyz(kWaterXyz);
        s.ctx = build_context(s.mol, builtin_sto3g());
        return s;
    }();
    return w;
}

int iterations_from(const Mat& P0, const BasisContext& ctx) {
    auto traj = scf_run(P0, ctx, {});
    REQUIRE(traj.converged);
    return traj.iterations;
}

} // namespace

TEST_CASE("hydrogen atomic density is [[1.0]]") {
    Mat d = atomic_density(1, 1.0, builtin_sto3g());
    REQUIRE(d.rows() == 1);
    CHECK(d(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("atomic densities are spherical and trace to the electron count") {
    for (int z : {1, 3, 6, 7, 8, 9}) {
        const Mat& d = table().at(z);
        Molecule atom;
        atom.atoms = {{z, Vec3::Zero()}};
        auto one = one_electron_integrals(load_basis(atom, builtin_sto3g()), atom);
        CHECK(std::abs((d * one.S).trace() - z) < 1e-8);
        CHECK((d - d.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        if (z >= 3) {
            int B = static_cast<int>(d.rows());
            CHECK(std::abs(d(B - 3, B - 3) - d(B - 2, B - 2)) < 1e-8);
            CHECK(std::abs(d(B - 2, B - 2) - d(B - 1, B - 1)) < 1e-8);
        }
    }
    CHECK((table().at(8) - table().at(9)).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("core guess occupies the lowest Hcore eigenvectors") {
    Molecule m = parse_xyz("2\nh2\nH 0 0 0\nH 0 0 0.74085964\n");
    auto ctx = build_context(m, builtin_sto3g());
    Mat P0 = classical_guess(ClassicalGuess::core, ctx, table());
    auto sol = solve_roothaan(ctx.Hcore, ctx);
    CHECK((P0 - density_from_orbitals(sol.C, 1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs((P0 * ctx.S).trace() - 2.0) < 1e-10);
}

TEST_CASE("SAD on H2 starts from blockdiag([[1]],[[1]])") {
    Molecule m = parse_xyz("2\nh2\nH 0 0 0\nH 0 0 0.74085964\n");
    auto ctx = build_context(m, builtin_sto3g());
    Mat raw = sad_raw(ctx, table());
    CHECK(raw(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(raw(1, 1) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(raw(0, 1) == 0.0);
    Mat P0 = classical_guess(ClassicalGuess::sad, ctx, table());
    CHECK(std::abs((P0 * ctx.S).trace() - 2.0) < 1e-8);
    CHECK((P0 * ctx.S * P0 - 2.0 * P0).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("guess quality ordering on water: sad <= gwh <= core iterations") {
    const auto& w = water();
    int it_core = iterations_from(classical_guess(ClassicalGuess::core, w.ctx, table()), w.ctx);
    int it_gwh = iterations_from(classical_guess(ClassicalGuess::gwh, w.ctx, table()), w.ctx);
    int it_sad = iterations_from(classical_guess(ClassicalGuess::sad, w.ctx, table()), w.ctx);
    CHECK(it_sad <= it_gwh);
    CHECK(it_gwh <= it_core);
}

TEST_CASE("purify is a fixed point on valid densities") {
    const auto& w = water();
    Mat P = classical_guess(ClassicalGuess::core, w.ctx, table());
    auto r = purify(P, w.ctx, w.ctx.n_occ);
    CHECK((r.P - P).cwiseAbs().maxCoeff() < 1e-10);
    CHECK_FALSE(r.degenerate_boundary);
}

TEST_CASE("purify projects noisy densities closer than random valid ones") {
    const auto& w = water();
    SplitMix64 rng(99);
    Mat P = classical_guess(ClassicalGuess::sad, w.ctx, table());
    Mat noise(w.ctx.B, w.ctx.B);
    for (int i = 0; i < w.ctx.B; ++i)
        for (int j = 0; j < w.ctx.B; ++j) noise(i, j) = rng.next_symmetric(1e-3);
    Mat noisy = P + Mat(0.5 * (noise + noise.transpose()));
    auto r = purify(noisy, w.ctx, w.ctx.n_occ);
    CHECK(std::abs((r.P * w.ctx.S).trace() - 10.0) < 1e-8);
    CHECK((r.P * w.ctx.S * r.P - 2.0 * r.P).cwiseAbs().maxCoeff() < 1e-8);
    double own = (r.P - noisy).norm();
    for (int trial = 0; trial < 10; ++trial) {
        Mat R(w.ctx.B, w.ctx.B);
        for (int i = 0; i < w.ctx.B; ++i)
            for (int j = 0; j < w.ctx.B; ++j) R(i, j) = rng.next_symmetric(1.0);
        auto other = purify(Mat(0.5 * (R + R.transpose())), w.ctx, w.ctx.n_occ);
        CHECK(own <= (other.P - noisy).norm() + 1e-9);
    }
}

TEST_CASE("purify of the zero matrix is deterministic and flagged degenerate") {
    const auto& w = water();
    auto r1 = purify(Mat::Zero(w.ctx.B, w.ctx.B), w.ctx, w.ctx.n_occ);
    auto r2 = purify(Mat::Zero(w.ctx.B, w.ctx.B), w.ctx, w.ctx.n_occ);
    CHECK(r1.degenerate_boundary);
    CHECK((r1.P - r2.P).cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::abs((r1.P * w.ctx.S).trace() - 10.0) < 1e-8);
}

TEST_CASE("identity model reproduces purified SAD exactly (delta_density)") {
    const auto& w = water();
    GuessModel m = GuessModel::init(Ansatz::delta_density, {}, 42);
    auto res = model_guess(m, w.mol, w.ctx, table());
    CHECK(res.fock_builds_spent == 0);
    CHECK_FALSE(res.fell_back_to_sad);
    Mat sad = classical_guess(ClassicalGuess::sad, w.ctx, table());
    CHECK((res.P0 - sad).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero-residual delta_fock equals one plain Roothaan step from SAD") {
    const auto& w = water();
    GuessModel m = GuessModel::init(Ansatz::delta_fock, {}, 42);
    auto res = model_guess(m, w.mol, w.ctx, table());
    CHECK(res.fock_builds_spent == 1);
    Mat sad = classical_guess(ClassicalGuess::sad, w.ctx, table());
    FockCounter c;
    Mat F = fock_build(sad, w.ctx, 1.0, c);
    auto sol = solve_roothaan(F, w.ctx);
    CHECK((res.P0 - density_from_orbitals(sol.C, w.ctx.n_occ)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-identity model stays equivariant: rotation keeps counts and energy") {
    const auto& w = water();
    GuessModel m = GuessModel::init(Ansatz::delta_density, {}, 7);
    SplitMix64 rng(123);
    for (int i = 0; i < m.W3.rows(); ++i)
        for (int j = 0; j < m.W3.cols(); ++j) m.W3(i, j) = 0.2 * rng.next_normal();

    Eigen::AngleAxisd rot(0.62, Vec3(0.3, -1.0, 0.7).normalized());
    Molecule rm = w.mol;
    for (auto& a : rm.atoms) a.position = rot * a.position;
    auto rctx = build_context(rm, builtin_sto3g());

    auto g1 = model_guess(m, w.mol, w.ctx, table());
    auto g2 = model_guess(m, rm, rctx, table());

    auto t1 = scf_run(g1.P0, w.ctx, {});
    auto t2 = scf_run(g2.P0, rctx, {});
    REQUIRE(t1.converged);
    REQUIRE(t2.converged);
    CHECK(t1.iterations == t2.iterations);

    FockCounter c;
    double e1 = energy(g1.P0, fock_build(g1.P0, w.ctx, 1.0, c), w.ctx);
    double e2 = energy(g2.P0, fock_build(g2.P0, rctx, 1.0, c), rctx);
    CHECK(std::abs(e1 - e2) < 1e-9);
}

TEST_CASE("atom permutation conjugates the guess matrices") {
    const auto& w = water();
    GuessModel m = GuessModel::init(Ansatz::delta_density, {}, 7);
    Molecule pm = w.mol;
    std::swap(pm.atoms[1], pm.atoms[2]);
    auto pctx = build_context(pm, builtin_sto3g());
    auto g1 = model_guess(m, w.mol, w.ctx, table());
    auto g2 = model_guess(m, pm, pctx, table());
    FockCounter c;
    double e1 = energy(g1.P0, fock_build(g1.P0, w.ctx, 1.0, c), w.ctx);
    double e2 = energy(g2.P0, fock_build(g2.P0, pctx, 1.0, c), pctx);
    CHECK(std::abs(e1 - e2) < 1e-10);
    auto t1 = scf_run(g1.P0, w.ctx, {});
    auto t2 = scf_run(g2.P0, pctx, {});
    CHECK(t1.iterations == t2.iterations);
}

TEST_CASE("non-finite model output falls back to SAD with a flag") {
    const auto& w = water();
    GuessModel m = GuessModel::init(Ansatz::delta_density, {}, 1);
    m.b3[0] = std::numeric_limits<double>::quiet_NaN();
    auto res = model_guess(m, w.mol, w.ctx, table());
    CHECK(res.fell_back_to_sad);
    Mat sad = classical_guess(ClassicalGuess::sad, w.ctx, table());
    CHECK((res.P0 - sad).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint JSON round trip preserves every parameter bit") {
    GuessModel m = GuessModel::init(Ansatz::delta_fock, {}, 31337);
    SplitMix64 rng(5);
    for (int i = 0; i < m.W3.rows(); ++i)
        for (int j = 0; j < m.W3.cols(); ++j) m.W3(i, j) = rng.next_normal();
    m.alpha = 0.5;
    m.basis_hash = 0xDEADBEEFCAFEF00DULL;
    auto path = (std::filesystem::temp_directory_path() / "sailscf_ckpt_test.json").string();
    save_checkpoint(m, path);
    GuessModel r = load_checkpoint(path);
    CHECK(r.ansatz == Ansatz::delta_fock);
    CHECK(r.alpha == 0.5);
    CHECK(r.basis_hash == m.basis_hash);
    CHECK(r.seed == m.seed);
    CHECK((r.flatten() - m.flatten()).cwiseAbs().maxCoeff() == 0.0);
    std::filesystem::remove(path);
}

TEST_CASE("flatten/unflatten round trip") {
    GuessModel m = GuessModel::init(Ansatz::delta_density, {}, 2);
    Vec theta = m.flatten();
    GuessModel n = GuessModel::init(Ansatz::delta_density, {}, 3);
    n.unflatten(theta);
    CHECK((n.flatten() - theta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ERIC bookkeeping: density ansatz spends 0 builds, Fock ansatz spends 1") {
    const auto& w = water();
    auto d = model_guess(GuessModel::init(Ansatz::delta_density, {}, 11), w.mol, w.ctx, table());
    auto f = model_guess(GuessModel::init(Ansatz::delta_fock, {}, 11), w.mol, w.ctx, table());
    CHECK(d.fock_builds_spent == 0);
    CHECK(f.fock_builds_spent == 1);
}
