#include "sailscf/scf.hpp"

#include <nlohmann/json.hpp>

#include "sailscf/diis.hpp"

namespace sailscf {

Mat fock_build(const Mat& P, const BasisContext& ctx, double alpha, FockCounter& counter) {
    if (P.rows() != ctx.B || P.cols() != ctx.B) throw Error("fock_build: shape mismatch");
    if (!P.allFinite()) throw Error("fock_build: non-finite density");
    counter.count += 1;
    return ctx.Hcore + ctx.eri.coulomb(P) - 0.5 * alpha * ctx.eri.exchange(P);
}

RoothaanSolution solve_roothaan(const Mat& F, const BasisContext& ctx) {
    if (!F.allFinite()) throw Error("solve_roothaan: non-finite Fock matrix");
    Mat Fp = ctx.X.transpose() * F * ctx.X;
    Eigen::SelfAdjointEigenSolver<Mat> es(Fp);
    if (es.info() != Eigen::Success) throw Error("solve_roothaan: eigensolver failed");
    return {ctx.X * es.eigenvectors(), es.eigenvalues()};
}

Mat density_from_orbitals(const Mat& C, int n_occ) {
    if (n_occ < 0 || n_occ > C.cols()) throw Error("density_from_orbitals: n_occ out of range");
    Mat occ = C.leftCols(n_occ);
    return 2.0 * occ * occ.transpose();
}

double energy(const Mat& P, const Mat& F, const BasisContext& ctx) {
    return 0.5 * ((ctx.Hcore + F).cwiseProduct(P)).sum() + ctx.e_nuc;
}

double orbital_gradient_rms(const Mat& C, const Mat& F, int n_occ) {
    int n_virt = static_cast<int>(C.cols()) - n_occ;
    if (n_virt <= 0 || n_occ <= 0) return 0.0;
    Mat G = C.leftCols(n_occ).transpose() * F * C.rightCols(n_virt);
    return std::sqrt(G.squaredNorm() / (static_cast<double>(n_occ) * n_virt));
}

NaturalOrbitals natural_orbitals(const Mat& P, const BasisContext& ctx) {
    Mat M = ctx.Xinv * P * ctx.Xinv;
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    if (es.info() != Eigen::Success) throw Error("natural_orbitals: eigensolver failed");
    NaturalOrbitals no;
    no.C = ctx.X * es.eigenvectors().rowwise().reverse();
    no.occupations = es.eigenvalues().reverse();
    return no;
}

namespace {

ScfTrajectory run_loop(const Mat& P0, const BasisContext& ctx, const ScfOptions& options,
                       int guess_fock_builds, int fixed_steps) {
    options.validate();
    ScfTrajectory traj;
    FockCounter counter;
    DiisState diis(options.diis_history);

    auto no = natural_orbitals(P0, ctx);
    Mat P = P0;
    Mat C = no.C;
    Vec eps = no.occupations;

    const bool training = fixed_steps >= 0;
    const int bodies = training ? fixed_steps + 1 : options.max_iterations;
    double prev_E = 0.0;

    for (int t = 0; t < bodies; ++t) {
        ScfIterate it;
        it.P = P;
        it.C = C;
        it.eps = eps;
        it.F = fock_build(P, ctx, options.exchange_fraction, counter);
        it.E = energy(P, it.F, ctx);
        it.g_rms = orbital_gradient_rms(C, it.F, ctx.n_occ);
        Mat Rt = diis_residual(it.F, P, ctx);
        it.residual_norm = Rt.norm();
        traj.iterates.push_back(it);
        traj.iterations = t + 1;

        if (std::abs(it.E) > 1e6) {
            traj.diverged = true;
            break;
        }
        if (!training && t >= 1 && std::abs(it.E - prev_E) < options.energy_threshold &&
            it.g_rms < options.gradient_threshold) {
            traj.converged = true;
            traj.iterations_to_converge = t + 1;
            break;
        }
        prev_E = it.E;
        if (t == bodies - 1) break; // no further solve needed

        Mat F_use = it.F;
        if (options.diis_enabled) {
            diis.push(it.F, Rt);
            if (diis.size() >= 2) F_use = diis_extrapolate(diis);
        }
        auto sol = solve_roothaan(F_use, ctx);
        C = sol.C;
        eps = sol.eps;
        P = density_from_orbitals(C, ctx.n_occ);
    }

    traj.fock_build_count = counter.count + (options.count_init_fock_builds ? guess_fock_builds : 0);
    return traj;
}

} // namespace

ScfTrajectory scf_run(const Mat& P0, const BasisContext& ctx, const ScfOptions& options,
                      int guess_fock_builds) {
    return run_loop(P0, ctx, options, guess_fock_builds, -1);
}

ScfTrajectory scf_run_fixed(const Mat& P0, const BasisContext& ctx, const ScfOptions& options,
                            int steps) {
    if (steps < 1) throw Error("scf_run_fixed: steps must be >= 1");
    return run_loop(P0, ctx, options, 0, steps);
}

std::string trajectory_to_json(const ScfTrajectory& traj, const std::string& molecule_name) {
    nlohmann::ordered_json j;
    j["molecule"] = molecule_name;
    j["converged"] = traj.converged;
    j["diverged"] = traj.diverged;
    j["iterations"] = traj.iterations;
    j["fock_build_count"] = traj.fock_build_count;
    if (traj.iterations_to_converge) j["iterations_to_converge"] = *traj.iterations_to_converge;
    auto& iters = j["iterates"] = nlohmann::ordered_json::array();
    for (const auto& it : traj.iterates) {
        iters.push_back({{"E", it.E}, {"g_rms", it.g_rms}, {"residual_norm", it.residual_norm}});
    }
    auto flat_row_major = [](const Mat& m) {
        std::vector<double> v;
        v.reserve(m.size());
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
        return v;
    };
    if (!traj.iterates.empty()) {
        j["final_E"] = traj.final().E;
        j["final_P"] = flat_row_major(traj.final().P);
        j["final_C"] = flat_row_major(traj.final().C);
    }
    return j.dump(2);
}

} // namespace sailscf
