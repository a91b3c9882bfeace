#include "sailscf/diis.hpp"

namespace sailscf {

Mat diis_residual(const Mat& F, const Mat& P, const BasisContext& ctx) {
    if (F.rows() != P.rows() || F.cols() != P.cols() || F.rows() != ctx.S.rows())
        throw Error("diis_residual: shape mismatch");
    Mat R = F * P * ctx.S - ctx.S * P * F;
    return ctx.X.transpose() * R * ctx.X;
}

void DiisState::push(const Mat& F, const Mat& residual) {
    entries_.push_back({F, residual});
    while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

std::optional<Vec> solve_pulay(const Mat& gram) {
    int m = static_cast<int>(gram.rows());
    Mat A = Mat::Zero(m + 1, m + 1);
    A.topLeftCorner(m, m) = gram;
    A.topRightCorner(m, 1).setConstant(-1.0);
    A.bottomLeftCorner(1, m).setConstant(-1.0);
    Vec rhs = Vec::Zero(m + 1);
    rhs[m] = -1.0;

    Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double smax = svd.singularValues()[0];
    double smin = svd.singularValues()[m];
    if (!(smin > 0.0) || smax / smin > 1e12) return std::nullopt;

    Vec sol = A.fullPivLu().solve(rhs);
    if (!sol.allFinite()) return std::nullopt;
    return sol.head(m);
}

Mat diis_extrapolate(DiisState& state) {
    if (state.size() < 1) throw Error("diis_extrapolate: empty history");
    while (state.size() > 1) {
        int m = state.size();
        Mat gram(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j <= i; ++j) {
                double g = state.residual(i).cwiseProduct(state.residual(j)).sum();
                gram(i, j) = gram(j, i) = g;
            }
        auto a = solve_pulay(gram);
        if (!a) {
            state.drop_oldest();
            continue;
        }
        Mat F = Mat::Zero(state.fock(0).rows(), state.fock(0).cols());
        for (int i = 0; i < m; ++i) F += (*a)[i] * state.fock(i);
        state.last_coefficients_ = *a;
        return F;
    }
    state.last_coefficients_ = Vec::Ones(1);
    return state.fock(state.size() - 1);
}

} // namespace sailscf
