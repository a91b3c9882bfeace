#include "sailscf/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "sailscf/diis.hpp"
#include "sailscf/scf.hpp"

namespace sailscf {

namespace {
constexpr double kEigDelta = 1e-9;
}

Tape::Var Tape::push_value(Mat value) {
    vals_.push_back(std::move(value));
    return {static_cast<int>(vals_.size()) - 1};
}

Tape::Var Tape::constant(const Mat& value) {
    Var v = push_value(value);
    ops_.push_back({OpKind::Leaf, {}, {v.id}});
    return v;
}

Tape::Var Tape::parameter(const Mat& value) {
    Var v = push_value(value);
    ops_.push_back({OpKind::Leaf, {}, {v.id}});
    return v;
}

void Tape::forward_op(const Op& op, std::vector<Mat>& vals) const {
    auto in = [&](int k) -> const Mat& { return vals[op.inputs[k]]; };
    switch (op.kind) {
        case OpKind::Leaf:
            break;
        case OpKind::MatMul: {
            const Mat& A = in(0);
            const Mat& B = in(1);
            Mat y;
            if (!op.ta && !op.tb) y = A * B;
            else if (op.ta && !op.tb) y = A.transpose() * B;
            else if (!op.ta && op.tb) y = A * B.transpose();
            else y = A.transpose() * B.transpose();
            vals[op.outputs[0]] = std::move(y);
            break;
        }
        case OpKind::Add:
            vals[op.outputs[0]] = op.c0 * in(0) + op.c1 * in(1);
            break;
        case OpKind::ScaleShift:
            vals[op.outputs[0]] = (op.c0 * in(0).array() + op.c1).matrix();
            break;
        case OpKind::Hadamard:
            vals[op.outputs[0]] = in(0).cwiseProduct(in(1));
            break;
        case OpKind::Block:
            vals[op.outputs[0]] = in(0).block(op.i0, op.i1, op.i2, op.i3);
            break;
        case OpKind::AddColVec:
            vals[op.outputs[0]] = in(0).colwise() + Vec(in(1).col(0));
            break;
        case OpKind::Tanh:
            vals[op.outputs[0]] = in(0).array().tanh().matrix();
            break;
        case OpKind::EriJ:
            vals[op.outputs[0]] = op.eri->coulomb(in(0));
            break;
        case OpKind::EriK:
            vals[op.outputs[0]] = op.eri->exchange(in(0));
            break;
        case OpKind::BlockMap: {
            const Mat& v = in(0);
            const auto& masks = *op.masks;
            Mat y = Mat::Zero(masks[0].rows(), masks[0].cols());
            for (size_t p = 0; p < masks.size(); ++p) y += v(0, static_cast<int>(p)) * masks[p];
            vals[op.outputs[0]] = std::move(y);
            break;
        }
        case OpKind::Dot: {
            Mat y(1, 1);
            y(0, 0) = in(0).cwiseProduct(in(1)).sum();
            vals[op.outputs[0]] = std::move(y);
            break;
        }
        case OpKind::SumAbs: {
            Mat y(1, 1);
            y(0, 0) = in(0).cwiseAbs().sum();
            vals[op.outputs[0]] = std::move(y);
            break;
        }
        case OpKind::SqrtScalar: {
            Mat y(1, 1);
            y(0, 0) = std::sqrt(in(0)(0, 0));
            vals[op.outputs[0]] = std::move(y);
            break;
        }
        case OpKind::MulScalar:
            vals[op.outputs[0]] = in(1)(0, 0) * in(0);
            break;
        case OpKind::PackBordered: {
            int m = op.i0;
            Mat A = Mat::Zero(m + 1, m + 1);
            int k = 0;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j <= i; ++j) {
                    double g = vals[op.inputs[k++]](0, 0);
                    A(i, j) = A(j, i) = g;
                }
            A.topRightCorner(m, 1).setConstant(-1.0);
            A.bottomLeftCorner(1, m).setConstant(-1.0);
            vals[op.outputs[0]] = std::move(A);
            break;
        }
        case OpKind::WeightedSum: {
            int m = op.i0;
            const Mat& c = in(0);
            Mat y = Mat::Zero(vals[op.inputs[1]].rows(), vals[op.inputs[1]].cols());
            for (int i = 0; i < m; ++i) y += c(i, 0) * vals[op.inputs[1 + i]];
            vals[op.outputs[0]] = std::move(y);
            break;
        }
        case OpKind::LinearSolve:
            vals[op.outputs[0]] = in(0).fullPivLu().solve(in(1));
            break;
        case OpKind::SymEig: {
            Eigen::SelfAdjointEigenSolver<Mat> es(in(0));
            if (es.info() != Eigen::Success) throw Error("tape sym_eig: eigensolver failed");
            Mat U = es.eigenvectors();
            if (flip_eig_signs) U = -U;
            vals[op.outputs[0]] = std::move(U);
            vals[op.outputs[1]] = es.eigenvalues();
            break;
        }
    }
}

Tape::Var Tape::matmul(Var a, Var b, bool ta, bool tb) {
    Op op{OpKind::MatMul, {a.id, b.id}, {}};
    op.ta = ta;
    op.tb = tb;
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::add(Var a, Var b, double ca, double cb) {
    Op op{OpKind::Add, {a.id, b.id}, {}};
    op.c0 = ca;
    op.c1 = cb;
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::scale_shift(Var a, double scale, double shift) {
    Op op{OpKind::ScaleShift, {a.id}, {}};
    op.c0 = scale;
    op.c1 = shift;
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::hadamard(Var a, Var b) {
    Op op{OpKind::Hadamard, {a.id, b.id}, {}};
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::block(Var a, int row, int col, int nrows, int ncols) {
    Op op{OpKind::Block, {a.id}, {}};
    op.i0 = row;
    op.i1 = col;
    op.i2 = nrows;
    op.i3 = ncols;
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::add_colvec(Var a, Var b) {
    Op op{OpKind::AddColVec, {a.id, b.id}, {}};
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::tanh(Var a) {
    Op op{OpKind::Tanh, {a.id}, {}};
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::eri_j(Var p, const EriTensor* eri) {
    Op op{OpKind::EriJ, {p.id}, {}};
    op.eri = eri;
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::eri_k(Var p, const EriTensor* eri) {
    Op op{OpKind::EriK, {p.id}, {}};
    op.eri = eri;
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::blockmap(Var vals, const std::vector<Mat>* masks) {
    Op op{OpKind::BlockMap, {vals.id}, {}};
    op.masks = masks;
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::dot(Var a, Var b) {
    Op op{OpKind::Dot, {a.id, b.id}, {}};
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::sum_abs(Var a) {
    Op op{OpKind::SumAbs, {a.id}, {}};
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::sqrt_scalar(Var a) {
    Op op{OpKind::SqrtScalar, {a.id}, {}};
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::mul_scalar(Var a, Var s) {
    Op op{OpKind::MulScalar, {a.id, s.id}, {}};
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::pack_bordered(const std::vector<Var>& gram_lower, int m) {
    Op op{OpKind::PackBordered, {}, {}};
    op.i0 = m;
    if (static_cast<int>(gram_lower.size()) != m * (m + 1) / 2)
        throw Error("pack_bordered: wrong number of Gram entries");
    for (Var v : gram_lower) op.inputs.push_back(v.id);
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::weighted_sum(Var coeffs, const std::vector<Var>& mats, int m) {
    Op op{OpKind::WeightedSum, {coeffs.id}, {}};
    op.i0 = m;
    if (static_cast<int>(mats.size()) != m) throw Error("weighted_sum: size mismatch");
    for (Var v : mats) op.inputs.push_back(v.id);
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::linear_solve(Var A, Var rhs) {
    Op op{OpKind::LinearSolve, {A.id, rhs.id}, {}};
    Var out = push_value(Mat());
    op.outputs = {out.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    return out;
}

Tape::Var Tape::sym_eig(Var a, Var& eigenvalues, int boundary_index, double boundary_threshold) {
    Op op{OpKind::SymEig, {a.id}, {}};
    Var u = push_value(Mat());
    Var e = push_value(Mat());
    op.outputs = {u.id, e.id};
    forward_op(op, vals_);
    ops_.push_back(std::move(op));
    eigenvalues = e;

    const Mat& eps = vals_[e.id];
    int B = static_cast<int>(eps.rows());
    for (int i = 0; i + 1 < B; ++i)
        if (eps(i + 1, 0) - eps(i, 0) < 1e-6) near_degenerate_ = true;
    if (boundary_index > 0 && boundary_index < B &&
        eps(boundary_index, 0) - eps(boundary_index - 1, 0) < boundary_threshold)
        boundary_degenerate_ = true;
    return u;
}

Mat& Tape::grad_ref(int id) {
    if (grads_.empty()) grads_.resize(vals_.size());
    if (grads_[id].size() == 0) grads_[id] = Mat::Zero(vals_[id].rows(), vals_[id].cols());
    return grads_[id];
}

bool Tape::has_grad(Var v) const {
    return !grads_.empty() && grads_[v.id].size() != 0;
}

const Mat& Tape::grad(Var v) const {
    static const Mat empty;
    if (!has_grad(v)) return empty;
    return grads_[v.id];
}

Mat eig_backward(const Mat& U, const Vec& eps, const Mat& U_bar, const Vec& eps_bar) {
    int B = static_cast<int>(eps.size());
    Mat inner = Mat::Zero(B, B);
    if (eps_bar.size() != 0) inner.diagonal() = eps_bar;
    if (U_bar.size() != 0) {
        Mat M = U.transpose() * U_bar;
        for (int i = 0; i < B; ++i)
            for (int j = 0; j < B; ++j) {
                if (i == j) continue;
                double d = eps[j] - eps[i];
                inner(i, j) += M(i, j) * d / (d * d + kEigDelta * kEigDelta);
            }
    }
    Mat A = U * inner * U.transpose();
    return 0.5 * (A + A.transpose());
}

void Tape::backward(Var loss, double seed) {
    grads_.assign(vals_.size(), Mat());
    if (vals_[loss.id].size() != 1) throw Error("backward: loss must be a scalar slot");
    grad_ref(loss.id)(0, 0) = seed;

    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        const Op& op = *it;
        if (op.kind == OpKind::Leaf) continue;
        bool any = false;
        for (int out : op.outputs)
            if (grads_[out].size() != 0) any = true;
        if (!any) continue;

        auto gout = [&](int k) -> const Mat& {
            int id = op.outputs[k];
            if (grads_[id].size() == 0) grads_[id] = Mat::Zero(vals_[id].rows(), vals_[id].cols());
            return grads_[id];
        };
        auto val = [&](int k) -> const Mat& { return vals_[op.inputs[k]]; };

        switch (op.kind) {
            case OpKind::Leaf:
                break;
            case OpKind::MatMul: {
                const Mat g = gout(0);
                const Mat& A = val(0);
                const Mat& B = val(1);
                if (!op.ta && !op.tb) {
                    grad_ref(op.inputs[0]).noalias() += g * B.transpose();
                    grad_ref(op.inputs[1]).noalias() += A.transpose() * g;
                } else if (op.ta && !op.tb) {
                    grad_ref(op.inputs[0]).noalias() += B * g.transpose();
                    grad_ref(op.inputs[1]).noalias() += A * g;
                } else if (!op.ta && op.tb) {
                    grad_ref(op.inputs[0]).noalias() += g * B;
                    grad_ref(op.inputs[1]).noalias() += g.transpose() * A;
                } else {
                    grad_ref(op.inputs[0]).noalias() += B.transpose() * g.transpose();
                    grad_ref(op.inputs[1]).noalias() += g.transpose() * A.transpose();
                }
                break;
            }
            case OpKind::Add:
                grad_ref(op.inputs[0]) += op.c0 * gout(0);
                grad_ref(op.inputs[1]) += op.c1 * gout(0);
                break;
            case OpKind::ScaleShift:
                grad_ref(op.inputs[0]) += op.c0 * gout(0);
                break;
            case OpKind::Hadamard:
                grad_ref(op.inputs[0]) += val(1).cwiseProduct(gout(0));
                grad_ref(op.inputs[1]) += val(0).cwiseProduct(gout(0));
                break;
            case OpKind::Block:
                grad_ref(op.inputs[0]).block(op.i0, op.i1, op.i2, op.i3) += gout(0);
                break;
            case OpKind::AddColVec:
                grad_ref(op.inputs[0]) += gout(0);
                grad_ref(op.inputs[1]).col(0) += gout(0).rowwise().sum();
                break;
            case OpKind::Tanh: {
                const Mat& y = vals_[op.outputs[0]];
                grad_ref(op.inputs[0]).array() += (1.0 - y.array().square()) * gout(0).array();
                break;
            }
            case OpKind::EriJ:
                grad_ref(op.inputs[0]) += op.eri->coulomb(gout(0));
                break;
            case OpKind::EriK:
                grad_ref(op.inputs[0]) += op.eri->exchange(gout(0));
                break;
            case OpKind::BlockMap: {
                const auto& masks = *op.masks;
                Mat& gv = grad_ref(op.inputs[0]);
                for (size_t p = 0; p < masks.size(); ++p)
                    gv(0, static_cast<int>(p)) += masks[p].cwiseProduct(gout(0)).sum();
                break;
            }
            case OpKind::Dot: {
                double g = gout(0)(0, 0);
                grad_ref(op.inputs[0]) += g * val(1);
                grad_ref(op.inputs[1]) += g * val(0);
                break;
            }
            case OpKind::SumAbs: {
                double g = gout(0)(0, 0);
                grad_ref(op.inputs[0]).array() += g * val(0).array().sign();
                break;
            }
            case OpKind::SqrtScalar: {
                double y = vals_[op.outputs[0]](0, 0);
                if (y > 1e-150) grad_ref(op.inputs[0])(0, 0) += gout(0)(0, 0) * 0.5 / y;
                break;
            }
            case OpKind::MulScalar: {
                const Mat& g = gout(0);
                grad_ref(op.inputs[0]) += val(1)(0, 0) * g;
                grad_ref(op.inputs[1])(0, 0) += val(0).cwiseProduct(g).sum();
                break;
            }
            case OpKind::PackBordered: {
                const Mat& g = gout(0);
                int m = op.i0;
                int k = 0;
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j <= i; ++j) {
                        double acc = g(i, j);
                        if (i != j) acc += g(j, i);
                        grad_ref(op.inputs[k++])(0, 0) += acc;
                    }
                break;
            }
            case OpKind::WeightedSum: {
                const Mat& g = gout(0);
                int m = op.i0;
                const Mat& c = val(0);
                for (int i = 0; i < m; ++i) {
                    grad_ref(op.inputs[1 + i]) += c(i, 0) * g;
                    grad_ref(op.inputs[0])(i, 0) += vals_[op.inputs[1 + i]].cwiseProduct(g).sum();
                }
                break;
            }
            case OpKind::LinearSolve: {
                const Mat& A = val(0);
                const Mat& x = vals_[op.outputs[0]];
                Mat gb = A.transpose().fullPivLu().solve(gout(0));
                grad_ref(op.inputs[1]) += gb;
                grad_ref(op.inputs[0]).noalias() -= gb * x.transpose();
                break;
            }
            case OpKind::SymEig: {
                const Mat& U = vals_[op.outputs[0]];
                Vec eps = vals_[op.outputs[1]].col(0);
                Mat U_bar = grads_[op.outputs[0]];
                Vec eps_bar;
                if (grads_[op.outputs[1]].size() != 0) eps_bar = grads_[op.outputs[1]].col(0);
                grad_ref(op.inputs[0]) += eig_backward(U, eps, U_bar, eps_bar);
                break;
            }
        }
    }
}

bool Tape::replay_matches() const {
    std::vector<Mat> vals2 = vals_;
    for (const auto& op : ops_)
        if (op.kind != OpKind::Leaf)
            for (int out : op.outputs) vals2[out] = Mat();
    for (const auto& op : ops_) forward_op(op, vals2);
    for (size_t i = 0; i < vals_.size(); ++i) {
        if (vals_[i].rows() != vals2[i].rows() || vals_[i].cols() != vals2[i].cols()) return false;
        if (vals_[i].size() != 0 &&
            std::memcmp(vals_[i].data(), vals2[i].data(), sizeof(double) * vals_[i].size()) != 0)
            return false;
    }
    return true;
}

size_t Tape::value_bytes() const {
    size_t b = 0;
    for (const auto& m : vals_) b += sizeof(double) * m.size();
    return b;
}

size_t Tape::total_bytes() const {
    size_t b = value_bytes();
    for (const auto& m : grads_) b += sizeof(double) * m.size();
    return b;
}


int Tape::first_nonfinite_grad() const {
    for (size_t i = 0; i < grads_.size(); ++i)
        if (grads_[i].size() != 0 && !grads_[i].allFinite()) return static_cast<int>(i);
    return -1;
}

GuessGraph build_guess_graph(Tape& tape, const GuessModel& model, const PairBlocks& blocks,
                             const BasisContext& ctx, const AtomicDensityTable& table) {
    GuessGraph g;
    g.W1 = tape.parameter(model.W1);
    g.b1 = tape.parameter(model.b1);
    g.W2 = tape.parameter(model.W2);
    g.b2 = tape.parameter(model.b2);
    g.W3 = tape.parameter(model.W3);
    g.b3 = tape.parameter(model.b3);

    Tape::Var feat = tape.constant(blocks.features);
    Tape::Var h1 = tape.tanh(tape.add_colvec(tape.matmul(g.W1, feat), g.b1));
    Tape::Var h2 = tape.tanh(tape.add_colvec(tape.matmul(g.W2, h1), g.b2));
    Tape::Var o = tape.add_colvec(tape.matmul(g.W3, h2), g.b3);
    int np = static_cast<int>(blocks.pairs.size());
    Tape::Var gains = tape.scale_shift(tape.tanh(tape.block(o, 0, 0, 1, np)), 0.5, 1.0);
    Tape::Var shifts = tape.scale_shift(tape.tanh(tape.block(o, 1, 0, 1, np)), 0.1, 0.0);
    Tape::Var gmap = tape.blockmap(gains, &blocks.gain_masks);
    Tape::Var dmap = tape.blockmap(shifts, &blocks.shift_masks);

    Mat P_sad = purify(sad_raw(ctx, table), ctx, ctx.n_occ).P;
    Tape::Var X_c = tape.constant(ctx.X);

    if (model.ansatz == Ansatz::delta_density) {
        Tape::Var base = tape.constant(P_sad);
        g.raw = tape.add(tape.hadamard(base, gmap), dmap);
        Tape::Var Xinv_c = tape.constant(ctx.Xinv);
        Tape::Var M = tape.matmul(tape.matmul(Xinv_c, g.raw), Xinv_c);
        Tape::Var occs;
        Tape::Var W = tape.sym_eig(M, occs, ctx.B - ctx.n_occ, 1e-10);
        Tape::Var Wocc = tape.block(W, 0, ctx.B - ctx.n_occ, ctx.B, ctx.n_occ);
        Tape::Var C = tape.matmul(X_c, Wocc);
        g.P0 = tape.scale_shift(tape.matmul(C, C, false, true), 2.0, 0.0);
        g.fock_builds_spent = 0;
    } else {
        FockCounter counter;
        Mat F_base = fock_build(P_sad, ctx, model.alpha, counter);
        g.fock_builds_spent = counter.count;
        Tape::Var base = tape.constant(F_base);
        g.raw = tape.add(tape.hadamard(base, gmap), dmap);
        Tape::Var Fp = tape.matmul(tape.matmul(X_c, g.raw, true, false), X_c);
        Tape::Var eps;
        Tape::Var U = tape.sym_eig(Fp, eps, ctx.n_occ, 1e-6);
        Tape::Var C = tape.matmul(X_c, U);
        Tape::Var Cocc = tape.block(C, 0, 0, ctx.B, ctx.n_occ);
        g.P0 = tape.scale_shift(tape.matmul(Cocc, Cocc, false, true), 2.0, 0.0);
    }
    return g;
}

TrajectoryGraph build_sail_graph(Tape& tape, Tape::Var P0, const BasisContext& ctx, double alpha,
                                 const SailOptions& opt) {
    if (opt.T < 1) throw Error("build_sail_graph: T must be >= 1");
    TrajectoryGraph tg;
    Tape::Var Hc = tape.constant(ctx.Hcore);
    Tape::Var S_c = tape.constant(ctx.S);
    Tape::Var X_c = tape.constant(ctx.X);
    const int B = ctx.B, no = ctx.n_occ, nv = B - no;

    Tape::Var P = P0;
    Tape::Var C; // set by the first solve
    struct Hist {
        Tape::Var F, R;
    };
    std::vector<Hist> hist;

    for (int k = 0; k <= opt.T; ++k) {
        Tape::Var F =
            tape.add(Hc, tape.add(tape.eri_j(P, &ctx.eri), tape.eri_k(P, &ctx.eri), 1.0,
                                  -0.5 * alpha));
        ++tg.fock_builds;

        if (k >= 1) {
            Tape::Var loss_t;
            if (opt.loss == TrajectoryLossKind::gradient_rms) {
                if (nv == 0 || no == 0) {
                    loss_t = tape.constant(Mat::Zero(1, 1));
                } else {
                    Tape::Var Cocc = tape.block(C, 0, 0, B, no);
                    Tape::Var Cvirt = tape.block(C, 0, no, B, nv);
                    Tape::Var G = tape.matmul(tape.matmul(Cocc, F, true, false), Cvirt);
                    Tape::Var mean_sq =
                        tape.scale_shift(tape.dot(G, G), 1.0 / (double(no) * nv), 0.0);
                    loss_t = tape.sqrt_scalar(mean_sq);
                }
            } else {
                Tape::Var FPS = tape.matmul(F, tape.matmul(P, S_c));
                Tape::Var SPF = tape.matmul(S_c, tape.matmul(P, F));
                Tape::Var R = tape.add(FPS, SPF, 1.0, -1.0);
                loss_t = tape.scale_shift(tape.sqrt_scalar(tape.dot(R, R)), 1.0 / B, 0.0);
            }
            tg.step_losses.push_back(loss_t);
        }
        if (k == opt.T) break;

        Tape::Var F_use = F;
        if (opt.diis_enabled) {
            Tape::Var FPS = tape.matmul(F, tape.matmul(P, S_c));
            Tape::Var SPF = tape.matmul(S_c, tape.matmul(P, F));
            Tape::Var R_ao = tape.add(FPS, SPF, 1.0, -1.0);
            Tape::Var Rt = tape.matmul(tape.matmul(X_c, R_ao, true, false), X_c);
            hist.push_back({F, Rt});
            while (static_cast<int>(hist.size()) > opt.diis_history) hist.erase(hist.begin());
            if (hist.size() >= 2) {
                // eviction decision mirrors diis_extrapolate, then the
                // surviving solve is recorded for differentiation
                while (hist.size() > 1) {
                    int m = static_cast<int>(hist.size());
                    Mat gram(m, m);
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j <= i; ++j)
                            gram(i, j) = gram(j, i) =
                                tape.value(hist[i].R).cwiseProduct(tape.value(hist[j].R)).sum();
                    if (solve_pulay(gram)) break;
                    hist.erase(hist.begin());
                }
                int m = static_cast<int>(hist.size());
                if (m >= 2) {
                    std::vector<Tape::Var> entries;
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j <= i; ++j) entries.push_back(tape.dot(hist[i].R, hist[j].R));
                    Tape::Var A = tape.pack_bordered(entries, m);
                    Vec rhs = Vec::Zero(m + 1);
                    rhs[m] = -1.0;
                    Tape::Var coef = tape.linear_solve(A, tape.constant(rhs));
                    std::vector<Tape::Var> fvars;
                    for (auto& h : hist) fvars.push_back(h.F);
                    F_use = tape.weighted_sum(coef, fvars, m);
                } else {
                    F_use = hist.back().F;
                }
            }
        }
        Tape::Var Fp = tape.matmul(tape.matmul(X_c, F_use, true, false), X_c);
        Tape::Var eps;
        Tape::Var U = tape.sym_eig(Fp, eps, no, 1e-6);
        C = tape.matmul(X_c, U);
        Tape::Var Cocc = tape.block(C, 0, 0, B, no);
        P = tape.scale_shift(tape.matmul(Cocc, Cocc, false, true), 2.0, 0.0);
    }

    Tape::Var acc = tg.step_losses[0];
    for (size_t t = 1; t < tg.step_losses.size(); ++t) acc = tape.add(acc, tg.step_losses[t]);
    tg.loss = tape.scale_shift(acc, opt.loss_scale / opt.T, 0.0);
    return tg;
}

Vec GuessModelGrads::flatten() const {
    Vec theta(W1.size() + b1.size() + W2.size() + b2.size() + W3.size() + b3.size());
    int o = 0;
    auto put = [&](const Mat& m) {
        std::copy(m.data(), m.data() + m.size(), theta.data() + o);
        o += static_cast<int>(m.size());
    };
    put(W1);
    put(b1);
    put(W2);
    put(b2);
    put(W3);
    put(b3);
    return theta;
}

double GuessModelGrads::norm() const { return flatten().norm(); }

namespace {

Mat grad_or_zero(const Tape& tape, Tape::Var v, const Mat& like) {
    if (!tape.has_grad(v)) return Mat::Zero(like.rows(), like.cols());
    return tape.grad(v);
}

GuessModelGrads collect_grads(const Tape& tape, const GuessGraph& g, const GuessModel& model) {
    GuessModelGrads out;
    out.W1 = grad_or_zero(tape, g.W1, model.W1);
    out.b1 = grad_or_zero(tape, g.b1, model.b1);
    out.W2 = grad_or_zero(tape, g.W2, model.W2);
    out.b2 = grad_or_zero(tape, g.b2, model.b2);
    out.W3 = grad_or_zero(tape, g.W3, model.W3);
    out.b3 = grad_or_zero(tape, g.b3, model.b3);
    return out;
}

} // namespace

SailGradResult sail_grad(const GuessModel& model, const Molecule& mol, const BasisContext& ctx,
                         const AtomicDensityTable& table, const SailOptions& opt) {
    PairBlocks blocks = pair_blocks(mol, ctx, model.feature_spec);
    Tape tape;
    GuessGraph gg = build_guess_graph(tape, model, blocks, ctx, table);
    TrajectoryGraph tg = build_sail_graph(tape, gg.P0, ctx, model.alpha, opt);
    tape.backward(tg.loss);

    SailGradResult res;
    res.loss = tape.value(tg.loss)(0, 0);
    res.grads = collect_grads(tape, gg, model);
    res.flagged_degenerate = tape.boundary_degenerate_flag();
    res.tape_bytes = tape.total_bytes();
    res.guess_fock_builds = gg.fock_builds_spent;
    if (!std::isfinite(res.loss))
        throw Error("sail_grad: non-finite loss for molecule '" + mol.name + "'");
    if (!res.grads.flatten().allFinite()) {
        int slot = tape.first_nonfinite_grad();
        throw Error("sail_grad: non-finite gradient (first bad tape slot " +
                    std::to_string(slot) + ") for molecule '" + mol.name + "'");
    }
    return res;
}

double sail_loss_forward(const GuessModel& model, const Molecule& mol, const BasisContext& ctx,
                         const AtomicDensityTable& table, const SailOptions& opt) {
    PairBlocks blocks = pair_blocks(mol, ctx, model.feature_spec);
    Tape tape;
    GuessGraph gg = build_guess_graph(tape, model, blocks, ctx, table);
    TrajectoryGraph tg = build_sail_graph(tape, gg.P0, ctx, model.alpha, opt);
    return tape.value(tg.loss)(0, 0);
}

namespace {

Tape::Var surrogate_loss_node(Tape& tape, Tape::Var raw, const Mat& label) {
    Tape::Var lab = tape.constant(label);
    Tape::Var d = tape.add(raw, lab, 1.0, -1.0);
    Tape::Var frob = tape.sqrt_scalar(tape.dot(d, d));
    Tape::Var l1 = tape.sum_abs(d);
    return tape.scale_shift(tape.add(frob, l1), 1.0 / (2.0 * label.rows()), 0.0);
}

} // namespace

SurrogateGradResult surrogate_grad(const GuessModel& model, const Molecule& mol,
                                   const BasisContext& ctx, const AtomicDensityTable& table,
                                   const Mat& label) {
    PairBlocks blocks = pair_blocks(mol, ctx, model.feature_spec);
    Tape tape;
    GuessGraph gg = build_guess_graph(tape, model, blocks, ctx, table);
    Tape::Var loss = surrogate_loss_node(tape, gg.raw, label);
    tape.backward(loss);
    SurrogateGradResult res;
    res.loss = tape.value(loss)(0, 0);
    res.grads = collect_grads(tape, gg, model);
    if (!std::isfinite(res.loss) || !res.grads.flatten().allFinite())
        throw Error("surrogate_grad: non-finite result for molecule '" + mol.name + "'");
    return res;
}

double surrogate_loss_forward(const GuessModel& model, const Molecule& mol,
                              const BasisContext& ctx, const AtomicDensityTable& table,
                              const Mat& label) {
    PairBlocks blocks = pair_blocks(mol, ctx, model.feature_spec);
    Tape tape;
    GuessGraph gg = build_guess_graph(tape, model, blocks, ctx, table);
    Tape::Var loss = surrogate_loss_node(tape, gg.raw, label);
    return tape.value(loss)(0, 0);
}

} // namespace sailscf
