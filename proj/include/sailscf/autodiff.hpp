#pragma once

#include <cstdint>
#include <vector>

#include "sailscf/guess.hpp"
#include "sailscf/integrals.hpp"
#include "sailscf/types.hpp"

namespace sailscf {

/// Reverse-mode tape over dense matrices. Records a fixed set of
/// primitives (matrix products, structural linear maps, symmetric
/// eigendecompositions, linear solves, ERI contractions, tanh,
/// reductions); forward values are stored per slot so the backward pass
/// can visit operations in exact reverse order with zero-initialized
/// gradient buffers. Replaying the recorded program reproduces every
/// stored value bitwise.
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    // leaves
    Var constant(const Mat& value);
    Var parameter(const Mat& value);

    // primitives
    Var matmul(Var a, Var b, bool ta = false, bool tb = false);
    Var add(Var a, Var b, double ca = 1.0, double cb = 1.0);
    Var scale_shift(Var a, double scale, double shift); // elementwise
    Var hadamard(Var a, Var b);
    Var block(Var a, int row, int col, int nrows, int ncols);
    Var add_colvec(Var a, Var b); // A + b * ones^T
    Var tanh(Var a);
    Var eri_j(Var p, const EriTensor* eri);
    Var eri_k(Var p, const EriTensor* eri);
    Var blockmap(Var vals, const std::vector<Mat>* masks);
    Var dot(Var a, Var b);
    Var sum_abs(Var a);
    Var sqrt_scalar(Var a);
    Var mul_scalar(Var a, Var s);
    Var pack_bordered(const std::vector<Var>& gram_lower, int m);
    Var weighted_sum(Var coeffs, const std::vector<Var>& mats, int m);
    Var linear_solve(Var A, Var rhs);

    /// Symmetric eigendecomposition, eigenvalues ascending. When
    /// boundary_index is in (0, B), a gap below boundary_threshold
    /// between eps[boundary_index-1] and eps[boundary_index] raises the
    /// boundary-degeneracy flag; any gap below 1e-6 raises the
    /// near-degeneracy flag. The adjoint regularizes the eigenvalue-
    /// difference denominator as d/(d^2 + delta^2), delta = 1e-9.
    Var sym_eig(Var a, Var& eigenvalues, int boundary_index = -1,
                double boundary_threshold = 1e-6);

    const Mat& value(Var v) const { return vals_[v.id]; }
    const Mat& grad(Var v) const;
    bool has_grad(Var v) const;

    void backward(Var loss, double seed = 1.0);

    /// Recomputes the whole program from the leaves; true when every
    /// recorded value is reproduced bitwise.
    bool replay_matches() const;

    size_t value_bytes() const;
    size_t total_bytes() const; // values + gradients
    int op_count() const { return static_cast<int>(ops_.size()); }

    bool near_degenerate_flag() const { return near_degenerate_; }
    bool boundary_degenerate_flag() const { return boundary_degenerate_; }

    /// Index of the first tape slot with a non-finite gradient, -1 if none.
    int first_nonfinite_grad() const;

    /// Test hook: deterministically flip every eigenvector sign to check
    /// gauge invariance of recorded losses.
    bool flip_eig_signs = false;

private:
    enum class OpKind {
        Leaf, MatMul, Add, ScaleShift, Hadamard, Block, AddColVec, Tanh,
        EriJ, EriK, BlockMap, Dot, SumAbs, SqrtScalar, MulScalar,
        PackBordered, WeightedSum, LinearSolve, SymEig
    };
    struct Op {
        OpKind kind;
        std::vector<int> inputs;
        std::vector<int> outputs;
        bool ta = false, tb = false;
        double c0 = 0, c1 = 0;
        int i0 = 0, i1 = 0, i2 = 0, i3 = 0;
        const EriTensor* eri = nullptr;
        const std::vector<Mat>* masks = nullptr;
    };

    Var push_value(Mat value);
    void forward_op(const Op& op, std::vector<Mat>& vals) const;
    Mat& grad_ref(int id);

    std::vector<Op> ops_;
    std::vector<Mat> vals_;
    std::vector<Mat> grads_;
    bool near_degenerate_ = false;
    bool boundary_degenerate_ = false;
};

/// Adjoint of the symmetric eigendecomposition A = U diag(eps) U^T with
/// the Lorentzian-regularized divided difference (delta = 1e-9);
/// the returned matrix is symmetrized.
Mat eig_backward(const Mat& U, const Vec& eps, const Mat& U_bar, const Vec& eps_bar);

// ---------------------------------------------------------------------
// Graph builders and gradient drivers for the learned-guess training
// ---------------------------------------------------------------------

enum class TrajectoryLossKind { gradient_rms, commutator };

struct SailOptions {
    int T = 10;
    TrajectoryLossKind loss = TrajectoryLossKind::gradient_rms;
    bool diis_enabled = true;
    int diis_history = 8;
    double loss_scale = 1.0;
};

struct GuessGraph {
    Tape::Var P0;
    Tape::Var raw;
    Tape::Var W1, b1, W2, b2, W3, b3;
    int fock_builds_spent = 0;
};

/// Records the learned-guess pipeline (features -> MLP -> block scaling
/// -> purification or Roothaan step) on the tape.
GuessGraph build_guess_graph(Tape& tape, const GuessModel& model, const PairBlocks& blocks,
                             const BasisContext& ctx, const AtomicDensityTable& table);

struct TrajectoryGraph {
    Tape::Var loss;
    std::vector<Tape::Var> step_losses; // t = 1..T
    int fock_builds = 0;
};

/// Records T solver steps (DIIS included) from the tape density P0 and
/// the uniform mean of the per-step losses.
TrajectoryGraph build_sail_graph(Tape& tape, Tape::Var P0, const BasisContext& ctx, double alpha,
                                 const SailOptions& opt);

struct GuessModelGrads {
    Mat W1, W2, W3;
    Vec b1, b2, b3;
    Vec flatten() const;
    double norm() const;
};

struct SailGradResult {
    double loss = 0.0;
    GuessModelGrads grads;
    bool flagged_degenerate = false;
    size_t tape_bytes = 0;
    int guess_fock_builds = 0;
};

/// Forward + reverse pass of the trajectory loss for one molecule.
/// Throws on non-finite gradients, carrying the offending slot index.
SailGradResult sail_grad(const GuessModel& model, const Molecule& mol, const BasisContext& ctx,
                         const AtomicDensityTable& table, const SailOptions& opt);

/// Forward-only evaluation of the same recorded program (used by
/// finite-difference checks).
double sail_loss_forward(const GuessModel& model, const Molecule& mol, const BasisContext& ctx,
                         const AtomicDensityTable& table, const SailOptions& opt);

struct SurrogateGradResult {
    double loss = 0.0;
    GuessModelGrads grads;
};

/// Gradient of the mixed Frobenius-L1 surrogate loss of the raw
/// prediction against a converged label matrix.
SurrogateGradResult surrogate_grad(const GuessModel& model, const Molecule& mol,
                                   const BasisContext& ctx, const AtomicDensityTable& table,
                                   const Mat& label);

double surrogate_loss_forward(const GuessModel& model, const Molecule& mol,
                              const BasisContext& ctx, const AtomicDensityTable& table,
                              const Mat& label);

} // namespace sailscf
