#include "sailscf/guess.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sailscf/diis.hpp"
#include "sailscf/rng.hpp"
#include "sailscf/scf.hpp"

namespace sailscf {

namespace {

// aufbau occupation vectors (restricted, spherically averaged) for the
// supported elements in their minimal-basis orbital order
std::vector<double> atomic_occupations(int z) {
    switch (z) {
        case 1: return {1.0};
        case 3: return {2.0, 1.0, 0.0, 0.0, 0.0};
        case 6: return {2.0, 2.0, 2.0 / 3, 2.0 / 3, 2.0 / 3};
        case 7: return {2.0, 2.0, 1.0, 1.0, 1.0};
        case 8: return {2.0, 2.0, 4.0 / 3, 4.0 / 3, 4.0 / 3};
        case 9: return {2.0, 2.0, 5.0 / 3, 5.0 / 3, 5.0 / 3};
        default:
            throw Error("atomic_density: unsupported element Z=" + std::to_string(z));
    }
}

} // namespace

Mat atomic_density(int z, double alpha, const std::string& basis_text) {
    Molecule atom;
    atom.name = std::string("atom-") + symbol_from_atomic_number(z);
    atom.atoms = {{z, Vec3::Zero()}};
    auto shells = load_basis(atom, basis_text);
    auto one = one_electron_integrals(shells, atom);
    int B = static_cast<int>(one.S.rows());

    BasisContext ctx;
    ctx.S = one.S;
    ctx.Hcore = one.T + one.Vne;
    ctx.X = inverse_sqrt_overlap(ctx.S);
    ctx.eri = two_electron_integrals(shells);
    ctx.B = B;

    auto occ = atomic_occupations(z);
    if (static_cast<int>(occ.size()) != B)
        throw Error("atomic_density: occupation vector does not match basis size");

    auto density_of = [&](const Mat& C) {
        Mat P = Mat::Zero(B, B);
        for (int k = 0; k < B; ++k)
            if (occ[k] > 0) P += occ[k] * C.col(k) * C.col(k).transpose();
        return P;
    };

    auto sol = solve_roothaan(ctx.Hcore, ctx);
    Mat P = density_of(sol.C);
    DiisState diis(8);
    double prev_E = 0;
    FockCounter counter;
    for (int it = 0; it < 300; ++it) {
        Mat F = fock_build(P, ctx, alpha, counter);
        double E = 0.5 * ((ctx.Hcore + F).cwiseProduct(P)).sum();
        if (it > 0 && std::abs(E - prev_E) < 1e-10) return P;
        prev_E = E;
        Mat R = diis_residual(F, P, ctx);
        diis.push(F, R);
        Mat F_use = (diis.size() >= 2) ? diis_extrapolate(diis) : F;
        sol = solve_roothaan(F_use, ctx);
        P = density_of(sol.C);
    }
    throw Error("atomic_density: SCF for Z=" + std::to_string(z) + " did not converge");
}

AtomicDensityTable build_atomic_density_table(const std::vector<int>& elements, double alpha,
                                              const std::string& basis_text) {
    AtomicDensityTable table;
    table.alpha = alpha;
    for (int z : elements) table.densities[z] = atomic_density(z, alpha, basis_text);
    return table;
}

ClassicalGuess classical_guess_from_name(const std::string& name) {
    if (name == "core") return ClassicalGuess::core;
    if (name == "gwh") return ClassicalGuess::gwh;
    if (name == "sad") return ClassicalGuess::sad;
    throw Error("unknown classical guess '" + name + "' (expected core, gwh or sad)");
}

const char* classical_guess_name(ClassicalGuess kind) {
    switch (kind) {
        case ClassicalGuess::core: return "core";
        case ClassicalGuess::gwh: return "gwh";
        default: return "sad";
    }
}

PurifyResult purify(const Mat& P_raw, const BasisContext& ctx, int n_occ) {
    if (P_raw.rows() != ctx.B || P_raw.cols() != ctx.B) throw Error("purify: shape mismatch");
    if (n_occ < 0 || n_occ > ctx.B) throw Error("purify: n_occ out of range");
    auto no = natural_orbitals(Mat(0.5 * (P_raw + P_raw.transpose())), ctx);
    PurifyResult out;
    out.degenerate_boundary =
        n_occ > 0 && n_occ < ctx.B && (no.occupations[n_occ - 1] - no.occupations[n_occ]) < 1e-10;
    Mat occ = no.C.leftCols(n_occ);
    out.P = 2.0 * occ * occ.transpose();
    return out;
}

Mat sad_raw(const BasisContext& ctx, const AtomicDensityTable& table) {
    if (ctx.atomic_numbers.empty()) throw Error("sad_raw: context lacks atomic numbers");
    Mat P = Mat::Zero(ctx.B, ctx.B);
    int mu = 0;
    for (size_t atom = 0; atom < ctx.atomic_numbers.size(); ++atom) {
        const Mat& d = table.at(ctx.atomic_numbers[atom]);
        int n = static_cast<int>(d.rows());
        if (mu + n > ctx.B || ctx.atom_of_function[mu] != static_cast<int>(atom))
            throw Error("sad_raw: basis layout does not match the atom blocks");
        P.block(mu, mu, n, n) = d;
        mu += n;
    }
    return P;
}

Mat classical_guess(ClassicalGuess kind, const BasisContext& ctx, const AtomicDensityTable& table) {
    switch (kind) {
        case ClassicalGuess::core: {
            auto sol = solve_roothaan(ctx.Hcore, ctx);
            return density_from_orbitals(sol.C, ctx.n_occ);
        }
        case ClassicalGuess::gwh: {
            const Mat& H = ctx.Hcore;
            Mat G(ctx.B, ctx.B);
            for (int i = 0; i < ctx.B; ++i)
                for (int j = 0; j < ctx.B; ++j)
                    G(i, j) = (i == j) ? H(i, i) : 0.5 * 1.75 * ctx.S(i, j) * (H(i, i) + H(j, j));
            auto sol = solve_roothaan(G, ctx);
            return density_from_orbitals(sol.C, ctx.n_occ);
        }
        default:
            return purify(sad_raw(ctx, table), ctx, ctx.n_occ).P;
    }
}

// ---------------------------------------------------------------------

int FeatureSpec::element_index(int z) const {
    for (size_t i = 0; i < elements.size(); ++i)
        if (elements[i] == z) return static_cast<int>(i);
    throw Error("FeatureSpec: element Z=" + std::to_string(z) + " not in the feature table");
}

Vec FeatureSpec::pair_features(int z1, int z2, double r) const {
    if (z1 > z2) std::swap(z1, z2);
    Vec f = Vec::Zero(dim());
    int ne = static_cast<int>(elements.size());
    f[element_index(z1)] = 1.0;
    f[ne + element_index(z2)] = 1.0;
    double sigma = r_cut / (n_rbf - 1);
    for (int k = 0; k < n_rbf; ++k) {
        double mu = r_cut * k / (n_rbf - 1);
        double t = (r - mu) / sigma;
        f[2 * ne + k] = std::exp(-t * t);
    }
    return f;
}

GuessModel GuessModel::init(Ansatz ansatz, const FeatureSpec& fs, uint64_t seed, int hidden) {
    GuessModel m;
    m.ansatz = ansatz;
    m.feature_spec = fs;
    m.hidden = hidden;
    m.seed = seed;
    SplitMix64 rng(SplitMix64::derive(seed, 0xF00D));
    auto randm = [&](int rows, int cols, double scale) {
        Mat w(rows, cols);
        for (int j = 0; j < cols; ++j)
            for (int i = 0; i < rows; ++i) w(i, j) = scale * rng.next_normal();
        return w;
    };
    int F = fs.dim();
    m.W1 = randm(hidden, F, 1.0 / std::sqrt(double(F)));
    m.b1 = Vec::Zero(hidden);
    m.W2 = randm(hidden, hidden, 1.0 / std::sqrt(double(hidden)));
    m.b2 = Vec::Zero(hidden);
    m.W3 = Mat::Zero(2, hidden); // identity model at init
    m.b3 = Vec::Zero(2);
    return m;
}

int GuessModel::parameter_count() const {
    return static_cast<int>(W1.size() + b1.size() + W2.size() + b2.size() + W3.size() + b3.size());
}

Vec GuessModel::flatten() const {
    Vec theta(parameter_count());
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

void GuessModel::unflatten(const Vec& theta) {
    if (theta.size() != parameter_count()) throw Error("GuessModel: parameter size mismatch");
    int o = 0;
    auto take = [&](Mat& m) {
        std::copy(theta.data() + o, theta.data() + o + m.size(), m.data());
        o += static_cast<int>(m.size());
    };
    auto takev = [&](Vec& v) {
        std::copy(theta.data() + o, theta.data() + o + v.size(), v.data());
        o += static_cast<int>(v.size());
    };
    take(W1);
    takev(b1);
    take(W2);
    takev(b2);
    take(W3);
    takev(b3);
}

namespace {

nlohmann::ordered_json mat_to_json(const Mat& m) {
    nlohmann::ordered_json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = std::vector<double>(m.data(), m.data() + m.size()); // column-major
    return j;
}

Mat mat_from_json(const nlohmann::json& j) {
    Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
    auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != m.size())
        throw Error("checkpoint: matrix payload size mismatch");
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

char hexdigit(uint64_t v) { return "0123456789abcdef"[v & 15]; }

std::string hash_to_hex(uint64_t h) {
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = hexdigit(h);
        h >>= 4;
    }
    return s;
}

uint64_t hex_to_hash(const std::string& s) {
    uint64_t h = 0;
    for (char c : s) {
        h <<= 4;
        if (c >= '0' && c <= '9') h |= c - '0';
        else if (c >= 'a' && c <= 'f') h |= c - 'a' + 10;
        else throw Error("checkpoint: bad hash string");
    }
    return h;
}

} // namespace

void save_checkpoint(const GuessModel& model, const std::string& path) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["ansatz"] = (model.ansatz == Ansatz::delta_density) ? "delta_density" : "delta_fock";
    j["feature_spec"] = {{"r_cut", model.feature_spec.r_cut},
                         {"n_rbf", model.feature_spec.n_rbf},
                         {"elements", model.feature_spec.elements}};
    j["hidden"] = model.hidden;
    j["parameters"] = {{"W1", mat_to_json(model.W1)}, {"b1", mat_to_json(model.b1)},
                       {"W2", mat_to_json(model.W2)}, {"b2", mat_to_json(model.b2)},
                       {"W3", mat_to_json(model.W3)}, {"b3", mat_to_json(model.b3)}};
    j["training"] = {{"alpha", model.alpha},
                     {"basis_hash", hash_to_hex(model.basis_hash)},
                     {"seed", model.seed}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out << j.dump(1) << "\n";
}

GuessModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    if (j.at("format_version").get<int>() != 1) throw Error("checkpoint: unsupported version");
    GuessModel m;
    std::string ans = j.at("ansatz").get<std::string>();
    if (ans == "delta_density") m.ansatz = Ansatz::delta_density;
    else if (ans == "delta_fock") m.ansatz = Ansatz::delta_fock;
    else throw Error("checkpoint: unknown ansatz '" + ans + "'");
    m.feature_spec.r_cut = j.at("feature_spec").at("r_cut").get<double>();
    m.feature_spec.n_rbf = j.at("feature_spec").at("n_rbf").get<int>();
    m.feature_spec.elements = j.at("feature_spec").at("elements").get<std::vector<int>>();
    m.hidden = j.at("hidden").get<int>();
    m.W1 = mat_from_json(j.at("parameters").at("W1"));
    m.b1 = mat_from_json(j.at("parameters").at("b1"));
    m.W2 = mat_from_json(j.at("parameters").at("W2"));
    m.b2 = mat_from_json(j.at("parameters").at("b2"));
    m.W3 = mat_from_json(j.at("parameters").at("W3"));
    m.b3 = mat_from_json(j.at("parameters").at("b3"));
    m.alpha = j.at("training").at("alpha").get<double>();
    m.basis_hash = hex_to_hash(j.at("training").at("basis_hash").get<std::string>());
    m.seed = j.at("training").at("seed").get<uint64_t>();
    return m;
}

PairBlocks pair_blocks(const Molecule& mol, const BasisContext& ctx, const FeatureSpec& fs) {
    int na = static_cast<int>(mol.atoms.size());
    PairBlocks pb;
    for (int i = 0; i < na; ++i)
        for (int j = i; j < na; ++j) pb.pairs.emplace_back(i, j);
    int np = static_cast<int>(pb.pairs.size());
    pb.features = Mat::Zero(fs.dim(), np);

    // per-function tags: owning atom, within-atom index, angular type and
    // Cartesian component; identical tags define the block identity pattern
    struct Tag {
        int atom, pos, l, comp;
    };
    std::vector<Tag> tags;
    {
        int mu = 0;
        int cur_atom = -1, pos = 0;
        for (const auto& sh : ctx.shells) {
            if (sh.center_atom != cur_atom) {
                cur_atom = sh.center_atom;
                pos = 0;
            }
            if (sh.angular_momentum == 0) {
                tags.push_back({sh.center_atom, pos++, 0, 0});
                ++mu;
            } else {
                for (int c = 0; c < 3; ++c) {
                    tags.push_back({sh.center_atom, pos++, 1, c});
                    ++mu;
                }
            }
        }
        if (mu != ctx.B) throw Error("pair_blocks: function count mismatch");
    }

    for (int p = 0; p < np; ++p) {
        auto [i, j] = pb.pairs[p];
        double r = (mol.atoms[i].position - mol.atoms[j].position).norm();
        pb.features.col(p) =
            fs.pair_features(mol.atoms[i].atomic_number, mol.atoms[j].atomic_number, r);
        Mat gm = Mat::Zero(ctx.B, ctx.B);
        Mat sm = Mat::Zero(ctx.B, ctx.B);
        for (int mu = 0; mu < ctx.B; ++mu)
            for (int nu = 0; nu < ctx.B; ++nu) {
                bool in_block = (tags[mu].atom == i && tags[nu].atom == j) ||
                                (tags[mu].atom == j && tags[nu].atom == i);
                if (!in_block) continue;
                gm(mu, nu) = 1.0;
                if (tags[mu].pos == tags[nu].pos && tags[mu].l == tags[nu].l &&
                    tags[mu].comp == tags[nu].comp)
                    sm(mu, nu) = 1.0;
            }
        pb.gain_masks.push_back(std::move(gm));
        pb.shift_masks.push_back(std::move(sm));
    }
    return pb;
}

BlockScalars eval_block_scalars(const GuessModel& model, const PairBlocks& blocks) {
    Mat H1 = ((model.W1 * blocks.features).colwise() + model.b1).array().tanh();
    Mat H2 = ((model.W2 * H1).colwise() + model.b2).array().tanh();
    Mat O = (model.W3 * H2).colwise() + model.b3;
    BlockScalars s;
    s.gains = 1.0 + 0.5 * O.row(0).array().tanh();
    s.shifts = 0.1 * O.row(1).array().tanh();
    return s;
}

Mat apply_block_scaling(const Mat& base, const PairBlocks& blocks, const BlockScalars& s) {
    Mat gm = Mat::Zero(base.rows(), base.cols());
    Mat dm = Mat::Zero(base.rows(), base.cols());
    for (size_t p = 0; p < blocks.pairs.size(); ++p) {
        gm += s.gains[p] * blocks.gain_masks[p];
        dm += s.shifts[p] * blocks.shift_masks[p];
    }
    return base.cwiseProduct(gm) + dm;
}

ModelGuessResult model_guess(const GuessModel& model, const Molecule& mol,
                             const BasisContext& ctx, const AtomicDensityTable& table) {
    ModelGuessResult out;
    auto blocks = pair_blocks(mol, ctx, model.feature_spec);
    auto scal = eval_block_scalars(model, blocks);
    Mat P_sad = purify(sad_raw(ctx, table), ctx, ctx.n_occ).P;

    if (model.ansatz == Ansatz::delta_density) {
        out.raw = apply_block_scaling(P_sad, blocks, scal);
        out.fock_builds_spent = 0;
        if (!out.raw.allFinite()) {
            out.P0 = P_sad;
            out.fell_back_to_sad = true;
            return out;
        }
        auto pur = purify(out.raw, ctx, ctx.n_occ);
        out.P0 = pur.P;
        out.degenerate_flag = pur.degenerate_boundary;
        return out;
    }

    FockCounter counter;
    Mat F_base = fock_build(P_sad, ctx, model.alpha, counter);
    out.raw = apply_block_scaling(F_base, blocks, scal);
    out.fock_builds_spent = counter.count; // exactly 1
    if (!out.raw.allFinite()) {
        out.P0 = P_sad;
        out.fell_back_to_sad = true;
        return out;
    }
    auto sol = solve_roothaan(out.raw, ctx);
    out.degenerate_flag =
        ctx.n_occ > 0 && ctx.n_occ < ctx.B && (sol.eps[ctx.n_occ] - sol.eps[ctx.n_occ - 1]) < 1e-6;
    out.P0 = density_from_orbitals(sol.C, ctx.n_occ);
    return out;
}

} // namespace sailscf
