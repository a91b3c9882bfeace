#include "sailscf/integrals.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "sailscf/boys.hpp"

namespace sailscf {

namespace {

// One Cartesian basis function (contracted).
struct BasisFn {
    Vec3 center;
    int lx = 0, ly = 0, lz = 0;
    int atom = 0;
    const Shell* shell = nullptr;
};

std::vector<BasisFn> expand_functions(const std::vector<Shell>& shells) {
    std::vector<BasisFn> fns;
    for (const auto& sh : shells) {
        BasisFn f;
        f.center = sh.center;
        f.atom = sh.center_atom;
        f.shell = &sh;
        if (sh.angular_momentum == 0) {
            fns.push_back(f);
        } else {
            // Cartesian p order fixed as x, y, z
            f.lx = 1; f.ly = 0; f.lz = 0; fns.push_back(f);
            f.lx = 0; f.ly = 1; f.lz = 0; fns.push_back(f);
            f.lx = 0; f.ly = 0; f.lz = 1; fns.push_back(f);
        }
    }
    return fns;
}

// Hermite expansion coefficient E_t^{ij} for a 1D Gaussian pair,
// Q = A - B along this axis.
double hermite_E(int i, int j, int t, double Q, double a, double b) {
    double p = a + b;
    double q = a * b / p;
    if (t < 0 || t > i + j) return 0.0;
    if (i == 0 && j == 0) return std::exp(-q * Q * Q); // t == 0 here
    if (i > 0) {
        return hermite_E(i - 1, j, t - 1, Q, a, b) / (2.0 * p) -
               q * Q / a * hermite_E(i - 1, j, t, Q, a, b) +
               (t + 1) * hermite_E(i - 1, j, t + 1, Q, a, b);
    }
    return hermite_E(i, j - 1, t - 1, Q, a, b) / (2.0 * p) +
           q * Q / b * hermite_E(i, j - 1, t, Q, a, b) +
           (t + 1) * hermite_E(i, j - 1, t + 1, Q, a, b);
}

constexpr int kMaxOrder = 5; // per-axis Hermite order bound for s/p quartets

// Hermite Coulomb integrals R^0_{tuv}(p, PC) for all t+u+v <= total.
struct HermiteR {
    double r[kMaxOrder][kMaxOrder][kMaxOrder];

    HermiteR(int total, double p, const Vec3& pc) {
        double x = p * pc.squaredNorm();
        double F[kMaxOrder * 3];
        boys_array(total, x, F);
        // aux[n][t][u][v], filled by increasing total Hermite order
        static thread_local double aux[kMaxOrder * 3][kMaxOrder][kMaxOrder][kMaxOrder];
        double m2p = 1.0;
        for (int n = 0; n <= total; ++n) {
            aux[n][0][0][0] = m2p * F[n];
            m2p *= -2.0 * p;
        }
        for (int L = 1; L <= total; ++L) {
            for (int t = 0; t <= L; ++t)
                for (int u = 0; u + t <= L; ++u) {
                    int v = L - t - u;
                    for (int n = 0; n <= total - L; ++n) {
                        double val;
                        if (t > 0) {
                            val = pc[0] * aux[n + 1][t - 1][u][v];
                            if (t > 1) val += (t - 1) * aux[n + 1][t - 2][u][v];
                        } else if (u > 0) {
                            val = pc[1] * aux[n + 1][t][u - 1][v];
                            if (u > 1) val += (u - 1) * aux[n + 1][t][u - 2][v];
                        } else {
                            val = pc[2] * aux[n + 1][t][u][v - 1];
                            if (v > 1) val += (v - 1) * aux[n + 1][t][u][v - 2];
                        }
                        aux[n][t][u][v] = val;
                    }
                }
        }
        for (int t = 0; t <= total; ++t)
            for (int u = 0; u + t <= total; ++u)
                for (int v = 0; v + t + u <= total; ++v) r[t][u][v] = aux[0][t][u][v];
    }
};

// Precomputed Hermite expansion of one contracted function pair.
struct PrimPair {
    double p;
    double cc;
    Vec3 P;
    double Ex[3], Ey[3], Ez[3];
};

struct PairData {
    int mu, nu;
    int nx, ny, nz; // Hermite order bounds per axis
    std::vector<PrimPair> prims;
};

PairData make_pair(const std::vector<BasisFn>& fns, int mu, int nu) {
    const BasisFn& f1 = fns[mu];
    const BasisFn& f2 = fns[nu];
    PairData pd;
    pd.mu = mu;
    pd.nu = nu;
    pd.nx = f1.lx + f2.lx;
    pd.ny = f1.ly + f2.ly;
    pd.nz = f1.lz + f2.lz;
    Vec3 AB = f1.center - f2.center;
    const auto& s1 = *f1.shell;
    const auto& s2 = *f2.shell;
    for (size_t i = 0; i < s1.exponents.size(); ++i)
        for (size_t j = 0; j < s2.exponents.size(); ++j) {
            PrimPair pp;
            double a = s1.exponents[i], b = s2.exponents[j];
            pp.p = a + b;
            pp.cc = s1.coefficients[i] * s2.coefficients[j];
            pp.P = (a * f1.center + b * f2.center) / pp.p;
            for (int t = 0; t <= pd.nx; ++t) pp.Ex[t] = hermite_E(f1.lx, f2.lx, t, AB[0], a, b);
            for (int t = 0; t <= pd.ny; ++t) pp.Ey[t] = hermite_E(f1.ly, f2.ly, t, AB[1], a, b);
            for (int t = 0; t <= pd.nz; ++t) pp.Ez[t] = hermite_E(f1.lz, f2.lz, t, AB[2], a, b);
            pd.prims.push_back(pp);
        }
    return pd;
}

} // namespace

OneElectron one_electron_integrals(const std::vector<Shell>& shells, const Molecule& mol) {
    auto fns = expand_functions(shells);
    int B = static_cast<int>(fns.size());
    OneElectron out;
    out.S = Mat::Zero(B, B);
    out.T = Mat::Zero(B, B);
    out.Vne = Mat::Zero(B, B);
    for (auto& d : out.D) d = Mat::Zero(B, B);

    for (int mu = 0; mu < B; ++mu) {
        for (int nu = 0; nu <= mu; ++nu) {
            const BasisFn& f1 = fns[mu];
            const BasisFn& f2 = fns[nu];
            const auto& s1 = *f1.shell;
            const auto& s2 = *f2.shell;
            Vec3 AB = f1.center - f2.center;
            double s = 0, t = 0, v = 0;
            Vec3 dip = Vec3::Zero();
            for (size_t i = 0; i < s1.exponents.size(); ++i)
                for (size_t j = 0; j < s2.exponents.size(); ++j) {
                    double a = s1.exponents[i], b = s2.exponents[j];
                    double p = a + b;
                    double cc = s1.coefficients[i] * s2.coefficients[j];
                    double pref = cc * std::pow(M_PI / p, 1.5);
                    Vec3 P = (a * f1.center + b * f2.center) / p;

                    double ex0 = hermite_E(f1.lx, f2.lx, 0, AB[0], a, b);
                    double ey0 = hermite_E(f1.ly, f2.ly, 0, AB[1], a, b);
                    double ez0 = hermite_E(f1.lz, f2.lz, 0, AB[2], a, b);
                    s += pref * ex0 * ey0 * ez0;

                    // 1D kinetic pieces via raised/lowered j
                    auto kin1d = [&](int i1, int j1, double Q) {
                        double k = -2.0 * b * b * hermite_E(i1, j1 + 2, 0, Q, a, b) +
                                   b * (2.0 * j1 + 1.0) * hermite_E(i1, j1, 0, Q, a, b);
                        if (j1 >= 2) k -= 0.5 * j1 * (j1 - 1.0) * hermite_E(i1, j1 - 2, 0, Q, a, b);
                        return k;
                    };
                    double tx = kin1d(f1.lx, f2.lx, AB[0]);
                    double ty = kin1d(f1.ly, f2.ly, AB[1]);
                    double tz = kin1d(f1.lz, f2.lz, AB[2]);
                    t += pref * (tx * ey0 * ez0 + ex0 * ty * ez0 + ex0 * ey0 * tz);

                    double ex1 = hermite_E(f1.lx, f2.lx, 1, AB[0], a, b);
                    double ey1 = hermite_E(f1.ly, f2.ly, 1, AB[1], a, b);
                    double ez1 = hermite_E(f1.lz, f2.lz, 1, AB[2], a, b);
                    dip[0] += pref * (ex1 + P[0] * ex0) * ey0 * ez0;
                    dip[1] += pref * ex0 * (ey1 + P[1] * ey0) * ez0;
                    dip[2] += pref * ex0 * ey0 * (ez1 + P[2] * ez0);

                    // nuclear attraction over all centers
                    int nx = f1.lx + f2.lx, ny = f1.ly + f2.ly, nz = f1.lz + f2.lz;
                    int total = nx + ny + nz;
                    double Ex[3], Ey[3], Ez[3];
                    for (int q = 0; q <= nx; ++q) Ex[q] = hermite_E(f1.lx, f2.lx, q, AB[0], a, b);
                    for (int q = 0; q <= ny; ++q) Ey[q] = hermite_E(f1.ly, f2.ly, q, AB[1], a, b);
                    for (int q = 0; q <= nz; ++q) Ez[q] = hermite_E(f1.lz, f2.lz, q, AB[2], a, b);
                    for (const auto& atom : mol.atoms) {
                        HermiteR R(total, p, P - atom.position);
                        double acc = 0;
                        for (int tt = 0; tt <= nx; ++tt)
                            for (int uu = 0; uu <= ny; ++uu)
                                for (int vv = 0; vv <= nz; ++vv)
                                    acc += Ex[tt] * Ey[uu] * Ez[vv] * R.r[tt][uu][vv];
                        v -= atom.atomic_number * cc * (2.0 * M_PI / p) * acc;
                    }
                }
            out.S(mu, nu) = out.S(nu, mu) = s;
            out.T(mu, nu) = out.T(nu, mu) = t;
            out.Vne(mu, nu) = out.Vne(nu, mu) = v;
            for (int ax = 0; ax < 3; ++ax) out.D[ax](mu, nu) = out.D[ax](nu, mu) = dip[ax];
        }
    }

    Eigen::SelfAdjointEigenSolver<Mat> es(out.S);
    if (es.eigenvalues().minCoeff() < 1e-8)
        throw Error("overlap matrix is (near-)singular: smallest eigenvalue " +
                    std::to_string(es.eigenvalues().minCoeff()) + " < 1e-8");
    return out;
}

EriTensor two_electron_integrals(const std::vector<Shell>& shells, size_t memory_cap_bytes) {
    auto fns = expand_functions(shells);
    int B = static_cast<int>(fns.size());
    size_t need = static_cast<size_t>(B) * B * B * B * sizeof(double);
    if (need > memory_cap_bytes)
        throw Error("ERI tensor would need " + std::to_string(need) + " bytes (cap " +
                    std::to_string(memory_cap_bytes) + ")");

    std::vector<PairData> pairs;
    pairs.reserve(static_cast<size_t>(B) * (B + 1) / 2);
    for (int mu = 0; mu < B; ++mu)
        for (int nu = 0; nu <= mu; ++nu) pairs.push_back(make_pair(fns, mu, nu));

    EriTensor eri(B);
    size_t np = pairs.size();
    for (size_t p1 = 0; p1 < np; ++p1) {
        const PairData& ab = pairs[p1];
        for (size_t p2 = 0; p2 <= p1; ++p2) {
            const PairData& cd = pairs[p2];
            int total = ab.nx + ab.ny + ab.nz + cd.nx + cd.ny + cd.nz;
            double val = 0;
            for (const auto& pp1 : ab.prims) {
                for (const auto& pp2 : cd.prims) {
                    double alpha = pp1.p * pp2.p / (pp1.p + pp2.p);
                    HermiteR R(total, alpha, pp1.P - pp2.P);
                    double acc = 0;
                    for (int t2 = 0; t2 <= cd.nx; ++t2)
                        for (int u2 = 0; u2 <= cd.ny; ++u2)
                            for (int v2 = 0; v2 <= cd.nz; ++v2) {
                                double e2 = pp2.Ex[t2] * pp2.Ey[u2] * pp2.Ez[v2];
                                if ((t2 + u2 + v2) & 1) e2 = -e2;
                                for (int t1 = 0; t1 <= ab.nx; ++t1)
                                    for (int u1 = 0; u1 <= ab.ny; ++u1)
                                        for (int v1 = 0; v1 <= ab.nz; ++v1)
                                            acc += pp1.Ex[t1] * pp1.Ey[u1] * pp1.Ez[v1] * e2 *
                                                   R.r[t1 + t2][u1 + u2][v1 + v2];
                            }
                    val += pp1.cc * pp2.cc * 2.0 * std::pow(M_PI, 2.5) /
                           (pp1.p * pp2.p * std::sqrt(pp1.p + pp2.p)) * acc;
                }
            }
            int mu = ab.mu, nu = ab.nu, la = cd.mu, si = cd.nu;
            eri.at(mu, nu, la, si) = val;
            eri.at(nu, mu, la, si) = val;
            eri.at(mu, nu, si, la) = val;
            eri.at(nu, mu, si, la) = val;
            eri.at(la, si, mu, nu) = val;
            eri.at(si, la, mu, nu) = val;
            eri.at(la, si, nu, mu) = val;
            eri.at(si, la, nu, mu) = val;
        }
    }
    return eri;
}

Mat EriTensor::coulomb(const Mat& P) const {
    // (mn|ls) P_ls as a B^2 x B^2 gemv; symmetric P makes the row-major
    // vectorization equal the column-major one.
    int B2 = b_ * b_;
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(
        v_.data(), B2, B2);
    Eigen::Map<const Vec> pv(P.data(), B2);
    Vec jv = M * pv;
    Mat J(b_, b_);
    std::memcpy(J.data(), jv.data(), sizeof(double) * B2);
    return J;
}

Mat EriTensor::exchange(const Mat& P) const {
    Mat K = Mat::Zero(b_, b_);
    for (int mu = 0; mu < b_; ++mu) {
        Vec acc = Vec::Zero(b_);
        for (int la = 0; la < b_; ++la) {
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                blk(v_.data() + (static_cast<size_t>(mu) * b_ + la) * b_ * b_, b_, b_);
            acc.noalias() += blk * P.col(la);
        }
        K.row(mu) = acc.transpose();
    }
    return K;
}

Mat inverse_sqrt_overlap(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    if (es.info() != Eigen::Success) throw Error("inverse_sqrt_overlap: eigensolver failed");
    if (es.eigenvalues().minCoeff() < 1e-8)
        throw Error("inverse_sqrt_overlap: eigenvalue " +
                    std::to_string(es.eigenvalues().minCoeff()) + " below 1e-8 floor");
    Vec inv_sqrt = es.eigenvalues().array().rsqrt();
    return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

double nuclear_repulsion(const Molecule& mol) {
    double e = 0;
    for (size_t i = 0; i < mol.atoms.size(); ++i)
        for (size_t j = i + 1; j < mol.atoms.size(); ++j)
            e += mol.atoms[i].atomic_number * mol.atoms[j].atomic_number /
                 (mol.atoms[i].position - mol.atoms[j].position).norm();
    return e;
}

uint64_t geometry_basis_hash(const Molecule& mol, const std::string& basis_text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, size_t n) {
        const unsigned char* c = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ULL;
        }
    };
    uint64_t na = mol.atoms.size();
    mix(&na, sizeof(na));
    for (const auto& a : mol.atoms) {
        int64_t z = a.atomic_number;
        mix(&z, sizeof(z));
        for (int k = 0; k < 3; ++k) {
            double x = a.position[k];
            mix(&x, sizeof(x));
        }
    }
    mix(basis_text.data(), basis_text.size());
    return h;
}

BasisContext build_context(const Molecule& mol, const std::string& basis_text,
                           size_t memory_cap_bytes) {
    mol.validate();
    BasisContext ctx;
    ctx.shells = load_basis(mol, basis_text);
    auto one = one_electron_integrals(ctx.shells, mol);
    ctx.S = std::move(one.S);
    ctx.T = std::move(one.T);
    ctx.Vne = std::move(one.Vne);
    ctx.D = std::move(one.D);
    ctx.Hcore = ctx.T + ctx.Vne;
    ctx.eri = two_electron_integrals(ctx.shells, memory_cap_bytes);
    ctx.X = inverse_sqrt_overlap(ctx.S);
    {
        Eigen::SelfAdjointEigenSolver<Mat> es(ctx.S);
        Vec sq = es.eigenvalues().array().sqrt();
        ctx.Xinv = es.eigenvectors() * sq.asDiagonal() * es.eigenvectors().transpose();
    }
    ctx.e_nuc = nuclear_repulsion(mol);
    ctx.B = static_cast<int>(ctx.S.rows());
    ctx.n_occ = mol.electron_count() / 2;
    auto fns = expand_functions(ctx.shells);
    for (const auto& f : fns) ctx.atom_of_function.push_back(f.atom);
    for (const auto& a : mol.atoms) ctx.atomic_numbers.push_back(a.atomic_number);
    ctx.content_hash = geometry_basis_hash(mol, basis_text);
    return ctx;
}

namespace {

constexpr char kCtxMagic[8] = {'S', 'S', 'C', 'F', 'C', 'T', 'X', '1'};

void write_mat(std::ofstream& out, const Mat& m) {
    int64_t r = m.rows(), c = m.cols();
    out.write(reinterpret_cast<const char*>(&r), 8);
    out.write(reinterpret_cast<const char*>(&c), 8);
    out.write(reinterpret_cast<const char*>(m.data()), sizeof(double) * r * c);
}

Mat read_mat(std::ifstream& in) {
    int64_t r = 0, c = 0;
    in.read(reinterpret_cast<char*>(&r), 8);
    in.read(reinterpret_cast<char*>(&c), 8);
    if (!in || r < 0 || c < 0 || r > 100000 || c > 100000) throw Error("context cache: corrupt matrix header");
    Mat m(r, c);
    in.read(reinterpret_cast<char*>(m.data()), sizeof(double) * r * c);
    if (!in) throw Error("context cache: truncated matrix payload");
    return m;
}

} // namespace

void save_context(const BasisContext& ctx, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open context cache file for writing: " + path);
    out.write(kCtxMagic, 8);
    uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&ctx.content_hash), 8);
    int32_t b = ctx.B, nocc = ctx.n_occ;
    out.write(reinterpret_cast<const char*>(&b), 4);
    out.write(reinterpret_cast<const char*>(&nocc), 4);
    out.write(reinterpret_cast<const char*>(&ctx.e_nuc), 8);
    write_mat(out, ctx.S);
    write_mat(out, ctx.T);
    write_mat(out, ctx.Vne);
    for (const auto& d : ctx.D) write_mat(out, d);
    write_mat(out, ctx.X);
    write_mat(out, ctx.Xinv);
    int64_t nfun = ctx.atom_of_function.size();
    out.write(reinterpret_cast<const char*>(&nfun), 8);
    for (int v : ctx.atom_of_function) {
        int32_t x = v;
        out.write(reinterpret_cast<const char*>(&x), 4);
    }
    int64_t natoms = ctx.atomic_numbers.size();
    out.write(reinterpret_cast<const char*>(&natoms), 8);
    for (int v : ctx.atomic_numbers) {
        int32_t x = v;
        out.write(reinterpret_cast<const char*>(&x), 4);
    }
    int64_t nv = ctx.eri.data().size();
    out.write(reinterpret_cast<const char*>(&nv), 8);
    out.write(reinterpret_cast<const char*>(ctx.eri.data().data()), sizeof(double) * nv);
}

std::optional<BasisContext> load_context(const std::string& path, uint64_t expected_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCtxMagic, 8) != 0) return std::nullopt;
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) return std::nullopt;
    uint64_t hash = 0;
    in.read(reinterpret_cast<char*>(&hash), 8);
    if (hash != expected_hash) return std::nullopt;
    BasisContext ctx;
    int32_t b = 0, nocc = 0;
    in.read(reinterpret_cast<char*>(&b), 4);
    in.read(reinterpret_cast<char*>(&nocc), 4);
    in.read(reinterpret_cast<char*>(&ctx.e_nuc), 8);
    ctx.B = b;
    ctx.n_occ = nocc;
    ctx.S = read_mat(in);
    ctx.T = read_mat(in);
    ctx.Vne = read_mat(in);
    for (auto& d : ctx.D) d = read_mat(in);
    ctx.X = read_mat(in);
    ctx.Xinv = read_mat(in);
    ctx.Hcore = ctx.T + ctx.Vne;
    int64_t nfun = 0;
    in.read(reinterpret_cast<char*>(&nfun), 8);
    ctx.atom_of_function.resize(nfun);
    for (auto& v : ctx.atom_of_function) {
        int32_t x = 0;
        in.read(reinterpret_cast<char*>(&x), 4);
        v = x;
    }
    int64_t natoms = 0;
    in.read(reinterpret_cast<char*>(&natoms), 8);
    ctx.atomic_numbers.resize(natoms);
    for (auto& v : ctx.atomic_numbers) {
        int32_t x = 0;
        in.read(reinterpret_cast<char*>(&x), 4);
        v = x;
    }
    int64_t nv = 0;
    in.read(reinterpret_cast<char*>(&nv), 8);
    EriTensor eri(b);
    if (nv != static_cast<int64_t>(eri.data().size())) return std::nullopt;
    in.read(reinterpret_cast<char*>(eri.data().data()), sizeof(double) * nv);
    if (!in) return std::nullopt;
    ctx.eri = std::move(eri);
    ctx.content_hash = hash;
    return ctx;
}

BasisContext build_context_cached(const Molecule& mol, const std::string& basis_text,
                                  const std::string& cache_dir, size_t memory_cap_bytes) {
    if (cache_dir.empty()) return build_context(mol, basis_text, memory_cap_bytes);
    uint64_t hash = geometry_basis_hash(mol, basis_text);
    char name[32];
    std::snprintf(name, sizeof(name), "%016llx.ctx", static_cast<unsigned long long>(hash));
    std::filesystem::create_directories(cache_dir);
    std::string path = cache_dir + "/" + name;
    if (auto ctx = load_context(path, hash)) {
        // shells are not serialized; rebuild them (cheap)
        ctx->shells = load_basis(mol, basis_text);
        return std::move(*ctx);
    }
    BasisContext ctx = build_context(mol, basis_text, memory_cap_bytes);
    save_context(ctx, path);
    return ctx;
}

} // namespace sailscf
