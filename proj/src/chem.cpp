#include "sailscf/chem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "sailscf/rng.hpp"

namespace sailscf {

double SplitMix64::next_normal() {
    // Box-Muller; u1 shifted away from zero.
    double u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1 + 0x1.0p-54));
    return r * std::cos(2.0 * M_PI * u2);
}

namespace {

const std::map<std::string, int> kSymbolToZ = {
    {"H", 1},  {"He", 2}, {"Li", 3}, {"Be", 4}, {"B", 5},
    {"C", 6},  {"N", 7},  {"O", 8},  {"F", 9},
};

const char* kZToSymbol[] = {"X", "H", "He", "Li", "Be", "B", "C", "N", "O", "F"};

std::string normalize_symbol(std::string s) {
    if (s.empty()) return s;
    s[0] = static_cast<char>(std::toupper(s[0]));
    for (size_t i = 1; i < s.size(); ++i) s[i] = static_cast<char>(std::tolower(s[i]));
    return s;
}

} // namespace

int atomic_number_from_symbol(const std::string& symbol) {
    auto it = kSymbolToZ.find(normalize_symbol(symbol));
    if (it == kSymbolToZ.end())
        throw Error("unknown element symbol '" + symbol + "'");
    return it->second;
}

const char* symbol_from_atomic_number(int z) {
    if (z < 1 || z > 9) throw Error("atomic number out of supported range: " + std::to_string(z));
    return kZToSymbol[z];
}

int Molecule::electron_count() const {
    int n = 0;
    for (const auto& a : atoms) n += a.atomic_number;
    return n - charge;
}

int Molecule::heavy_atom_count() const {
    int n = 0;
    for (const auto& a : atoms) n += (a.atomic_number > 1) ? 1 : 0;
    return n;
}

void Molecule::validate() const {
    if (atoms.empty()) throw Error("molecule '" + name + "' has no atoms");
    for (const auto& a : atoms) {
        if (a.atomic_number < 1)
            throw Error("molecule '" + name + "': atomic number must be >= 1");
        if (!a.position.allFinite())
            throw Error("molecule '" + name + "': non-finite coordinates");
    }
    for (size_t i = 0; i < atoms.size(); ++i)
        for (size_t j = i + 1; j < atoms.size(); ++j) {
            double d = (atoms[i].position - atoms[j].position).norm();
            if (d <= 0.1)
                throw Error("molecule '" + name + "': atoms " + std::to_string(i) + " and " +
                            std::to_string(j) + " closer than 0.1 Bohr (" + std::to_string(d) + ")");
        }
    if (electron_count() % 2 != 0)
        throw Error("molecule '" + name + "': odd electron count " +
                    std::to_string(electron_count()) + " (closed-shell only)");
}

Molecule parse_xyz(const std::string& text, const std::string& name) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;

    auto next_line = [&](bool required) -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            return true;
        }
        if (required) throw Error("xyz: unexpected end of input after line " + std::to_string(lineno));
        return false;
    };

    next_line(true);
    int count = 0;
    {
        std::istringstream ls(line);
        if (!(ls >> count) || count < 1) {
            std::string extra;
            throw Error("xyz line 1: malformed atom count '" + line + "'");
        }
        std::string trailing;
        if (ls >> trailing) throw Error("xyz line 1: trailing tokens after atom count");
    }
    next_line(true); // comment line, ignored

    Molecule mol;
    mol.name = name;
    for (int i = 0; i < count; ++i) {
        next_line(true);
        std::istringstream ls(line);
        std::string sym;
        double x, y, z;
        if (!(ls >> sym >> x >> y >> z))
            throw Error("xyz line " + std::to_string(lineno) + ": expected 'symbol x y z'");
        Atom a;
        try {
            a.atomic_number = atomic_number_from_symbol(sym);
        } catch (const Error&) {
            throw Error("xyz line " + std::to_string(lineno) + ": unknown element symbol '" + sym + "'");
        }
        a.position = Vec3(x, y, z) * kAngstromToBohr;
        mol.atoms.push_back(a);
    }
    if (mol.electron_count() % 2 != 0)
        throw Error("xyz line " + std::to_string(lineno) + ": odd electron count " +
                    std::to_string(mol.electron_count()) + " (closed-shell only)");
    mol.validate();
    return mol;
}

std::string emit_xyz(const Molecule& mol) {
    std::ostringstream out;
    out << mol.atoms.size() << "\n" << mol.name << "\n";
    char buf[96];
    for (const auto& a : mol.atoms) {
        Vec3 ang = a.position / kAngstromToBohr;
        std::snprintf(buf, sizeof(buf), "%-2s %.11e %.11e %.11e\n",
                      symbol_from_atomic_number(a.atomic_number), ang[0], ang[1], ang[2]);
        out << buf;
    }
    return out.str();
}

Molecule perturb_geometry(const Molecule& mol, double amplitude, uint64_t seed) {
    if (amplitude < 0) throw Error("perturb_geometry: amplitude must be >= 0");
    for (int attempt = 0; attempt < 100; ++attempt) {
        SplitMix64 rng(SplitMix64::derive(seed, static_cast<uint64_t>(attempt)));
        Molecule out = mol;
        for (auto& a : out.atoms)
            for (int k = 0; k < 3; ++k) a.position[k] += rng.next_symmetric(amplitude);
        try {
            out.validate();
            return out;
        } catch (const Error&) {
            // distance invariant failed, retry with the next sub-seed
        }
    }
    throw Error("perturb_geometry: 100 retries exhausted for molecule '" + mol.name + "'");
}

int basis_dimension(const std::vector<Shell>& shells) {
    int b = 0;
    for (const auto& s : shells) b += s.n_functions();
    return b;
}

} // namespace sailscf

namespace sailscf {

namespace {

double parse_g94_number(const std::string& token, const char* what) {
    std::string t = token;
    for (auto& c : t)
        if (c == 'D' || c == 'd') c = 'E';
    size_t pos = 0;
    double v;
    try {
        v = std::stod(t, &pos);
    } catch (const std::exception&) {
        throw Error(std::string("basis: malformed ") + what + " '" + token + "'");
    }
    if (pos != t.size()) throw Error(std::string("basis: malformed ") + what + " '" + token + "'");
    return v;
}

struct RawShellBlock {
    std::string kind; // S, P, SP
    std::vector<double> exponents;
    std::vector<double> c0; // S coefficients (or P for a P block)
    std::vector<double> c1; // P coefficients of an SP block
};

struct ElementBasis {
    std::vector<RawShellBlock> blocks;
};

// Same-center self-overlap of a normalized-primitive contraction with
// Cartesian quantum numbers (l,0,0).
double contracted_self_overlap(int l, const std::vector<double>& exps,
                               const std::vector<double>& coeffs) {
    double s = 0.0;
    for (size_t i = 0; i < exps.size(); ++i)
        for (size_t j = 0; j < exps.size(); ++j) {
            double p = exps[i] + exps[j];
            double sp = std::pow(M_PI / p, 1.5);
            if (l == 1) sp /= 2.0 * p;
            s += coeffs[i] * coeffs[j] * sp;
        }
    return s;
}

double primitive_norm(int l, double alpha) {
    // (2a/pi)^{3/4} * (4a)^{l/2} / sqrt((2l-1)!!)
    double n = std::pow(2.0 * alpha / M_PI, 0.75);
    if (l == 1) n *= 2.0 * std::sqrt(alpha);
    return n;
}

Shell make_shell(int atom, const Vec3& center, int l, const std::vector<double>& exps,
                 const std::vector<double>& raw_coeffs) {
    Shell sh;
    sh.center_atom = atom;
    sh.center = center;
    sh.angular_momentum = l;
    sh.exponents = exps;
    sh.coefficients.resize(raw_coeffs.size());
    for (size_t i = 0; i < exps.size(); ++i) {
        if (exps[i] <= 0.0) throw Error("basis: non-positive exponent");
        if (i > 0 && exps[i] >= exps[i - 1])
            throw Error("basis: exponents must be strictly decreasing within a shell");
        sh.coefficients[i] = raw_coeffs[i] * primitive_norm(l, exps[i]);
    }
    double s = contracted_self_overlap(l, sh.exponents, sh.coefficients);
    if (s <= 0.0) throw Error("basis: contraction has non-positive self-overlap");
    double scale = 1.0 / std::sqrt(s);
    for (auto& c : sh.coefficients) c *= scale;
    return sh;
}

std::map<int, ElementBasis> parse_g94(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::map<int, ElementBasis> table;

    auto is_blank = [](const std::string& s) {
        return s.find_first_not_of(" \t\r\n") == std::string::npos;
    };

    while (std::getline(in, line)) {
        if (is_blank(line) || line[0] == '!') continue;
        // element header: "Sym 0"
        std::istringstream hs(line);
        std::string sym;
        hs >> sym;
        int z = atomic_number_from_symbol(sym);
        ElementBasis eb;
        while (std::getline(in, line)) {
            if (is_blank(line)) continue;
            std::istringstream ls(line);
            std::string kind;
            ls >> kind;
            if (kind == "****") break;
            for (auto& c : kind) c = static_cast<char>(std::toupper(c));
            if (kind != "S" && kind != "P" && kind != "SP")
                throw Error("basis: unsupported shell type '" + kind + "' (s and p only)");
            std::string nprim_tok;
            ls >> nprim_tok;
            int nprim = 0;
            try {
                nprim = std::stoi(nprim_tok);
            } catch (const std::exception&) {
                throw Error("basis: malformed primitive count '" + nprim_tok + "'");
            }
            if (nprim < 1) throw Error("basis: primitive count must be >= 1");
            RawShellBlock blk;
            blk.kind = kind;
            for (int i = 0; i < nprim; ++i) {
                if (!std::getline(in, line))
                    throw Error("basis: unexpected end of primitive list for " + sym);
                std::istringstream ps(line);
                std::vector<std::string> toks;
                std::string t;
                while (ps >> t) toks.push_back(t);
                size_t expected = (kind == "SP") ? 3 : 2;
                if (toks.size() != expected)
                    throw Error("basis: ragged coefficient list for " + sym + " " + kind +
                                " (expected " + std::to_string(expected) + " columns, got " +
                                std::to_string(toks.size()) + ")");
                blk.exponents.push_back(parse_g94_number(toks[0], "exponent"));
                blk.c0.push_back(parse_g94_number(toks[1], "coefficient"));
                if (kind == "SP") blk.c1.push_back(parse_g94_number(toks[2], "coefficient"));
            }
            eb.blocks.push_back(std::move(blk));
        }
        table[z] = std::move(eb);
    }
    return table;
}

} // namespace

std::vector<Shell> load_basis(const Molecule& mol, const std::string& basis_text) {
    auto table = parse_g94(basis_text);
    std::vector<Shell> shells;
    for (size_t ia = 0; ia < mol.atoms.size(); ++ia) {
        int z = mol.atoms[ia].atomic_number;
        auto it = table.find(z);
        if (it == table.end())
            throw Error(std::string("basis: no entry for element ") + symbol_from_atomic_number(z));
        const Vec3& pos = mol.atoms[ia].position;
        for (const auto& blk : it->second.blocks) {
            if (blk.kind == "S") {
                shells.push_back(make_shell(static_cast<int>(ia), pos, 0, blk.exponents, blk.c0));
            } else if (blk.kind == "P") {
                shells.push_back(make_shell(static_cast<int>(ia), pos, 1, blk.exponents, blk.c0));
            } else { // SP
                shells.push_back(make_shell(static_cast<int>(ia), pos, 0, blk.exponents, blk.c0));
                shells.push_back(make_shell(static_cast<int>(ia), pos, 1, blk.exponents, blk.c1));
            }
        }
    }
    return shells;
}

} // namespace sailscf
