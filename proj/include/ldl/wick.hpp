// wick.hpp: finite-ξ correlators of N_{f,g,ξ}(t) in the quasifree state and their ξ→0 limit.
//
// Each energy bin is a continuum component of weight ΔE_j with a Lorentzian
// line shape of width Γ_j, so ⟨g, S_s P_j f⟩ = ΔE_j ⟨v_g, v_f⟩ e^{isE_j − Γ_j|s|/2}.
// Two-point functions (A⁺ left of A: N = ξL(1−ξL)⁻¹, A left of A⁺: 1 + N):
//   φ(A⁺(S_{t/ξ}f) A(S_{t'/ξ}g)) = Σ_j ΔE_j ⟨v_g, N_j v_f⟩ e^{(iE_j − Γ_j/2)(t−t')/ξ}, t ≥ t'.
//
// Integrated correlators run over the simplex t ≥ t_1 ≥ … ≥ t_n ≥ 0 written in gap
// variables u_0 = t − t_1, u_k = t_k − t_{k+1}, u_n = t_n. A contraction between
// slots s < s' adds its rate κ to the nodes of gaps s … s'−1, and the simplex
// integral of exp(Σ φ_k u_k) is the divided difference of x ↦ e^{xt} at the
// nodes φ_0 … φ_n, evaluated as a matrix exponential.

#pragma once

#include "ldl/linalg.hpp"
#include "ldl/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace ldl {

struct CombinatoricsOverflow : Error {
    using Error::Error;
};

inline constexpr int wick_default_n_max = 4;
inline constexpr double wick_default_budget = 4e6;

// ---- divided differences ----

// e^{xt}[x_0, …, x_n] = exp(t·A)(n, 0) with A lower bidiagonal: diag x, subdiag 1.
// Confluent nodes are handled without special cases.
inline cplx exp_divided_difference(const std::vector<cplx>& nodes, double t) {
    const auto n = static_cast<Eigen::Index>(nodes.size());
    if (n == 0) throw InvalidArgument("exp_divided_difference: no nodes");
    if (n == 1) return std::exp(nodes[0] * t);
    cmat a = cmat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i, i) = nodes[static_cast<std::size_t>(i)] * t;
        if (i > 0) a(i, i - 1) = t;
    }
    const cmat e = a.exp();
    return e(n - 1, 0);
}

// ---- model ----

struct WickModel {
    std::vector<double> energy, width, linewidth;
    std::vector<std::array<cvec, 2>> v;
    std::vector<cmat> l;

    std::size_t bins() const { return energy.size(); }

    static WickModel from(const Model& m) {
        WickModel w;
        for (std::size_t j = 0; j < m.grid.size(); ++j) {
            w.energy.push_back(m.grid[j].center);
            w.width.push_back(m.grid[j].width);
            w.linewidth.push_back(m.broadening * m.grid[j].width);
        }
        w.v = m.form_factors.amplitudes;
        w.l = m.gas.weights;
        return w;
    }

    // ΔE_j ⟨v_g, K v_f⟩
    cplx pair(std::size_t j, int g, int f, const cmat& k) const {
        return width[j] * v[j][static_cast<std::size_t>(g)].dot(k * v[j][static_cast<std::size_t>(f)]);
    }

    cmat occupation(std::size_t j, double xi) const {
        const cmat one = identity(l[j].rows());
        return (xi * l[j]) * (one - xi * l[j]).inverse();
    }

    // γ_{g,f}(z) = Σ_j ΔE_j ⟨v_g, v_f⟩_j / (i(E_j − z) + Γ_j/2), Im z ≥ 0
    cplx causal_gamma(int g, int f, cplx z) const {
        cplx acc = 0.0;
        for (std::size_t j = 0; j < bins(); ++j) {
            const cplx gj = width[j] * v[j][static_cast<std::size_t>(g)].dot(v[j][static_cast<std::size_t>(f)]);
            acc += gj / (I * (energy[j] - z) + 0.5 * linewidth[j]);
        }
        return acc;
    }

    void validate() const {
        if (bins() == 0) throw InvalidArgument("WickModel: no bins");
        if (width.size() != bins() || linewidth.size() != bins() || v.size() != bins() || l.size() != bins()) {
            throw ShapeMismatch("WickModel: per-bin arrays differ in length");
        }
        for (double g : linewidth) {
            if (g < 0.0) throw InvalidArgument("WickModel: negative linewidth");
        }
    }
};

// ---- specs ----

struct Factor {
    int f{0};
    int g{0};
    int slot{1};  // simplex time index; slot 0 is the fixed outer time t
};

struct CorrelatorSpec {
    std::vector<Factor> factors;

    std::size_t order() const { return factors.size(); }

    // N_{f1,g1}(t1) … N_{fn,gn}(tn) with t ≥ t1 ≥ … ≥ tn
    static CorrelatorSpec time_ordered(const std::vector<std::pair<int, int>>& channels) {
        CorrelatorSpec s;
        int slot = 1;
        for (auto [f, g] : channels) s.factors.push_back({f, g, slot++});
        return s;
    }

    // Operator adjoint: reversed order, f and g swapped, times kept.
    CorrelatorSpec adjoint() const {
        CorrelatorSpec s;
        for (auto it = factors.rbegin(); it != factors.rend(); ++it) s.factors.push_back({it->g, it->f, it->slot});
        return s;
    }

    bool is_time_ordered() const {
        for (std::size_t i = 0; i < factors.size(); ++i) {
            if (factors[i].slot != static_cast<int>(i) + 1) return false;
        }
        return true;
    }

    bool is_anti_time_ordered() const {
        const auto n = static_cast<int>(factors.size());
        for (int i = 0; i < n; ++i) {
            if (factors[static_cast<std::size_t>(i)].slot != n - i) return false;
        }
        return true;
    }

    void validate(int n_max = wick_default_n_max) const {
        const auto n = static_cast<int>(factors.size());
        if (n > n_max) {
            throw InvalidArgument("CorrelatorSpec: order " + std::to_string(n) + " exceeds n_max " +
                                  std::to_string(n_max));
        }
        std::vector<int> slots;
        for (const auto& fa : factors) {
            if (fa.f < 0 || fa.f > 1 || fa.g < 0 || fa.g > 1) throw InvalidArgument("CorrelatorSpec: channel must be 0 or 1");
            if (fa.slot < 1 || fa.slot > n) throw InvalidArgument("CorrelatorSpec: slot out of range");
            slots.push_back(fa.slot);
        }
        std::sort(slots.begin(), slots.end());
        if (std::adjacent_find(slots.begin(), slots.end()) != slots.end()) {
            throw InvalidArgument("CorrelatorSpec: slots must be distinct");
        }
    }
};

struct FieldOp {
    bool creation{true};
    int channel{0};
    int slot{0};
    int bin{-1};  // restrict to P_bin when >= 0
};

inline std::vector<FieldOp> field_ops(const CorrelatorSpec& spec) {
    std::vector<FieldOp> ops;
    for (const auto& fa : spec.factors) {
        ops.push_back({true, fa.f, fa.slot, -1});
        ops.push_back({false, fa.g, fa.slot, -1});
    }
    return ops;
}

// ---- Wick pairings ----

struct Contraction {
    std::size_t cre{0}, ann{0};  // positions in the operator sequence
    bool forward{false};         // A left of A⁺ → kernel 1 + N
};

struct Pairing {
    std::vector<std::size_t> perm;  // creation k ↦ annihilation perm[k] (indices among each kind)
    std::vector<Contraction> contractions;
};

// All n! creation/annihilation matchings.
inline std::vector<Pairing> enumerate_pairings(const std::vector<FieldOp>& ops) {
    std::vector<std::size_t> cre, ann;
    for (std::size_t p = 0; p < ops.size(); ++p) (ops[p].creation ? cre : ann).push_back(p);
    if (cre.size() != ann.size()) return {};  // gauge invariance: unbalanced moments vanish
    std::vector<std::size_t> perm(cre.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<Pairing> out;
    do {
        Pairing pr;
        pr.perm = perm;
        for (std::size_t k = 0; k < cre.size(); ++k) {
            const std::size_t c = cre[k], a = ann[perm[k]];
            pr.contractions.push_back({c, a, a < c});
        }
        out.push_back(std::move(pr));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

inline int permutation_cycles(const std::vector<std::size_t>& perm) {
    std::vector<bool> seen(perm.size(), false);
    int cycles = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (seen[i]) continue;
        ++cycles;
        for (std::size_t k = i; !seen[k]; k = perm[k]) seen[k] = true;
    }
    return cycles;
}

// ---- exact finite-ξ correlator ----

struct PairingValue {
    std::vector<std::size_t> perm;
    int cycles{0};
    cplx value{0.0};
};

struct ExactResult {
    cplx value{0.0};
    std::vector<PairingValue> pairings;
    double terms{0.0};
};

struct ExactOptions {
    double budget{wick_default_budget};
    int n_max{wick_default_n_max};
};

namespace detail {

struct ContractionTable {
    std::vector<std::size_t> bins;
    std::vector<cplx> weight;  // ΔE_k ⟨v_g, K v_f⟩
    std::vector<cplx> rate;    // κ_k, added to gaps [lo, hi)
    int lo{0}, hi{0};
};

inline ContractionTable tabulate(const WickModel& m, const FieldOp& c, const FieldOp& a, bool forward, double xi,
                                 const std::vector<cmat>& occ) {
    ContractionTable tab;
    const bool later_creation = c.slot <= a.slot;  // smaller slot = later time
    tab.lo = std::min(c.slot, a.slot);
    tab.hi = std::max(c.slot, a.slot);
    for (std::size_t k = 0; k < m.bins(); ++k) {
        if (c.bin >= 0 && static_cast<std::size_t>(c.bin) != k) continue;
        if (a.bin >= 0 && static_cast<std::size_t>(a.bin) != k) continue;
        const cmat& nk = occ[k];
        const cmat kern = forward ? cmat(identity(nk.rows()) + nk) : nk;
        const cplx w = m.pair(k, a.channel, c.channel, kern);
        if (w == cplx{0.0, 0.0}) continue;
        tab.bins.push_back(k);
        tab.weight.push_back(w);
        const cplx phase = later_creation ? I * m.energy[k] : -I * m.energy[k];
        tab.rate.push_back((phase - 0.5 * m.linewidth[k]) / xi);
    }
    return tab;
}

} // namespace detail

// ∫_{t ≥ t_1 ≥ … ≥ t_n ≥ 0} φ_{L,ξ}(ops) with a prefactor ξ^{-#creations}.
// n_slots integrated times; slot 0 is pinned to t.
inline ExactResult exact_ops(const WickModel& m, const std::vector<FieldOp>& ops, int n_slots, double t, double xi,
                             const ExactOptions& opt = {}) {
    m.validate();
    if (!(xi > 0.0 && xi < 1.0)) throw InvalidArgument("exact_correlator: xi must lie in (0,1)");
    if (t < 0.0) throw InvalidArgument("exact_correlator: t must be >= 0");
    for (const auto& op : ops) {
        if (op.slot < 0 || op.slot > n_slots) throw InvalidArgument("exact_correlator: slot out of range");
    }
    std::vector<cmat> occ;
    for (std::size_t k = 0; k < m.bins(); ++k) occ.push_back(m.occupation(k, xi));

    const auto pairings = enumerate_pairings(ops);
    std::vector<std::vector<detail::ContractionTable>> tables;
    double terms = 0.0;
    for (const auto& pr : pairings) {
        std::vector<detail::ContractionTable> tabs;
        double count = 1.0;
        for (const auto& c : pr.contractions) {
            tabs.push_back(detail::tabulate(m, ops[c.cre], ops[c.ann], c.forward, xi, occ));
            if (tabs.back().lo != tabs.back().hi) count *= static_cast<double>(tabs.back().bins.size());
        }
        terms += count;
        tables.push_back(std::move(tabs));
    }
    if (terms > opt.budget) {
        throw CombinatoricsOverflow("exact_correlator: " + std::to_string(terms) + " terms exceed budget " +
                                    std::to_string(opt.budget));
    }

    std::size_t n_cre = 0;
    for (const auto& op : ops) n_cre += op.creation ? 1 : 0;
    const double prefactor = std::pow(xi, -static_cast<double>(n_cre));

    ExactResult res;
    res.terms = terms;
    const auto n_nodes = static_cast<std::size_t>(n_slots) + 1;
    for (std::size_t p = 0; p < pairings.size(); ++p) {
        const auto& tabs = tables[p];
        cplx constant = 1.0;
        std::vector<const detail::ContractionTable*> spanning;
        for (const auto& tab : tabs) {
            if (tab.lo == tab.hi) {
                cplx s = 0.0;
                for (const auto& w : tab.weight) s += w;
                constant *= s;
            } else {
                spanning.push_back(&tab);
            }
        }
        cplx sum = 0.0;
        if (constant != cplx{0.0, 0.0}) {
            std::vector<cplx> nodes(n_nodes, 0.0);
            // Depth-first over the bins of the spanning contractions.
            auto recurse = [&](auto&& self, std::size_t depth, cplx weight) -> void {
                if (depth == spanning.size()) {
                    sum += weight * exp_divided_difference(nodes, t);
                    return;
                }
                const auto& tab = *spanning[depth];
                for (std::size_t b = 0; b < tab.bins.size(); ++b) {
                    for (int g = tab.lo; g < tab.hi; ++g) nodes[static_cast<std::size_t>(g)] += tab.rate[b];
                    self(self, depth + 1, weight * tab.weight[b]);
                    for (int g = tab.lo; g < tab.hi; ++g) nodes[static_cast<std::size_t>(g)] -= tab.rate[b];
                }
            };
            recurse(recurse, 0, cplx{1.0, 0.0});
        }
        const cplx value = prefactor * constant * sum;
        res.pairings.push_back({pairings[p].perm, permutation_cycles(pairings[p].perm), value});
        res.value += value;
    }
    return res;
}

inline ExactResult exact_correlator(const WickModel& m, const CorrelatorSpec& spec, double t, double xi,
                                    const ExactOptions& opt = {}) {
    spec.validate(opt.n_max);
    return exact_ops(m, field_ops(spec), static_cast<int>(spec.order()), t, xi, opt);
}

// φ_{L,ξ}(ops) at fixed times; times[s] is the time of slot s.
inline cplx fixed_time_ops(const WickModel& m, const std::vector<FieldOp>& ops, const std::vector<double>& times,
                           double xi) {
    m.validate();
    if (!(xi > 0.0 && xi < 1.0)) throw InvalidArgument("fixed_time_correlator: xi must lie in (0,1)");
    std::vector<cmat> occ;
    for (std::size_t k = 0; k < m.bins(); ++k) occ.push_back(m.occupation(k, xi));
    std::size_t n_cre = 0;
    for (const auto& op : ops) n_cre += op.creation ? 1 : 0;
    cplx total = 0.0;
    for (const auto& pr : enumerate_pairings(ops)) {
        cplx prod = 1.0;
        for (const auto& c : pr.contractions) {
            const auto& cop = ops[c.cre];
            const auto& aop = ops[c.ann];
            const double s = (times.at(static_cast<std::size_t>(cop.slot)) - times.at(static_cast<std::size_t>(aop.slot))) / xi;
            cplx acc = 0.0;
            for (std::size_t k = 0; k < m.bins(); ++k) {
                if (cop.bin >= 0 && static_cast<std::size_t>(cop.bin) != k) continue;
                if (aop.bin >= 0 && static_cast<std::size_t>(aop.bin) != k) continue;
                const cmat kern = c.forward ? cmat(identity(occ[k].rows()) + occ[k]) : occ[k];
                acc += m.pair(k, aop.channel, cop.channel, kern) *
                       std::exp(I * s * m.energy[k] - 0.5 * m.linewidth[k] * std::abs(s));
            }
            prod *= acc;
        }
        total += prod;
    }
    return total * std::pow(xi, -static_cast<double>(n_cre));
}

// ---- ξ → 0 limit ----

// Connected block a..b of a time-ordered spec:
//   Σ_k ΔE_k ⟨v_{g_b}, L_k v_{f_a}⟩ Π_{i=a}^{b−1} γ_{g_i, f_{i+1}}(E_k + iΓ_k/2)
inline cplx connected_block(const WickModel& m, const CorrelatorSpec& spec, std::size_t a, std::size_t b) {
    cplx acc = 0.0;
    for (std::size_t k = 0; k < m.bins(); ++k) {
        cplx val = m.pair(k, spec.factors[b].g, spec.factors[a].f, m.l[k]);
        if (val == cplx{0.0, 0.0}) continue;
        const cplx z{m.energy[k], 0.5 * m.linewidth[k]};
        for (std::size_t i = a; i < b; ++i) val *= m.causal_gamma(spec.factors[i].g, spec.factors[i + 1].f, z);
        acc += val;
    }
    return acc;
}

// Sum over compositions of the factors into consecutive connected blocks;
// b blocks contribute Π(block values) · t^b / b!.
inline cplx limit_correlator(const WickModel& m, const CorrelatorSpec& spec, double t,
                             int n_max = wick_default_n_max) {
    m.validate();
    spec.validate(n_max);
    const std::size_t n = spec.order();
    if (n == 0) return 1.0;
    if (!spec.is_time_ordered()) {
        if (spec.is_anti_time_ordered()) return std::conj(limit_correlator(m, spec.adjoint(), t, n_max));
        throw InvalidArgument("limit_correlator: only time-ordered or anti-time-ordered specs are supported");
    }
    std::vector<std::vector<cplx>> block(n, std::vector<cplx>(n, 0.0));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a; b < n; ++b) block[a][b] = connected_block(m, spec, a, b);
    }
    cplx total = 0.0;
    const std::size_t cuts = n - 1;
    for (std::size_t mask = 0; mask < (std::size_t{1} << cuts); ++mask) {
        cplx prod = 1.0;
        std::size_t start = 0;
        int nblocks = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool cut_here = i == n - 1 || ((mask >> i) & 1U);
            if (!cut_here) continue;
            prod *= block[start][i];
            start = i + 1;
            ++nblocks;
        }
        total += prod * std::pow(t, nblocks) / std::tgamma(nblocks + 1.0);
    }
    return total;
}

// ---- reports ----

struct ConvergenceRow {
    double xi{0.0};
    cplx exact{0.0};
    double abs_error{0.0};
    double rel_error{0.0};
};

struct ConvergenceReport {
    cplx limit{0.0};
    std::vector<ConvergenceRow> rows;
    std::vector<double> decay_per_decade;  // successive error ratios normalized to one decade of ξ
    bool strictly_decreasing{false};
    double final_rel_error{0.0};
    bool pass{false};
};

inline constexpr double convergence_tolerance = 5e-2;

inline std::vector<double> decade_ratios(const std::vector<double>& xs, const std::vector<double>& errs) {
    std::vector<double> out;
    for (std::size_t i = 1; i < errs.size(); ++i) {
        const double decades = std::log10(xs[i - 1] / xs[i]);
        out.push_back(std::pow(errs[i - 1] / errs[i], 1.0 / decades));
    }
    return out;
}

inline ConvergenceReport convergence_report(const WickModel& m, const CorrelatorSpec& spec, double t,
                                            const std::vector<double>& xis, const ExactOptions& opt = {}) {
    ConvergenceReport rep;
    rep.limit = limit_correlator(m, spec, t, opt.n_max);
    const double scale = std::abs(rep.limit);
    std::vector<double> errs;
    for (double xi : xis) {
        const cplx ex = exact_correlator(m, spec, t, xi, opt).value;
        ConvergenceRow row{xi, ex, std::abs(ex - rep.limit), 0.0};
        row.rel_error = scale > 0.0 ? row.abs_error / scale : row.abs_error;
        errs.push_back(row.abs_error);
        rep.rows.push_back(row);
    }
    rep.decay_per_decade = decade_ratios(xis, errs);
    rep.strictly_decreasing = true;
    for (std::size_t i = 1; i < errs.size(); ++i) {
        if (!(errs[i] < errs[i - 1])) rep.strictly_decreasing = false;
    }
    rep.final_rel_error = rep.rows.empty() ? 0.0 : rep.rows.back().rel_error;
    rep.pass = rep.strictly_decreasing && rep.final_rel_error <= convergence_tolerance;
    return rep;
}

// Outer pair A⁺(S_{t/ξ}P_j f) … A(S_{t/ξ}P_j g) at the latest time t around an inner moment
// integrated over t ≥ t_1 ≥ … ≥ t_n ≥ 0:
//   lhs = ξ⁻¹ ∫ φ_{L,ξ}(A⁺ N…N A),  rhs = ⟨P_j g, L(1−ξL)⁻¹ P_j f⟩ · ∫ φ_{L,ξ}(N…N).
struct FactorizationRow {
    double xi{0.0};
    cplx lhs{0.0};
    cplx rhs{0.0};
    double defect{0.0};  // |lhs − rhs| / |rhs|
};

struct FactorizationReport {
    std::vector<FactorizationRow> rows;
    bool decreasing{false};
    double final_defect{0.0};
    bool pass{false};
};

inline FactorizationRow factorization_point(const WickModel& m, int f, int g, std::size_t bin,
                                            const CorrelatorSpec& inner, double t, double xi,
                                            const ExactOptions& opt = {}) {
    inner.validate(opt.n_max);
    if (inner.order() > 2) throw InvalidArgument("factorization_check: inner order must be <= 2");
    if (bin >= m.bins()) throw InvalidArgument("factorization_check: bin out of range");
    std::vector<FieldOp> ops;
    ops.push_back({true, f, 0, static_cast<int>(bin)});
    for (const auto& op : field_ops(inner)) ops.push_back(op);
    ops.push_back({false, g, 0, static_cast<int>(bin)});
    const auto n = static_cast<int>(inner.order());
    FactorizationRow row;
    row.xi = xi;
    row.lhs = exact_ops(m, ops, n, t, xi, opt).value;
    const cplx pair = m.pair(bin, g, f, m.occupation(bin, xi)) / xi;
    const cplx in = exact_ops(m, field_ops(inner), n, t, xi, opt).value;
    row.rhs = pair * in;
    const double scale = std::abs(row.rhs);
    row.defect = scale > 0.0 ? std::abs(row.lhs - row.rhs) / scale : std::abs(row.lhs - row.rhs);
    return row;
}

inline FactorizationReport factorization_check(const WickModel& m, int f, int g, std::size_t bin,
                                               const CorrelatorSpec& inner, double t, const std::vector<double>& xis,
                                               const ExactOptions& opt = {}) {
    FactorizationReport rep;
    for (double xi : xis) rep.rows.push_back(factorization_point(m, f, g, bin, inner, t, xi, opt));
    rep.decreasing = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        // An exactly vanishing defect (empty inner moment) counts as non-increasing.
        if (rep.rows[i].defect > rep.rows[i - 1].defect || (rep.rows[i].defect == rep.rows[i - 1].defect &&
                                                             rep.rows[i].defect > 0.0)) {
            rep.decreasing = false;
        }
    }
    rep.final_defect = rep.rows.empty() ? 0.0 : rep.rows.back().defect;
    rep.pass = rep.decreasing && rep.final_defect <= convergence_tolerance;
    return rep;
}

} // namespace ldl
