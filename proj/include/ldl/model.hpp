// model.hpp: discretized test-particle/gas model and causal spectral functions
//
// The one-particle reservoir space is represented fiberwise: energy bin j carries
// a multiplicity space C^{d_j}, and every continuum energy integral becomes
// Σ_j ΔE_j (·). Form-factor amplitudes v_n(E_j) are per-√energy, so
// ⟨g_n, P_{E_j} g_m⟩ = ⟨v_n(E_j), v_m(E_j)⟩ is a spectral density.

#pragma once

#include "ldl/linalg.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ldl {

// --------------------------- system -----------------------------------------

inline constexpr double bohr_tolerance = 1e-9;

struct SystemModel {
    std::vector<double> eigenvalues;  // ε per basis vector of H_S (eigenbasis)
    std::vector<int> labels;          // eigenspace label per basis vector
    cmat coupling;                    // D, in the eigenbasis of H_S

    std::size_t dim() const { return eigenvalues.size(); }

    // Distinct labels in order of first appearance.
    std::vector<int> distinct_labels() const {
        std::vector<int> out;
        for (int l : labels) {
            if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
        }
        return out;
    }

    cmat projector(int label) const {
        const auto d = static_cast<Eigen::Index>(dim());
        cmat p = cmat::Zero(d, d);
        for (Eigen::Index i = 0; i < d; ++i) {
            if (labels[static_cast<std::size_t>(i)] == label) p(i, i) = 1.0;
        }
        return p;
    }

    double energy_of(int label) const {
        for (std::size_t i = 0; i < dim(); ++i) {
            if (labels[i] == label) return eigenvalues[i];
        }
        throw InvalidArgument("SystemModel: unknown label " + std::to_string(label));
    }

    cmat hamiltonian() const {
        const auto d = static_cast<Eigen::Index>(dim());
        cmat h = cmat::Zero(d, d);
        for (Eigen::Index i = 0; i < d; ++i) h(i, i) = eigenvalues[static_cast<std::size_t>(i)];
        return h;
    }

    void validate() const {
        if (eigenvalues.empty()) throw InvalidArgument("SystemModel: dimension must be >= 1");
        if (labels.size() != eigenvalues.size()) {
            throw ShapeMismatch("SystemModel: labels and eigenvalues differ in length");
        }
        for (double e : eigenvalues) {
            if (!std::isfinite(e)) throw InvalidArgument("SystemModel: non-finite eigenvalue");
        }
        const auto d = static_cast<Eigen::Index>(dim());
        if (coupling.rows() != d || coupling.cols() != d) {
            throw ShapeMismatch("SystemModel: coupling must be d_S x d_S");
        }
        if (!coupling.allFinite()) throw InvalidArgument("SystemModel: non-finite coupling");
        // One energy per label.
        for (std::size_t i = 0; i < dim(); ++i) {
            for (std::size_t k = i + 1; k < dim(); ++k) {
                if (labels[i] == labels[k] &&
                    std::abs(eigenvalues[i] - eigenvalues[k]) > bohr_tolerance) {
                    throw InvalidArgument("SystemModel: label " + std::to_string(labels[i]) +
                                          " groups different eigenvalues");
                }
            }
        }
    }

    // D(t) = D holds iff D commutes with H_S.
    bool coupling_is_stationary(double tol = 1e-12) const {
        const cmat h = hamiltonian();
        return max_abs(h * coupling - coupling * h) <= tol;
    }

    static SystemModel with_default_labels(std::vector<double> eps, cmat d) {
        SystemModel m;
        m.labels.resize(eps.size());
        for (std::size_t i = 0; i < eps.size(); ++i) m.labels[i] = static_cast<int>(i);
        m.eigenvalues = std::move(eps);
        m.coupling = std::move(d);
        return m;
    }
};

struct BohrComponent {
    double omega{0.0};
    cmat op;  // D_ω
};

// D_ω = Σ_{k,m: ε_m − ε_k = ω} P_k D P_m, grouped within bohr_tolerance; sorted by ω.
inline std::vector<BohrComponent> bohr_decompose(const SystemModel& model) {
    model.validate();
    std::vector<BohrComponent> out;
    const auto lbls = model.distinct_labels();
    for (int k : lbls) {
        const cmat pk = model.projector(k);
        for (int m : lbls) {
            const double omega = model.energy_of(m) - model.energy_of(k);
            const cmat block = pk * model.coupling * model.projector(m);
            auto it = std::find_if(out.begin(), out.end(), [&](const BohrComponent& c) {
                return std::abs(c.omega - omega) <= bohr_tolerance;
            });
            if (it == out.end()) {
                out.push_back({omega, block});
            } else {
                it->op += block;
            }
        }
    }
    std::sort(out.begin(), out.end(),
              [](const BohrComponent& a, const BohrComponent& b) { return a.omega < b.omega; });
    return out;
}

// --------------------------- gas occupation ---------------------------------

// n(E) = ξ e^{−βE} / (1 − ξ e^{−βE})
inline double gibbs_density(double energy, double beta, double xi) {
    if (!(xi >= 0.0 && xi < 1.0)) throw InvalidArgument("gibbs_density: xi must lie in [0,1)");
    if (!(beta >= 0.0)) throw InvalidArgument("gibbs_density: beta must be >= 0");
    const double x = xi * std::exp(-beta * energy);
    if (!(x < 1.0)) throw InvalidArgument("gibbs_density: xi*exp(-beta*E) must be < 1");
    return x / (1.0 - x);
}

// --------------------------- energy grid ------------------------------------

struct EnergyBin {
    double center{0.0};
    double width{0.0};
    int multiplicity{1};
};

struct EnergyGrid {
    std::vector<EnergyBin> bins;

    std::size_t size() const { return bins.size(); }
    const EnergyBin& operator[](std::size_t j) const { return bins[j]; }

    void validate() const {
        if (bins.empty()) throw InvalidArgument("EnergyGrid: at least one bin required");
        for (std::size_t j = 0; j < bins.size(); ++j) {
            const auto& b = bins[j];
            if (!std::isfinite(b.center)) throw InvalidArgument("EnergyGrid: non-finite center");
            if (!(b.width > 0.0)) {
                throw InvalidArgument("EnergyGrid: bin " + std::to_string(j) + " width must be > 0");
            }
            if (b.multiplicity < 1) {
                throw InvalidArgument("EnergyGrid: bin " + std::to_string(j) +
                                      " multiplicity must be >= 1");
            }
            if (j > 0) {
                const auto& p = bins[j - 1];
                if (!(b.center > p.center)) {
                    throw InvalidArgument("EnergyGrid: centers must be strictly increasing at bin " +
                                          std::to_string(j));
                }
                const double gap = (b.center - 0.5 * b.width) - (p.center + 0.5 * p.width);
                if (gap < -1e-12 * std::max(1.0, std::abs(b.center))) {
                    throw InvalidArgument("EnergyGrid: bins " + std::to_string(j - 1) + " and " +
                                          std::to_string(j) + " overlap");
                }
            }
        }
    }

    // n bins of equal width covering [lo, hi], multiplicity m each.
    static EnergyGrid uniform(double lo, double hi, std::size_t n, int multiplicity = 1) {
        EnergyGrid g;
        const double w = (hi - lo) / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            g.bins.push_back({lo + (static_cast<double>(j) + 0.5) * w, w, multiplicity});
        }
        return g;
    }
};

// --------------------------- form factors -----------------------------------

using Gram = Eigen::Matrix2cd;

struct FormFactorSet {
    // amplitudes[j][n] = v_n(E_j) ∈ C^{d_j}
    std::vector<std::array<cvec, 2>> amplitudes;

    std::size_t size() const { return amplitudes.size(); }

    const cvec& v(std::size_t bin, int channel) const {
        return amplitudes[bin][static_cast<std::size_t>(channel)];
    }

    // G_{nm}(E_j) = ⟨v_n, v_m⟩
    Gram gram(std::size_t bin) const {
        Gram g;
        for (int n = 0; n < 2; ++n) {
            for (int m = 0; m < 2; ++m) g(n, m) = v(bin, n).dot(v(bin, m));
        }
        return g;
    }

    // ‖g_n‖² = Σ_j ΔE_j G_nn(E_j)
    double norm_squared(const EnergyGrid& grid, int channel) const {
        double s = 0.0;
        for (std::size_t j = 0; j < size(); ++j) s += grid[j].width * v(j, channel).squaredNorm();
        return s;
    }

    void validate(const EnergyGrid& grid) const {
        if (amplitudes.size() != grid.size()) {
            throw ShapeMismatch("FormFactorSet: expected " + std::to_string(grid.size()) +
                                " bins, got " + std::to_string(amplitudes.size()));
        }
        for (std::size_t j = 0; j < size(); ++j) {
            for (int n = 0; n < 2; ++n) {
                if (v(j, n).size() != grid[j].multiplicity) {
                    throw ShapeMismatch("FormFactorSet: bin " + std::to_string(j) + " channel " +
                                        std::to_string(n) + " has length " +
                                        std::to_string(v(j, n).size()) + ", multiplicity is " +
                                        std::to_string(grid[j].multiplicity));
                }
                if (!v(j, n).allFinite()) throw InvalidArgument("FormFactorSet: non-finite amplitude");
            }
        }
    }

    // Same amplitudes rotated by a per-bin unitary (gauge transformation).
    FormFactorSet rotated(const std::vector<cmat>& unitaries) const {
        FormFactorSet out = *this;
        for (std::size_t j = 0; j < size(); ++j) {
            for (auto& a : out.amplitudes[j]) a = unitaries[j] * a;
        }
        return out;
    }
};

// --------------------------- gas state --------------------------------------

struct GasState {
    double xi{0.0};
    std::vector<cmat> weights;  // L_j on C^{d_j}
    double beta{std::numeric_limits<double>::quiet_NaN()};  // set only for Gibbs weights

    bool is_gibbs() const { return std::isfinite(beta); }

    static GasState gibbs(const EnergyGrid& grid, double beta, double xi) {
        GasState g;
        g.xi = xi;
        g.beta = beta;
        for (const auto& b : grid.bins) {
            g.weights.push_back(std::exp(-beta * b.center) * identity(b.multiplicity));
        }
        return g;
    }

    static GasState empty(const EnergyGrid& grid, double xi = 0.0) {
        GasState g;
        g.xi = xi;
        for (const auto& b : grid.bins) g.weights.push_back(cmat::Zero(b.multiplicity, b.multiplicity));
        return g;
    }

    void validate(const EnergyGrid& grid) const {
        if (!(xi >= 0.0 && xi < 1.0)) throw InvalidArgument("GasState: xi must lie in [0,1)");
        if (weights.size() != grid.size()) {
            throw ShapeMismatch("GasState: expected " + std::to_string(grid.size()) +
                                " weight blocks, got " + std::to_string(weights.size()));
        }
        for (std::size_t j = 0; j < weights.size(); ++j) {
            const auto& l = weights[j];
            const std::string where = "GasState: bin " + std::to_string(j);
            if (l.rows() != grid[j].multiplicity || l.cols() != grid[j].multiplicity) {
                throw ShapeMismatch(where + " weight must be d_j x d_j");
            }
            if (hermiticity_defect(l) > 1e-12 * std::max(1.0, max_abs(l))) {
                throw InvalidArgument(where + " weight is not Hermitian");
            }
            Eigen::SelfAdjointEigenSolver<cmat> es(0.5 * (l + l.adjoint()), Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -1e-12) throw InvalidArgument(where + " weight is not PSD");
            if (!(xi * es.eigenvalues().maxCoeff() < 1.0)) {
                throw InvalidArgument(where + " spectral radius of xi*L must be < 1");
            }
        }
    }

    // ξ L (1 − ξ L)^{-1}: the finite-fugacity one-particle occupation.
    cmat occupation(std::size_t bin, double fugacity) const {
        const cmat& l = weights[bin];
        const cmat one = identity(l.rows());
        return (fugacity * l) * (one - fugacity * l).inverse();
    }
};

// --------------------------- causal spectral function -----------------------

// γ_{nm}(E_j) ≡ γ_{g_n,g_m}(E_j)
struct GammaTable {
    std::vector<Gram> values;

    std::size_t size() const { return values.size(); }
    const Gram& operator[](std::size_t j) const { return values[j]; }
};

// PV Σ_{j'} ΔE_{j'} G(E_{j'}) / (E_{j'} − E), midpoint rule; a bin whose center
// coincides with E is skipped.
inline Gram principal_value(const EnergyGrid& grid, const FormFactorSet& ff, double energy) {
    Gram acc = Gram::Zero();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double diff = grid[k].center - energy;
        if (std::abs(diff) <= 1e-12 * std::max(1.0, std::abs(energy))) continue;
        acc += (grid[k].width / diff) * ff.gram(k);
    }
    return acc;
}

// γ(E_j) = π G(E_j) − i PV Σ ΔE G / (E' − E_j). The Hermitian part is exactly πG.
inline GammaTable gamma_table(const EnergyGrid& grid, const FormFactorSet& ff) {
    grid.validate();
    ff.validate(grid);
    GammaTable table;
    table.values.reserve(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Gram g = ff.gram(j);
        Gram pv = principal_value(grid, ff, grid[j].center);
        // PV of a Hermitian density is Hermitian; drop rounding asymmetry.
        pv = 0.5 * (pv + pv.adjoint()).eval();
        const Gram herm = 0.5 * (g + g.adjoint()).eval();
        table.values.push_back(pi * herm - I * pv);
    }
    return table;
}

// --------------------------- bundled model ----------------------------------

struct Model {
    std::string name;
    SystemModel system;
    EnergyGrid grid;
    FormFactorSet form_factors;
    GasState gas;
    double broadening{1.0};  // Lorentzian width per bin in units of ΔE_j (correlator oracle)

    void validate() const {
        system.validate();
        grid.validate();
        form_factors.validate(grid);
        gas.validate(grid);
        if (!(broadening > 0.0)) throw InvalidArgument("Model: broadening must be > 0");
    }
};

} // namespace ldl
