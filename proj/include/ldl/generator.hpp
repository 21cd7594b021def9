// generator.hpp: Lindblad generator of the reduced dynamics.
//
// heis acts on vec(X) (observables), schr = heis⁺ acts on vec(ρ).
// Two assembly routes: from the S-matrix (Θ components weighted by the gas)
// and from user-supplied T-matrix elements on energy shells.

#pragma once

#include "ldl/linalg.hpp"
#include "ldl/model.hpp"
#include "ldl/scattering.hpp"

#include <string>
#include <vector>

namespace ldl {

struct GeneratorPair {
    Eigen::Index dim{0};
    cmat heis;
    cmat schr;
    cmat jump;                  // Heisenberg-form jump part Φ, CP by construction
    std::vector<Gram> weights;  // w_{nm}(E_j) = ΔE_j ⟨v_n, L_j v_m⟩ (S-matrix route only)

    cmat apply_heis(const cmat& x) const { return apply_super(heis, x); }
    cmat apply_schr(const cmat& rho) const { return apply_super(schr, rho); }
};

// ---- S-matrix route ----

inline Gram generator_weights(const ScatteringBlock& b, const cmat& l) {
    Gram w;
    for (int n = 0; n < 2; ++n) {
        for (int m = 0; m < 2; ++m) w(n, m) = b.width * b.amplitudes[n].dot(l * b.amplitudes[m]);
    }
    return w;
}

inline GeneratorPair heisenberg_generator(const ScatteringData& sd, const GasState& gas) {
    if (gas.weights.size() != sd.blocks.size()) throw ShapeMismatch("heisenberg_generator: gas/bin count");
    const auto d = sd.system_dim();
    GeneratorPair g;
    g.dim = d;
    g.heis = cmat::Zero(d * d, d * d);
    g.jump = cmat::Zero(d * d, d * d);
    for (std::size_t j = 0; j < sd.blocks.size(); ++j) {
        const auto& b = sd.blocks[j];
        const Gram w = generator_weights(b, gas.weights[j]);
        g.weights.push_back(w);
        for (int n = 0; n < 2; ++n) {
            for (int m = 0; m < 2; ++m) {
                if (w(n, m) == cplx{0.0, 0.0}) continue;
                g.heis += w(n, m) * theta_superop(b, n, m);
                for (int np = 0; np < 2; ++np) {
                    for (int mp = 0; mp < 2; ++mp) {
                        g.jump += (2.0 * pi * w(n, m) * b.gram(np, mp)) *
                                  sandwich_super(b.r[np][m].adjoint(), b.r[mp][n]);
                    }
                }
            }
        }
    }
    g.schr = g.heis.adjoint();
    return g;
}

// ---- T-matrix route ----

struct Shell {
    double energy{0.0};  // dispersion energy ω(k)
    double weight{0.0};  // measure of the shell in dk
    double width{0.0};   // energy width, sets the δ window
    double density{0.0}; // L(k)
};

struct TElement {
    double omega{0.0};
    std::size_t out{0};  // k'
    std::size_t in{0};   // k
    cmat t;              // T_ω(k', k)
};

struct TMatrixInput {
    Eigen::Index dim{0};
    std::vector<Shell> shells;
    std::vector<TElement> elements;

    void validate() const {
        if (dim < 1) throw InvalidArgument("TMatrixInput: system dimension must be >= 1");
        for (std::size_t k = 0; k < shells.size(); ++k) {
            const auto& s = shells[k];
            if (s.density < 0.0) throw InvalidArgument("TMatrixInput: negative L at shell " + std::to_string(k));
            if (!(s.width > 0.0) || !(s.weight >= 0.0)) {
                throw InvalidArgument("TMatrixInput: shell " + std::to_string(k) + " needs width > 0, weight >= 0");
            }
        }
        for (const auto& e : elements) {
            if (e.in >= shells.size() || e.out >= shells.size()) throw ShapeMismatch("TMatrixInput: shell index");
            if (e.t.rows() != dim || e.t.cols() != dim) throw ShapeMismatch("TMatrixInput: T must be d_S x d_S");
        }
    }
};

struct JumpOperator {
    double rate{0.0};
    cmat op;  // √rate · T
};

// Energy-conserving pairs |E_out − E_in + ω| ≤ width_out/2 with δ → 1/width_out.
inline std::vector<JumpOperator> boltzmann_jumps(const TMatrixInput& in) {
    in.validate();
    std::vector<JumpOperator> out;
    for (const auto& e : in.elements) {
        const auto& so = in.shells[e.out];
        const auto& si = in.shells[e.in];
        if (std::abs(so.energy - si.energy + e.omega) > 0.5 * so.width) continue;
        const double rate = 2.0 * pi * si.density * si.weight * so.weight / so.width;
        if (rate == 0.0) continue;
        out.push_back({rate, std::sqrt(rate) * e.t});
    }
    return out;
}

inline GeneratorPair lindblad_from_jumps(const std::vector<JumpOperator>& jumps, Eigen::Index d) {
    GeneratorPair g;
    g.dim = d;
    g.jump = cmat::Zero(d * d, d * d);
    cmat k = cmat::Zero(d, d);
    for (const auto& j : jumps) {
        g.jump += sandwich_super(j.op.adjoint(), j.op);
        k += j.op.adjoint() * j.op;
    }
    g.heis = g.jump - 0.5 * (left_super(k) + right_super(k));
    g.schr = g.heis.adjoint();
    return g;
}

inline GeneratorPair boltzmann_from_T(const TMatrixInput& in) {
    return lindblad_from_jumps(boltzmann_jumps(in), in.dim);
}

// T-matrix elements read off the S blocks: 𝒯_ab = (δ_ab − S_ab)/(2πi), one shell per
// (bin, channel) with weight = width = ΔE_j. Requires L_j scalar on the relevant subspace.
inline TMatrixInput tmatrix_from_scattering(const ScatteringData& sd, const GasState& gas) {
    TMatrixInput in;
    in.dim = sd.system_dim();
    const auto ds = in.dim;
    for (std::size_t j = 0; j < sd.blocks.size(); ++j) {
        const auto& b = sd.blocks[j];
        const auto r = b.rank();
        if (r == 0) continue;
        const cmat lq = b.basis.q.adjoint() * gas.weights[j] * b.basis.q;
        const cplx c = lq.trace() / static_cast<double>(r);
        if (max_abs(lq - c * identity(r)) > 1e-12 * std::max(1.0, std::abs(c))) {
            throw InvalidArgument("tmatrix_from_scattering: L must be scalar on the relevant subspace of bin " +
                                  std::to_string(j));
        }
        const std::size_t first = in.shells.size();
        for (Eigen::Index a = 0; a < r; ++a) in.shells.push_back({b.energy, b.width, b.width, c.real()});
        for (Eigen::Index a = 0; a < r; ++a) {
            for (Eigen::Index bb = 0; bb < r; ++bb) {
                cmat blk = -b.s.block(a * ds, bb * ds, ds, ds);
                if (a == bb) blk += identity(ds);
                in.elements.push_back({0.0, first + static_cast<std::size_t>(a),
                                       first + static_cast<std::size_t>(bb), blk / (2.0 * pi * I)});
            }
        }
    }
    return in;
}

// How far two generators differ beyond a Hamiltonian commutator.
inline double dissipative_defect(const GeneratorPair& a, const GeneratorPair& b) {
    if (a.dim != b.dim) throw ShapeMismatch("dissipative_defect: dimensions differ");
    return fit_commutator(a.heis - b.heis, a.dim).residual;
}

// ---- states and evolution ----

inline constexpr double state_tolerance = 1e-10;

inline void validate_state(const cmat& rho, double tol = state_tolerance) {
    if (!is_square(rho)) throw InvalidState("density matrix must be square");
    if (hermiticity_defect(rho) > tol) throw InvalidState("density matrix is not Hermitian");
    if (std::abs(rho.trace() - cplx{1.0, 0.0}) > tol) throw InvalidState("density matrix trace differs from 1");
    if (min_hermitian_eigenvalue(rho) < -tol) throw InvalidState("density matrix is not positive semidefinite");
}

inline constexpr Eigen::Index exact_evolution_max_dim = 8;

// ρ(t) for each requested time. Exact exponential for small systems, RK4 with step dt otherwise.
inline std::vector<cmat> evolve_density(const GeneratorPair& gen, const cmat& rho0,
                                        const std::vector<double>& times, double dt) {
    validate_state(rho0);
    if (rho0.rows() != gen.dim) throw ShapeMismatch("evolve_density: state dimension");
    std::vector<cmat> out;
    out.reserve(times.size());
    const cvec v0 = vec(rho0);
    if (gen.dim <= exact_evolution_max_dim) {
        for (double t : times) {
            if (t < 0.0) throw InvalidArgument("evolve_density: t must be >= 0");
            if (t == 0.0) {
                out.push_back(rho0);
                continue;
            }
            const cmat prop = (t * gen.schr).exp();
            out.push_back(unvec(prop * v0, gen.dim));
        }
        return out;
    }
    if (!(dt > 0.0)) throw InvalidArgument("evolve_density: dt must be > 0");
    cvec v = v0;
    double now = 0.0;
    for (double t : times) {
        if (t < now) throw InvalidArgument("evolve_density: times must be non-decreasing");
        while (now < t) {
            const double h = std::min(dt, t - now);
            const cvec k1 = gen.schr * v;
            const cvec k2 = gen.schr * (v + 0.5 * h * k1);
            const cvec k3 = gen.schr * (v + 0.5 * h * k2);
            const cvec k4 = gen.schr * (v + h * k3);
            v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            now += h;
        }
        out.push_back(unvec(v, gen.dim));
    }
    return out;
}

inline cmat evolve_density(const GeneratorPair& gen, const cmat& rho0, double t, double dt) {
    return evolve_density(gen, rho0, std::vector<double>{t}, dt).front();
}

// |Tr(ρ0 e^{t heis}(X)) − Tr(e^{t schr}(ρ0) X)|
inline double duality_check(const GeneratorPair& gen, const cmat& rho0, const cmat& x, double t) {
    const cmat xt = unvec((t * gen.heis).exp() * vec(x), gen.dim);
    const cmat rt = unvec((t * gen.schr).exp() * vec(rho0), gen.dim);
    return std::abs((rho0 * xt).trace() - (rt * x).trace());
}

// ---- Lindblad structure ----

struct CPReport {
    double choi_min_eigenvalue{0.0};
    double remainder_residual{0.0};   // ‖rem + ½{Φ(1),·} − i[H,·]‖
    double hamiltonian_hermiticity{0.0};
    double trace_defect{0.0};         // ‖heis(1)‖
    cmat effective_hamiltonian;
    bool pass{false};
};

inline CPReport cp_check(const GeneratorPair& gen, double tol = 1e-10) {
    const auto d = gen.dim;
    CPReport rep;
    rep.choi_min_eigenvalue = min_hermitian_eigenvalue(choi_matrix(gen.jump, d));
    const cmat phi1 = apply_super(gen.jump, identity(d));
    const cmat rem = gen.heis - gen.jump + 0.5 * (left_super(phi1) + right_super(phi1));
    const auto fit = fit_commutator(rem, d);
    rep.effective_hamiltonian = fit.hamiltonian;
    rep.remainder_residual = fit.residual;
    rep.hamiltonian_hermiticity = fit.hermiticity_defect;
    rep.trace_defect = max_abs(gen.apply_heis(identity(d)));
    const double scale = std::max(1.0, max_abs(gen.heis));
    if (rep.remainder_residual > tol * scale || rep.hamiltonian_hermiticity > tol * scale) {
        throw ShapeMismatch("cp_check: generator remainder is not of the form -1/2{Phi(1),X} + i[H,X] "
                            "(residual " + std::to_string(rep.remainder_residual) + ")");
    }
    rep.pass = rep.choi_min_eigenvalue >= -tol;
    return rep;
}

} // namespace ldl
