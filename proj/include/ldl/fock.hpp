// fock.hpp: truncated bosonic Fock space over C^d.

#pragma once

#include "ldl/linalg.hpp"

#include <cmath>
#include <map>
#include <vector>

namespace ldl {

struct TruncationTooSmall : Error {
    using Error::Error;
};

inline constexpr double fock_tail_tolerance = 1e-10;

class TruncatedFock {
public:
    TruncatedFock(int modes, int n_max) : d_(modes), n_max_(n_max) {
        if (modes < 1 || modes > 3) throw InvalidArgument("TruncatedFock: 1 <= modes <= 3");
        if (n_max < 1 || n_max > 12) throw InvalidArgument("TruncatedFock: 1 <= n_max <= 12");
        std::vector<int> occ(static_cast<std::size_t>(modes), 0);
        enumerate(0, n_max, occ);
        for (std::size_t k = 0; k < basis_.size(); ++k) index_[basis_[k]] = static_cast<Eigen::Index>(k);
        for (int i = 0; i < modes; ++i) lower_.push_back(build_lowering(i));
    }

    int modes() const { return d_; }
    int n_max() const { return n_max_; }
    Eigen::Index dim() const { return static_cast<Eigen::Index>(basis_.size()); }
    const std::vector<std::vector<int>>& basis() const { return basis_; }

    static int total(const std::vector<int>& n) {
        int s = 0;
        for (int k : n) s += k;
        return s;
    }

    const cmat& a(int i) const { return lower_.at(static_cast<std::size_t>(i)); }
    cmat adag(int i) const { return a(i).adjoint(); }

    // A(g) = Σ conj(g_i) a_i,  A⁺(f) = Σ f_i a_i⁺
    cmat annihilate(const cvec& g) const {
        cmat out = cmat::Zero(dim(), dim());
        for (int i = 0; i < d_; ++i) out += std::conj(g(i)) * a(i);
        return out;
    }
    cmat create(const cvec& f) const { return annihilate(f).adjoint(); }

    // dΓ(X) = Σ X_ij a_i⁺ a_j
    cmat dgamma(const cmat& x) const {
        check_one_particle(x);
        cmat out = cmat::Zero(dim(), dim());
        for (int i = 0; i < d_; ++i) {
            for (int j = 0; j < d_; ++j) {
                if (x(i, j) != cplx{0.0, 0.0}) out += x(i, j) * (adag(i) * a(j));
            }
        }
        return out;
    }

    cmat number() const { return dgamma(identity(d_)); }

    // Projector onto Σn ≤ n_max − 1, where the CCR hold exactly.
    cmat protected_projector() const {
        cmat p = cmat::Zero(dim(), dim());
        for (Eigen::Index k = 0; k < dim(); ++k) {
            if (total(basis_[static_cast<std::size_t>(k)]) < n_max_) p(k, k) = 1.0;
        }
        return p;
    }

    double ccr_defect() const {
        const cmat p = protected_projector();
        double worst = 0.0;
        for (int i = 0; i < d_; ++i) {
            for (int j = 0; j < d_; ++j) {
                cmat c = a(i) * adag(j) - adag(j) * a(i);
                if (i == j) c -= identity(dim());
                worst = std::max(worst, max_abs(p * c * p));
                worst = std::max(worst, max_abs(p * (a(i) * a(j) - a(j) * a(i)) * p));
            }
        }
        return worst;
    }

    double lie_morphism_defect(const cmat& x, const cmat& y) const {
        const cmat dx = dgamma(x), dy = dgamma(y);
        const cmat p = protected_projector();
        return max_abs(p * (dx * dy - dy * dx - dgamma(x * y - y * x)) * p);
    }

    // e^{−x} Σ_{k > n_max} x^k / k!, x = ‖f‖²
    double coherent_tail(double norm2) const {
        double term = std::exp(-norm2), head = 0.0;
        for (int k = 0; k <= n_max_; ++k) {
            head += term;
            term *= norm2 / (k + 1);
        }
        return std::max(0.0, 1.0 - head);
    }

    // Ψ(f) = e^{−‖f‖²/2} Σ_n Π_i f_i^{n_i}/√(n_i!) |n⟩, truncated (not renormalized).
    cvec coherent(const cvec& f) const {
        check_vector(f);
        const double n2 = f.squaredNorm();
        const double tail = coherent_tail(n2);
        if (tail > fock_tail_tolerance) {
            throw TruncationTooSmall("coherent_vector: tail " + std::to_string(tail) + " exceeds " +
                                     std::to_string(fock_tail_tolerance) + " at n_max " + std::to_string(n_max_));
        }
        cvec psi(dim());
        for (Eigen::Index k = 0; k < dim(); ++k) {
            cplx amp = std::exp(-0.5 * n2);
            const auto& n = basis_[static_cast<std::size_t>(k)];
            for (int i = 0; i < d_; ++i) {
                for (int p = 1; p <= n[static_cast<std::size_t>(i)]; ++p) amp *= f(i) / std::sqrt(static_cast<double>(p));
            }
            psi(k) = amp;
        }
        return psi;
    }

    // Gibbs state ∝ Π_i (ξ e^{−βE_i})^{n_i}.
    cmat gibbs(const std::vector<double>& energies, double beta, double xi) const {
        if (static_cast<int>(energies.size()) != d_) throw ShapeMismatch("gibbs: one energy per mode");
        std::vector<double> x;
        double xmax = 0.0;
        for (double e : energies) {
            x.push_back(xi * std::exp(-beta * e));
            xmax = std::max(xmax, x.back());
        }
        if (!(xmax < 1.0)) throw InvalidArgument("gibbs: xi*exp(-beta*E) must be < 1");
        const double tail = gibbs_tail(xmax);
        if (tail > fock_tail_tolerance) {
            throw TruncationTooSmall("gibbs: tail " + std::to_string(tail) + " exceeds " +
                                     std::to_string(fock_tail_tolerance) + " at n_max " + std::to_string(n_max_));
        }
        cmat rho = cmat::Zero(dim(), dim());
        for (Eigen::Index k = 0; k < dim(); ++k) {
            double w = 1.0;
            for (int i = 0; i < d_; ++i) w *= std::pow(x[static_cast<std::size_t>(i)], basis_[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]);
            rho(k, k) = w;
        }
        return rho / rho.trace();
    }

    // Σ_{k > n_max} C(k+d−1, d−1) k x^k, bounds the missing mass of ⟨A⁺A⟩.
    double gibbs_tail(double x) const {
        double s = 0.0;
        for (int k = n_max_ + 1; k < n_max_ + 2000; ++k) {
            const double term = binom(k + d_ - 1, d_ - 1) * k * std::pow(x, k);
            s += term;
            if (term < 1e-300) break;
        }
        return s;
    }

private:
    void enumerate(int mode, int left, std::vector<int>& occ) {
        if (mode == d_) {
            basis_.push_back(occ);
            return;
        }
        for (int k = 0; k <= left; ++k) {
            occ[static_cast<std::size_t>(mode)] = k;
            enumerate(mode + 1, left - k, occ);
        }
        occ[static_cast<std::size_t>(mode)] = 0;
    }

    cmat build_lowering(int i) const {
        cmat m = cmat::Zero(dim(), dim());
        for (Eigen::Index k = 0; k < dim(); ++k) {
            auto n = basis_[static_cast<std::size_t>(k)];
            const int ni = n[static_cast<std::size_t>(i)];
            if (ni == 0) continue;
            n[static_cast<std::size_t>(i)] = ni - 1;
            m(index_.at(n), k) = std::sqrt(static_cast<double>(ni));
        }
        return m;
    }

    static double binom(int n, int k) {
        double r = 1.0;
        for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return r;
    }

    void check_vector(const cvec& f) const {
        if (f.size() != d_) throw ShapeMismatch("TruncatedFock: one-particle vector has wrong length");
    }
    void check_one_particle(const cmat& x) const {
        if (x.rows() != d_ || x.cols() != d_) throw ShapeMismatch("TruncatedFock: one-particle operator must be d x d");
    }

    int d_;
    int n_max_;
    std::vector<std::vector<int>> basis_;
    std::map<std::vector<int>, Eigen::Index> index_;
    std::vector<cmat> lower_;
};

// ---- checks ----

// |⟨Ψ(f),Ψ(g)⟩ − e^{⟨f,g⟩ − (‖f‖²+‖g‖²)/2}|
inline double coherent_overlap_defect(const TruncatedFock& fs, const cvec& f, const cvec& g) {
    const cplx lhs = fs.coherent(f).dot(fs.coherent(g));
    const cplx rhs = std::exp(f.dot(g) - 0.5 * (f.squaredNorm() + g.squaredNorm()));
    return std::abs(lhs - rhs);
}

inline double number_characterization_check(const TruncatedFock& fs, const cmat& x, const cvec& f, const cvec& g) {
    const cvec pf = fs.coherent(f), pg = fs.coherent(g);
    const cplx lhs = pf.dot(fs.dgamma(x) * pg);
    const cplx rhs = f.dot(x * g) * pf.dot(pg);
    return std::abs(lhs - rhs);
}

// ‖e^{it dΓ(X)} Ψ(f) − Ψ(e^{itX} f)‖
inline double second_quantization_check(const TruncatedFock& fs, const cmat& x, const cvec& f, double t) {
    const cmat u = (I * t * fs.dgamma(x)).exp();
    const cvec ft = (I * t * x).exp() * f;
    return (u * fs.coherent(f) - fs.coherent(ft)).norm();
}

struct TwoPointCheck {
    cplx trace{0.0};
    cplx closed_form{0.0};
    double defect{0.0};
};

// Tr(ρ A⁺(f) A(g)) against ξ⟨g, L(1−ξL)⁻¹ f⟩ with L = e^{−βH₁}, H₁ = diag(energies).
inline TwoPointCheck quasifree_two_point_check(const TruncatedFock& fs, const std::vector<double>& energies,
                                               double beta, double xi, const cvec& f, const cvec& g) {
    const cmat rho = fs.gibbs(energies, beta, xi);
    TwoPointCheck c;
    c.trace = (rho * fs.create(f) * fs.annihilate(g)).trace();
    for (int i = 0; i < fs.modes(); ++i) {
        const double x = xi * std::exp(-beta * energies[static_cast<std::size_t>(i)]);
        c.closed_form += std::conj(g(i)) * f(i) * (x / (1.0 - x));
    }
    c.defect = std::abs(c.trace - c.closed_form);
    return c;
}

struct ItoPoint {
    double dt{0.0};
    cplx full{0.0};     // ⟨Ψ, dΓ(X)dΓ(Y) Ψ⟩
    cplx leading{0.0};  // ⟨Ψ, dΓ(XY) Ψ⟩ = ⟨f_Δ, XY f_Δ⟩
    cplx cross{0.0};    // full − leading
    double identity_defect{0.0};  // |full − ⟨f,XYf⟩ − ⟨f,Xf⟩⟨f,Yf⟩|
};

struct ItoReport {
    std::vector<ItoPoint> points;
    double leading_slope{0.0};
    double cross_slope{0.0};
    bool pass{false};
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline ItoReport ito_scaling_check(const TruncatedFock& fs, const cmat& x, const cmat& y, const cvec& f,
                                   const std::vector<double>& dts) {
    ItoReport rep;
    const cmat dx = fs.dgamma(x), dy = fs.dgamma(y), dxy = fs.dgamma(x * y);
    std::vector<double> lead, cross;
    bool all_nonzero = true;
    for (double dt : dts) {
        const cvec fd = std::sqrt(dt) * f;
        const cvec psi = fs.coherent(fd);
        ItoPoint p;
        p.dt = dt;
        p.full = psi.dot(dx * dy * psi);
        p.leading = psi.dot(dxy * psi);
        p.cross = p.full - p.leading;
        p.identity_defect = std::abs(p.full - fd.dot(x * y * fd) - fd.dot(x * fd) * fd.dot(y * fd));
        lead.push_back(std::abs(p.leading));
        cross.push_back(std::abs(p.cross));
        all_nonzero = all_nonzero && lead.back() > 0.0 && cross.back() > 0.0;
        rep.points.push_back(p);
    }
    if (all_nonzero && dts.size() >= 2) {
        rep.leading_slope = loglog_slope(dts, lead);
        rep.cross_slope = loglog_slope(dts, cross);
        rep.pass = std::abs(rep.leading_slope - 1.0) <= 0.02 && std::abs(rep.cross_slope - 2.0) <= 0.05;
    }
    return rep;
}

} // namespace ldl
