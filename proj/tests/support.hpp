// Shared fixtures for the test suite: seeded random models and small helpers.

#pragma once

#include "ldl/ldl.hpp"

#include <random>

namespace ldl::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline cplx gaussian_c(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double re = n(rng);
    return {re, n(rng)};
}

inline cmat random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
    cmat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = gaussian_c(rng);
    }
    return m;
}

inline cvec random_vector(Rng& rng, Eigen::Index n) { return random_matrix(rng, n, 1).col(0); }

inline cmat random_hermitian(Rng& rng, Eigen::Index d) {
    const cmat a = random_matrix(rng, d, d);
    return 0.5 * (a + a.adjoint());
}

inline cmat random_unitary(Rng& rng, Eigen::Index d) {
    Eigen::HouseholderQR<cmat> qr(random_matrix(rng, d, d));
    return qr.householderQ() * identity(d);
}

inline cmat random_density(Rng& rng, Eigen::Index d) {
    const cmat a = random_matrix(rng, d, d);
    const cmat rho = a * a.adjoint();
    return rho / rho.trace();
}

// Operator norm scaled uniformly into (0.3, max_norm].
inline cmat random_coupling(Rng& rng, Eigen::Index d, double max_norm = 2.0) {
    const cmat a = random_matrix(rng, d, d);
    Eigen::JacobiSVD<cmat> svd(a);
    return a * (uniform(rng, 0.3, max_norm) / svd.singularValues()(0));
}

struct RandomModelOptions {
    Eigen::Index system_dim{2};
    std::size_t bins{16};
    int multiplicity{2};
    bool degenerate_spectrum{true};  // H_S = 0, so D(t) = D
    double beta{1.0};
    double xi{0.05};
};

// Gaussian amplitude profiles along fixed random directions with a slow phase twist.
inline FormFactorSet smooth_form_factors(Rng& rng, const EnergyGrid& grid, int multiplicity) {
    std::array<cvec, 2> dir;
    std::array<double, 2> amp{}, center{}, spread{}, twist{};
    for (int n = 0; n < 2; ++n) {
        dir[n] = random_vector(rng, multiplicity).normalized();
        amp[n] = uniform(rng, 0.2, 0.7);
        center[n] = uniform(rng, 0.5, 3.0);
        spread[n] = uniform(rng, 0.5, 1.5);
        twist[n] = uniform(rng, -0.5, 0.5);
    }
    FormFactorSet ff;
    for (const auto& b : grid.bins) {
        std::array<cvec, 2> v;
        for (int n = 0; n < 2; ++n) {
            const double e = b.center - center[n];
            v[n] = amp[n] * std::exp(-e * e / spread[n]) * std::exp(I * twist[n] * b.center) * dir[n];
        }
        ff.amplitudes.push_back(v);
    }
    return ff;
}

// Random model whose T inverses all have condition number below max_cond (rejection sampling).
inline Model random_model(Rng& rng, const RandomModelOptions& o = {}, double max_cond = 1e8) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        Model m;
        m.name = "random";
        std::vector<double> eps(static_cast<std::size_t>(o.system_dim), 0.0);
        if (!o.degenerate_spectrum) {
            for (auto& e : eps) e = uniform(rng, -1.0, 1.0);
        }
        m.system = SystemModel::with_default_labels(eps, random_coupling(rng, o.system_dim));
        m.grid = EnergyGrid::uniform(0.0, 4.0, o.bins, o.multiplicity);
        m.form_factors = smooth_form_factors(rng, m.grid, o.multiplicity);
        m.gas = GasState::gibbs(m.grid, o.beta, o.xi);
        try {
            const auto sd = build_smatrix(m);
            bool ok = true;
            for (const auto& b : sd.blocks) ok = ok && b.t.cond0 < max_cond && b.t.cond1 < max_cond;
            if (ok) return m;
        } catch (const SingularTMatrix&) {
        }
    }
    throw std::runtime_error("random_model: no well-conditioned draw");
}

} // namespace ldl::testing
