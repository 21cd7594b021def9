// demo_models.hpp: bundled fixtures: two_level, null, rank_deficient.

#pragma once

#include "ldl/model.hpp"

#include <string>
#include <vector>

namespace ldl::demo {

inline constexpr double two_level_beta = 1.0;
inline constexpr double two_level_xi = 0.05;

// 16 bins of width 0.25 on [0, 4], multiplicity 2, Gaussian profiles along two
// non-parallel directions.
inline EnergyGrid demo_grid() { return EnergyGrid::uniform(0.0, 4.0, 16, 2); }

inline FormFactorSet gaussian_form_factors(const EnergyGrid& grid) {
    cvec u0(2), u1(2);
    u0 << 1.0, 0.0;
    u1 << 0.6, cplx(0.0, 0.8);
    FormFactorSet ff;
    for (const auto& b : grid.bins) {
        const double e = b.center;
        const double a0 = 0.6 * std::exp(-(e - 1.2) * (e - 1.2) / 0.8);
        const double a1 = 0.5 * std::exp(-(e - 1.8) * (e - 1.8) / 1.0);
        ff.amplitudes.push_back({cvec(a0 * u0), cvec(a1 * u1)});
    }
    return ff;
}

// Two eigenspaces at the same energy: H_S = 0 so D(t) = D for any D.
inline cmat two_level_coupling() {
    cmat d(2, 2);
    d << 0.2, 0.6, cplx(0.1, 0.2), -0.3;
    return d;
}

inline Model two_level() {
    Model m;
    m.name = "two_level";
    m.system.eigenvalues = {0.0, 0.0};
    m.system.labels = {0, 1};
    m.system.coupling = two_level_coupling();
    m.grid = demo_grid();
    m.form_factors = gaussian_form_factors(m.grid);
    m.gas = GasState::gibbs(m.grid, two_level_beta, two_level_xi);
    m.broadening = 1.0;
    return m;
}

inline Model null_model() {
    Model m = two_level();
    m.name = "null";
    m.system.coupling = cmat::Zero(2, 2);
    return m;
}

// Parallel form factors in the lower half of the grid (rank-1 Gram there).
inline Model rank_deficient() {
    Model m = two_level();
    m.name = "rank_deficient";
    const cplx c(0.5, -0.3);
    for (std::size_t j = 0; j < m.grid.size() / 2; ++j) {
        m.form_factors.amplitudes[j][1] = c * m.form_factors.amplitudes[j][0];
    }
    return m;
}

inline std::vector<std::string> names() { return {"two_level", "null", "rank_deficient"}; }

inline Model by_name(const std::string& name) {
    if (name == "two_level") return two_level();
    if (name == "null") return null_model();
    if (name == "rank_deficient") return rank_deficient();
    throw InvalidArgument("unknown demo model '" + name + "'");
}

} // namespace ldl::demo
