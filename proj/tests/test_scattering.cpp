#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace ldl;
using namespace ldl::testing;

namespace {

// Literal transcriptions of the bracket and R definitions, kept separate from the library.
cmat bracket(const Gram& g, const cmat& d, bool first) {
    const cmat one = identity(d.rows());
    const cmat dd = d.adjoint();
    const cmat quad = first ? cmat(d * dd) : cmat(dd * d);
    return one + g(0, 1) * dd - g(1, 0) * d + (g(0, 0) * g(1, 1) - g(1, 0) * g(0, 1)) * quad;
}

ROps r_literal(const Gram& g, const cmat& d) {
    const cmat one = identity(d.rows());
    const cmat dd = d.adjoint();
    const cmat t0 = bracket(g, d, true).fullPivLu().inverse();
    const cmat t1 = bracket(g, d, false).fullPivLu().inverse();
    ROps r;
    r[0][0] = g(1, 1) * d * t1 * dd;
    r[0][1] = -d * t1 * (one + g(0, 1) * dd);
    r[1][1] = g(0, 0) * dd * t0 * d;
    r[1][0] = dd * t0 * (one - g(1, 0) * d);
    return r;
}

double max_unit(const ScatteringData& sd) {
    double w = 0.0;
    for (const auto& b : sd.blocks) w = std::max({w, b.unit_defect, b.co_unit_defect});
    return w;
}

} // namespace

// ---- T inverses and R ----

TEST_CASE("T inverses reduce to identity without coupling or gamma", "[scattering][t]") {
    Rng rng(1);
    const Gram g = random_matrix(rng, 2, 2);
    const auto t = t_inverses(g, cmat::Zero(3, 3));
    CHECK(max_abs(t.t0 - identity(3)) == 0.0);
    CHECK(max_abs(t.t1 - identity(3)) == 0.0);
    const auto u = t_inverses(Gram::Zero(), random_matrix(rng, 3, 3));
    CHECK(max_abs(u.t0 - identity(3)) == 0.0);
    CHECK(max_abs(u.t1 - identity(3)) == 0.0);
}

TEST_CASE("T inverses satisfy their defining equations", "[scattering][t][oracle]") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const cmat d = random_coupling(rng, 2);
        const cmat gm = random_matrix(rng, 2, 2);
        // PSD-consistent: Hermitian part π·(PSD Gram), anti-Hermitian part arbitrary
        const Gram gram = gm * gm.adjoint() * 0.1;
        const Gram h = random_hermitian(rng, 2) * 0.2;
        const Gram g = pi * gram - I * h;
        const auto t = t_inverses(g, d);
        if (t.cond0 > 1e8 || t.cond1 > 1e8) continue;
        CHECK(max_abs(t.t0 * bracket(g, d, true) - identity(2)) <= 1e-12);
        CHECK(max_abs(t.t1 * bracket(g, d, false) - identity(2)) <= 1e-12);
        CHECK(t.cond0 >= 1.0);
    }
}

TEST_CASE("singular bracket is reported with its bin", "[scattering][t]") {
    Gram g = Gram::Zero();
    g(0, 0) = I;
    g(1, 1) = I;
    cmat d(1, 1);
    d << 1.0;
    try {
        (void)t_inverses(g, d, 7, 1.75);
        FAIL("expected SingularTMatrix");
    } catch (const SingularTMatrix& e) {
        CHECK(e.bin == 7);
        CHECK(e.energy == 1.75);
        CHECK(e.condition > singular_condition_threshold);
    }
}

TEST_CASE("R operators: trivial cases", "[scattering][r]") {
    Rng rng(3);
    const Gram g = random_matrix(rng, 2, 2);
    const auto t = t_inverses(g, cmat::Zero(2, 2));
    const auto r = r_ops(g, cmat::Zero(2, 2), t.t0, t.t1);
    for (const auto& row : r) {
        for (const auto& m : row) CHECK(max_abs(m) == 0.0);
    }
    const cmat d = random_matrix(rng, 2, 2);
    const auto t2 = t_inverses(Gram::Zero(), d);
    const auto r2 = r_ops(Gram::Zero(), d, t2.t0, t2.t1);
    CHECK(max_abs(r2[0][1] + d) == 0.0);
    CHECK(max_abs(r2[1][0] - d.adjoint()) == 0.0);
    CHECK(max_abs(r2[0][0]) == 0.0);
    CHECK(max_abs(r2[1][1]) == 0.0);
}

TEST_CASE("R operators match an independent transcription", "[scattering][r][oracle]") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_model(rng);
        const auto tab = gamma_table(m.grid, m.form_factors);
        for (std::size_t j = 0; j < m.grid.size(); j += 3) {
            const cmat& d = m.system.coupling;
            const auto t = t_inverses(tab[j], d);
            const auto r = r_ops(tab[j], d, t.t0, t.t1);
            const auto o = r_literal(tab[j], d);
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    CHECK(max_abs(r[a][b] - o[a][b]) <= 1e-14 * std::max(1.0, max_abs(o[a][b])));
                }
            }
        }
    }
}

// ---- relevant basis ----

TEST_CASE("relevant basis reproduces the Gram matrix", "[scattering][basis]") {
    Rng rng(6);
    const cvec v0 = random_vector(rng, 3), v1 = random_vector(rng, 3);
    const auto full = relevant_basis(v0, v1);
    REQUIRE(full.rank == 2);
    Gram g;
    g << v0.dot(v0), v0.dot(v1), v1.dot(v0), v1.dot(v1);
    CHECK(max_abs(full.c.adjoint() * full.c - g) <= 1e-14);
    CHECK(max_abs(full.q.adjoint() * full.q - identity(2)) <= 1e-14);
    CHECK(max_abs(full.q * full.c.col(0) - v0) <= 1e-14);

    const cvec w1 = cplx(0.4, -0.7) * v0;
    const auto one = relevant_basis(v0, w1);
    REQUIRE(one.rank == 1);
    CHECK(max_abs(one.q * one.c.col(1) - w1) <= 1e-14);

    CHECK(relevant_basis(cvec::Zero(3), cvec::Zero(3)).rank == 0);
}

// ---- S-matrix ----

TEST_CASE("zero coupling gives S = 1", "[scattering][s]") {
    const auto m = demo::null_model();
    const auto sd = build_smatrix(m);
    for (const auto& b : sd.blocks) {
        CHECK(max_abs(b.s - identity(b.s.rows())) == 0.0);
        CHECK(b.unit_defect == 0.0);
    }
}

TEST_CASE("S is unitary on random well-conditioned models", "[scattering][s][property]") {
    Rng rng(100);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        RandomModelOptions o;
        o.system_dim = 2 + trial % 2;
        o.multiplicity = 1 + trial % 3;
        worst = std::max(worst, max_unit(build_smatrix(random_model(rng, o))));
    }
    INFO("worst unitarity defect " << worst);
    CHECK(worst <= 1e-10);
}

TEST_CASE("perturbing Re gamma by 1% breaks unitarity", "[scattering][s][property]") {
    Rng rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        const auto m = random_model(rng);
        auto tab = gamma_table(m.grid, m.form_factors);
        CHECK(max_unit(build_smatrix(m.grid, m.form_factors, m.system.coupling, tab)) <= 1e-10);
        for (std::size_t j = 0; j < tab.size(); ++j) tab.values[j] += 0.01 * pi * m.form_factors.gram(j);
        const double broken = max_unit(build_smatrix(m.grid, m.form_factors, m.system.coupling, tab));
        INFO("perturbed defect " << broken);
        CHECK(broken > 1e-6);
    }
}

TEST_CASE("rank-1 Gram bins give unitary blocks on a one-dimensional subspace", "[scattering][s]") {
    const auto m = demo::rank_deficient();
    const auto sd = build_smatrix(m);
    REQUIRE(sd.degenerate_bins().size() == m.grid.size() / 2);
    for (std::size_t j : sd.degenerate_bins()) {
        const auto& b = sd.blocks[j];
        CHECK(b.rank() == 1);
        CHECK(b.s.rows() == static_cast<Eigen::Index>(m.system.dim()));
        CHECK(b.unit_defect <= 1e-10);
        CHECK(b.co_unit_defect <= 1e-10);
    }
    Rng rng(102);
    for (int trial = 0; trial < 20; ++trial) {
        Model r = random_model(rng);
        const cplx c = gaussian_c(rng);
        for (std::size_t j = 0; j < r.grid.size(); j += 2) r.form_factors.amplitudes[j][1] = c * r.form_factors.amplitudes[j][0];
        CHECK(max_unit(build_smatrix(r)) <= 1e-10);
    }
}

// ---- Θ ----

TEST_CASE("Theta of the identity vanishes", "[scattering][theta]") {
    const auto sd = build_smatrix(demo::two_level());
    for (const auto& tb : theta_map(sd, identity(2))) {
        for (const auto& row : tb.expanded) {
            for (const auto& c : row) CHECK(max_abs(c) <= 1e-10);
        }
        for (const auto& blk : tb.blocks) CHECK(max_abs(blk) <= 1e-10);
    }
}

TEST_CASE("Theta vanishes without coupling", "[scattering][theta]") {
    Rng rng(7);
    const auto sd = build_smatrix(demo::null_model());
    const cmat x = random_matrix(rng, 2, 2);
    for (const auto& tb : theta_map(sd, x)) {
        for (const auto& row : tb.expanded) {
            for (const auto& c : row) CHECK(max_abs(c) == 0.0);
        }
    }
}

TEST_CASE("Theta expanded formula agrees with block extraction", "[scattering][theta][oracle]") {
    Rng rng(8);
    const auto sd = build_smatrix(demo::two_level());
    for (int trial = 0; trial < 10; ++trial) {
        const cmat x = random_hermitian(rng, 2);
        for (const auto& tb : theta_map(sd, x)) CHECK(tb.defect <= 1e-10);
    }
    // Random models including rank-deficient bins.
    for (int trial = 0; trial < 20; ++trial) {
        Model m = random_model(rng, {3, 12, 2});
        if (trial % 2) {
            for (std::size_t j = 0; j < 4; ++j) m.form_factors.amplitudes[j][1] = 0.3 * m.form_factors.amplitudes[j][0];
        }
        const auto s = build_smatrix(m);
        const cmat x = random_matrix(rng, 3, 3);
        for (const auto& tb : theta_map(s, x)) CHECK(tb.defect <= 1e-10);
    }
}

TEST_CASE("Theta superoperator matches the expanded components", "[scattering][theta]") {
    Rng rng(9);
    const auto sd = build_smatrix(random_model(rng));
    const cmat x = random_matrix(rng, 2, 2);
    for (const auto& b : sd.blocks) {
        const auto th = theta_expanded(b, x);
        for (int n = 0; n < 2; ++n) {
            for (int m = 0; m < 2; ++m) {
                CHECK(max_abs(apply_super(theta_superop(b, n, m), x) - th[n][m]) <= 1e-13);
            }
        }
    }
}

TEST_CASE("Theta is a star map", "[scattering][theta][property]") {
    Rng rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        const auto sd = build_smatrix(random_model(rng));
        const cmat x = random_matrix(rng, 2, 2);
        for (const auto& b : sd.blocks) {
            const auto a = theta_expanded(b, x);
            const auto c = theta_expanded(b, cmat(x.adjoint()));
            for (int n = 0; n < 2; ++n) {
                for (int m = 0; m < 2; ++m) {
                    CHECK(max_abs(cmat(a[n][m].adjoint()) - c[m][n]) <= 1e-12);
                }
            }
        }
    }
}
