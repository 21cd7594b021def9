#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace ldl;
using namespace ldl::testing;

namespace {

// Tr(A⁺B)
cplx hs(const cmat& a, const cmat& b) { return (a.adjoint() * b).trace(); }

// Directly coded single-jump Lindbladian in the Heisenberg picture.
cmat lindblad_heis(const cmat& l, const cmat& x) {
    const cmat ld = l.adjoint();
    return ld * x * l - 0.5 * (ld * l * x + x * ld * l);
}

Model diagonal_d_fixture() {
    Model m = demo::two_level();
    m.name = "diagonal_d";
    cmat d = cmat::Zero(2, 2);
    d.diagonal() << cplx(0.6, 0.1), -0.4;
    m.system = SystemModel::with_default_labels({0.0, 0.7}, d);
    return m;
}

} // namespace

// ---- S-matrix route ----

TEST_CASE("empty gas gives a zero generator", "[generator]") {
    Model m = demo::two_level();
    m.gas = GasState::empty(m.grid);
    const auto gen = heisenberg_generator(build_smatrix(m), m.gas);
    CHECK(max_abs(gen.heis) == 0.0);
    CHECK(max_abs(gen.jump) == 0.0);
    const auto cp = cp_check(gen);
    CHECK(cp.pass);
    CHECK(cp.choi_min_eigenvalue == 0.0);
}

TEST_CASE("generator is unital, Hermiticity preserving and dual to its adjoint", "[generator][property]") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_model(rng, {2 + trial % 2});
        const auto d = static_cast<Eigen::Index>(m.system.dim());
        const auto gen = heisenberg_generator(build_smatrix(m), m.gas);
        CHECK(max_abs(gen.apply_heis(identity(d))) <= 1e-12);
        const cmat x = random_matrix(rng, d, d);
        CHECK(max_abs(gen.apply_heis(x.adjoint()) - gen.apply_heis(x).adjoint()) <= 1e-12);
        const cmat rho = random_density(rng, d);
        CHECK(std::abs(hs(gen.apply_schr(rho), x) - hs(rho, gen.apply_heis(x))) <= 1e-12);
        CHECK(std::abs(gen.apply_schr(rho).trace()) <= 1e-12);
    }
}

TEST_CASE("single-bin generator matches a hand-assembled superoperator", "[generator][oracle]") {
    Model m = demo::two_level();
    const std::size_t keep = 4;
    for (std::size_t j = 0; j < m.grid.size(); ++j) {
        if (j != keep) m.gas.weights[j].setZero();
    }
    const auto sd = build_smatrix(m);
    const auto gen = heisenberg_generator(sd, m.gas);
    const auto& b = sd.blocks[keep];
    const auto& v = m.form_factors.amplitudes[keep];
    const cmat& l = m.gas.weights[keep];
    cmat oracle(4, 4);
    for (Eigen::Index a = 0; a < 2; ++a) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            const cmat x = matrix_unit(2, a, c);
            const auto th = theta_expanded(b, x);
            cmat col = cmat::Zero(2, 2);
            for (int n = 0; n < 2; ++n) {
                for (int mm = 0; mm < 2; ++mm) col += m.grid[keep].width * v[n].dot(l * v[mm]) * th[n][mm];
            }
            oracle.col(a + 2 * c) = vec(col);
        }
    }
    CHECK(max_abs(gen.heis - oracle) <= 1e-14);
}

TEST_CASE("S-matrix generator has Lindblad structure", "[generator][cp][property]") {
    Rng rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = random_model(rng, {2 + trial % 3});
        const auto gen = heisenberg_generator(build_smatrix(m), m.gas);
        const auto cp = cp_check(gen);
        CHECK(cp.pass);
        CHECK(cp.choi_min_eigenvalue >= -1e-10);
        CHECK(cp.trace_defect <= 1e-12);
        CHECK(hermiticity_defect(cp.effective_hamiltonian) <= 1e-10);
    }
    for (const auto& name : demo::names()) {
        const auto m = demo::by_name(name);
        CHECK(cp_check(heisenberg_generator(build_smatrix(m), m.gas)).pass);
    }
}

TEST_CASE("cp_check rejects a remainder outside Lindblad form", "[generator][cp]") {
    GeneratorPair g;
    g.dim = 2;
    g.jump = cmat::Zero(4, 4);
    g.heis = left_super(identity(2));  // X ↦ X is not −½{0,X} + i[H,X]
    g.schr = g.heis.adjoint();
    CHECK_THROWS_AS(cp_check(g), ShapeMismatch);
}

// ---- T-matrix route ----

TEST_CASE("zero T gives a zero generator", "[generator][boltzmann]") {
    TMatrixInput in;
    in.dim = 2;
    in.shells = {{1.0, 0.5, 0.5, 0.3}, {1.0, 0.5, 0.5, 0.3}};
    in.elements = {{0.0, 0, 1, cmat::Zero(2, 2)}};
    const auto g = boltzmann_from_T(in);
    CHECK(max_abs(g.heis) == 0.0);
    CHECK(cp_check(g).pass);
}

TEST_CASE("single rank-1 T reproduces the single-jump Lindbladian", "[generator][boltzmann][oracle]") {
    Rng rng(33);
    const cvec a = random_vector(rng, 2), b = random_vector(rng, 2);
    const cmat t = a * b.adjoint();
    const double lk = 0.37, w_in = 0.2, w_out = 0.3, width_out = 0.25;
    TMatrixInput in;
    in.dim = 2;
    in.shells = {{1.0, w_in, 0.2, lk}, {1.05, w_out, width_out, 0.0}};
    in.elements = {{0.0, 1, 0, t}};
    const auto g = boltzmann_from_T(in);
    const double rate = 2.0 * pi * lk * w_in * w_out / width_out;
    const cmat jump = std::sqrt(rate) * t;
    for (Eigen::Index p = 0; p < 2; ++p) {
        for (Eigen::Index q = 0; q < 2; ++q) {
            const cmat x = matrix_unit(2, p, q);
            CHECK(max_abs(g.apply_heis(x) - lindblad_heis(jump, x)) <= 1e-10);
        }
    }
    const auto cp = cp_check(g);
    CHECK(cp.pass);
    CHECK(max_abs(cp.effective_hamiltonian) <= 1e-10);
    for (int k = 0; k < 20; ++k) CHECK(std::abs(g.apply_schr(random_density(rng, 2)).trace()) <= 1e-12);

    // Outside the energy window the pair does not contribute.
    in.shells[1].energy = 1.2;
    CHECK(max_abs(boltzmann_from_T(in).heis) == 0.0);
}

TEST_CASE("Bohr frequency shifts the energy window", "[generator][boltzmann]") {
    TMatrixInput in;
    in.dim = 2;
    in.shells = {{1.0, 0.1, 0.1, 1.0}, {1.5, 0.1, 0.1, 1.0}};
    in.elements = {{-0.5, 1, 0, matrix_unit(2, 0, 1)}};
    CHECK(boltzmann_jumps(in).size() == 1);
    in.elements[0].omega = 0.0;
    CHECK(boltzmann_jumps(in).empty());
}

TEST_CASE("T-matrix input validation", "[generator][boltzmann]") {
    TMatrixInput in;
    in.dim = 2;
    in.shells = {{1.0, 0.1, 0.1, -0.2}};
    CHECK_THROWS_AS(boltzmann_from_T(in), InvalidArgument);
    in.shells[0].density = 0.2;
    in.elements = {{0.0, 0, 3, identity(2)}};
    CHECK_THROWS_AS(boltzmann_from_T(in), ShapeMismatch);
}

TEST_CASE("both routes agree on the dissipative part for diagonal D", "[generator][boltzmann][oracle]") {
    const auto m = diagonal_d_fixture();
    REQUIRE(m.system.coupling_is_stationary());
    const auto sd = build_smatrix(m);
    const auto a = heisenberg_generator(sd, m.gas);
    const auto b = boltzmann_from_T(tmatrix_from_scattering(sd, m.gas));
    CHECK(dissipative_defect(a, b) <= 1e-8);
    CHECK(max_abs(a.heis) > 1e-3);

    // Random stationary couplings on a rank-deficient grid too.
    Rng rng(34);
    for (int trial = 0; trial < 10; ++trial) {
        Model r = random_model(rng, {3});
        r.system.coupling = cmat(r.system.coupling.diagonal().asDiagonal());
        if (trial % 2) {
            for (std::size_t j = 0; j < 5; ++j) r.form_factors.amplitudes[j][1] = 0.5 * r.form_factors.amplitudes[j][0];
        }
        const auto s = build_smatrix(r);
        CHECK(dissipative_defect(heisenberg_generator(s, r.gas), boltzmann_from_T(tmatrix_from_scattering(s, r.gas))) <=
              1e-8);
    }
}

TEST_CASE("T extraction needs scalar L on the relevant subspace", "[generator][boltzmann]") {
    Model m = demo::two_level();
    m.gas.weights[3](0, 0) *= 2.0;
    const auto sd = build_smatrix(m);
    CHECK_THROWS_AS(tmatrix_from_scattering(sd, m.gas), InvalidArgument);
}

// ---- evolution ----

TEST_CASE("evolution trivial cases", "[generator][evolve]") {
    Rng rng(35);
    const auto m = demo::two_level();
    const auto gen = heisenberg_generator(build_smatrix(m), m.gas);
    const cmat rho = random_density(rng, 2);
    CHECK(max_abs(evolve_density(gen, rho, 0.0, 0.1) - rho) == 0.0);
    GeneratorPair zero;
    zero.dim = 2;
    zero.heis = zero.schr = zero.jump = cmat::Zero(4, 4);
    CHECK(max_abs(evolve_density(zero, rho, 3.0, 0.1) - rho) <= 1e-15);
    CHECK_THROWS_AS(evolve_density(gen, cmat(2.0 * rho), 1.0, 0.1), InvalidState);
    CHECK_THROWS_AS(evolve_density(gen, rho, -1.0, 0.1), InvalidArgument);
}

TEST_CASE("amplitude damping decays at the generator's eigenvalue", "[generator][evolve][oracle]") {
    const double rate = 0.8;
    const auto gen = lindblad_from_jumps({{rate, std::sqrt(rate) * matrix_unit(2, 0, 1)}}, 2);
    // Decay eigenvalue of ℒ_* on the excited population.
    Eigen::ComplexEigenSolver<cmat> es(gen.schr);
    double decay = 0.0;
    for (Eigen::Index k = 0; k < 4; ++k) {
        const cvec ev = es.eigenvectors().col(k);
        const cmat e = unvec(ev, 2);
        if (std::abs(e(0, 1)) < 1e-12 && std::abs(e(1, 0)) < 1e-12 && std::abs(es.eigenvalues()(k)) > 1e-12) {
            decay = -es.eigenvalues()(k).real();
        }
    }
    REQUIRE(decay > 0.0);
    CHECK(std::abs(decay - rate) <= 1e-12);
    cmat rho = cmat::Zero(2, 2);
    rho(1, 1) = 1.0;
    for (double t : {0.1, 1.0, 3.0}) {
        CHECK(std::abs(evolve_density(gen, rho, t, 0.01)(1, 1).real() - std::exp(-decay * t)) <= 1e-12);
    }
}

TEST_CASE("semigroup property", "[generator][evolve][property]") {
    Rng rng(36);
    for (int trial = 0; trial < 5; ++trial) {
        const auto m = random_model(rng, {3});
        const auto gen = heisenberg_generator(build_smatrix(m), m.gas);
        const cmat rho = random_density(rng, 3);
        for (double s : {0.1, 1.0}) {
            for (double t : {0.1, 1.0}) {
                const cmat lhs = evolve_density(gen, rho, s + t, 0.01);
                const cmat rhs = evolve_density(gen, evolve_density(gen, rho, t, 0.01), s, 0.01);
                CHECK(max_abs(lhs - rhs) <= 1e-10);
            }
        }
    }
}

TEST_CASE("evolution preserves trace and positivity", "[generator][evolve][property]") {
    Rng rng(37);
    const auto m = demo::two_level();
    const auto gen = heisenberg_generator(build_smatrix(m), m.gas);
    const std::vector<double> times{0.5, 2.0, 10.0, 50.0};
    double worst_eig = 0.0, worst_trace = 0.0;
    for (int k = 0; k < 100; ++k) {
        // include pure states, which sit on the boundary of the state space
        cmat rho = random_density(rng, 2);
        if (k % 4 == 0) {
            const cvec psi = random_vector(rng, 2).normalized();
            rho = psi * psi.adjoint();
        }
        for (const auto& r : evolve_density(gen, rho, times, 0.01)) {
            worst_eig = std::min(worst_eig, min_hermitian_eigenvalue(r));
            worst_trace = std::max(worst_trace, std::abs(r.trace() - cplx{1.0, 0.0}));
        }
    }
    CHECK(worst_eig >= -1e-8);
    CHECK(worst_trace <= 1e-12);
}

TEST_CASE("RK4 path agrees with the exact exponential", "[generator][evolve]") {
    Rng rng(38);
    const Eigen::Index d = 9;
    std::vector<JumpOperator> jumps;
    for (int k = 0; k < 3; ++k) jumps.push_back({1.0, 0.3 * random_matrix(rng, d, d)});
    auto gen = lindblad_from_jumps(jumps, d);
    const cmat h = random_hermitian(rng, d) * 0.5;
    gen.heis += commutator_super(h);
    gen.schr = gen.heis.adjoint();
    const cmat rho = random_density(rng, d);
    const cmat rk = evolve_density(gen, rho, 1.0, 1e-3);
    const cmat ex = unvec((1.0 * gen.schr).exp() * vec(rho), d);
    CHECK(max_abs(rk - ex) <= 1e-10);
}

TEST_CASE("duality between Heisenberg and Schroedinger evolution", "[generator][duality]") {
    Rng rng(39);
    const auto m = random_model(rng, {3});
    const auto gen = heisenberg_generator(build_smatrix(m), m.gas);
    const cmat rho = random_density(rng, 3);
    const cmat x = random_hermitian(rng, 3);
    CHECK(duality_check(gen, rho, identity(3), 2.0) <= 1e-12);
    CHECK(duality_check(gen, rho, x, 0.0) == 0.0);
    CHECK(duality_check(gen, rho, x, 1.0) <= 1e-10);
}
