// collision.hpp: Poisson collision model realizing dU = dN(S−1)U.
//
// Each bin j contributes an unnormalized one-particle operator on its relevant
// subspace, ρ̃_j = ΔE_j Q_j⁺ L_j Q_j / (2π). The rate is λ = Σ_j Tr ρ̃_j; a
// collision picks bin j with probability Tr ρ̃_j / λ and applies
//   ρ ↦ Tr₁[S_j (ρ̃_j/Tr ρ̃_j ⊗ ρ) S_j⁺].
// The 1/(2π) is what makes λ(E[S⁺XS] − X) reproduce the Heisenberg generator.

#pragma once

#include "ldl/generator.hpp"
#include "ldl/linalg.hpp"
#include "ldl/scattering.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace ldl {

// --------------------------- RNG --------------------------------------------

// Counter-based generator: draw k of stream `key` is splitmix64(key + k·φ).
// Streams are independent of call order across threads.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() {
        ++counter_;
        return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Exponential waiting time by inversion.
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_{0};
};

// --------------------------- kernel -----------------------------------------

struct CollisionChannel {
    std::size_t bin{0};
    double probability{0.0};
    cmat rho1;                // normalized, r × r
    cmat s;                   // S block on C^r ⊗ H_S
    std::vector<cmat> kraus;  // ρ ↦ Σ K ρ K⁺
};

struct CollisionKernel {
    Eigen::Index dim{0};
    double rate{0.0};
    std::vector<CollisionChannel> channels;
    std::vector<double> cumulative;
    double identity_defect{0.0};

    bool empty() const { return channels.empty(); }

    std::size_t pick(double u) const {
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return std::min(static_cast<std::size_t>(it - cumulative.begin()), channels.size() - 1);
    }
};

inline constexpr double empty_gas_rate = 1e-15;
inline constexpr double generator_identity_tolerance = 1e-8;

// K_{a,k} = √p_k (⟨e_a| ⊗ 1) S (|φ_k⟩ ⊗ 1) for ρ₁ = Σ_k p_k |φ_k⟩⟨φ_k|.
inline std::vector<cmat> collision_kraus(const cmat& s, const cmat& rho1, Eigen::Index ds) {
    const auto r = rho1.rows();
    Eigen::SelfAdjointEigenSolver<cmat> es(0.5 * (rho1 + rho1.adjoint()));
    std::vector<cmat> out;
    for (Eigen::Index k = 0; k < r; ++k) {
        const double p = es.eigenvalues()(k);
        if (p <= 0.0) continue;
        const cvec phi = es.eigenvectors().col(k);
        const cmat in = kron(phi, identity(ds));  // (r·ds) × ds
        const cmat col = s * in;
        for (Eigen::Index a = 0; a < r; ++a) out.push_back(std::sqrt(p) * col.block(a * ds, 0, ds, ds));
    }
    return out;
}

inline cmat apply_channel(const CollisionChannel& ch, const cmat& rho) {
    cmat out = cmat::Zero(rho.rows(), rho.cols());
    for (const auto& k : ch.kraus) out += k * rho * k.adjoint();
    return out;
}

// Tr₁[(ρ₁ ⊗ 1) S⁺ (1 ⊗ X) S], computed literally on the full block.
inline cmat channel_heisenberg(const CollisionChannel& ch, const cmat& x) {
    const auto ds = x.rows();
    const auto r = ch.rho1.rows();
    const cmat big = kron(identity(r), x);
    return partial_trace_first(kron(ch.rho1, identity(ds)) * ch.s.adjoint() * big * ch.s, r, ds);
}

// max over matrix units X of ‖λ(Σ_j p_j Tr₁[(ρ₁_j⊗1)S_j⁺(1⊗X)S_j] − X) − heis(X)‖
inline double generator_identity_defect(const CollisionKernel& k, const GeneratorPair& gen) {
    const auto d = gen.dim;
    double worst = 0.0;
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = 0; b < d; ++b) {
            const cmat x = matrix_unit(d, a, b);
            cmat lhs = cmat::Zero(d, d);
            if (!k.empty()) {
                for (const auto& ch : k.channels) lhs += ch.probability * channel_heisenberg(ch, x);
                lhs = k.rate * (lhs - x);
            }
            worst = std::max(worst, max_abs(lhs - gen.apply_heis(x)));
        }
    }
    return worst;
}

inline CollisionKernel build_kernel(const ScatteringData& sd, const GasState& gas) {
    if (gas.weights.size() != sd.blocks.size()) throw ShapeMismatch("build_kernel: gas/bin count");
    CollisionKernel k;
    k.dim = sd.system_dim();
    std::vector<std::pair<std::size_t, cmat>> unnormalized;
    double total = 0.0;
    for (std::size_t j = 0; j < sd.blocks.size(); ++j) {
        const auto& b = sd.blocks[j];
        if (b.rank() == 0) continue;
        const cmat& q = b.basis.q;
        cmat rt = (b.width / (2.0 * pi)) * (q.adjoint() * gas.weights[j] * q);
        rt = 0.5 * (rt + rt.adjoint()).eval();
        const double tr = rt.trace().real();
        if (tr <= 0.0) continue;
        total += tr;
        unnormalized.emplace_back(j, std::move(rt));
    }
    const GeneratorPair gen = heisenberg_generator(sd, gas);
    if (total <= empty_gas_rate) {
        k.identity_defect = generator_identity_defect(k, gen);
        return k;
    }
    k.rate = total;
    double acc = 0.0;
    for (auto& [j, rt] : unnormalized) {
        const double tr = rt.trace().real();
        CollisionChannel ch;
        ch.bin = j;
        ch.probability = tr / total;
        ch.rho1 = rt / tr;
        ch.s = sd.blocks[j].s;
        ch.kraus = collision_kraus(ch.s, ch.rho1, k.dim);
        acc += ch.probability;
        k.cumulative.push_back(acc);
        k.channels.push_back(std::move(ch));
    }
    k.cumulative.back() = 1.0;
    k.identity_defect = generator_identity_defect(k, gen);
    if (k.identity_defect > generator_identity_tolerance * std::max(1.0, max_abs(gen.heis))) {
        throw InvalidState("build_kernel: generator identity violated (defect " +
                           std::to_string(k.identity_defect) + ")");
    }
    return k;
}

// Averaged one-collision map M as a Schrödinger-picture superoperator.
inline cmat one_collision_superop(const CollisionKernel& k) {
    const auto d = k.dim;
    cmat m = cmat::Zero(d * d, d * d);
    if (k.empty()) return identity(d * d);
    for (const auto& ch : k.channels) {
        for (const auto& kr : ch.kraus) m += ch.probability * sandwich_super(kr, kr.adjoint());
    }
    return m;
}

inline cmat apply_collision(const CollisionKernel& k, const cmat& rho) {
    return apply_super(one_collision_superop(k), rho);
}

struct PoissonSeries {
    cmat rho;
    int terms{0};
    double tail{0.0};  // Poisson mass beyond the last term, bounds the trace-norm error
};

// e^{−λt} Σ_k (λt)^k/k! M^k(ρ0), truncated once the remaining Poisson mass is below tail_tol.
inline PoissonSeries poisson_series(const CollisionKernel& k, const cmat& rho0, double t,
                                    double tail_tol = 1e-10, int max_terms = 1000) {
    const double mu = k.rate * t;
    const cmat m = one_collision_superop(k);
    PoissonSeries out;
    cvec cur = vec(rho0);
    cvec acc = cvec::Zero(cur.size());
    double weight = std::exp(-mu);
    double mass = 0.0;
    for (int n = 0; n < max_terms; ++n) {
        acc += weight * cur;
        mass += weight;
        out.terms = n + 1;
        out.tail = std::max(0.0, 1.0 - mass);
        if (out.tail < tail_tol) break;
        cur = m * cur;
        weight *= mu / static_cast<double>(n + 1);
    }
    out.rho = unvec(acc, rho0.rows());
    return out;
}

// --------------------------- trajectories -----------------------------------

struct TrajectoryRecord {
    std::uint64_t seed{0};
    std::vector<double> collision_times;
    std::vector<std::size_t> collision_bins;
    std::vector<double> output_times;
    std::vector<cmat> snapshots;
};

struct TrajectoryOptions {
    bool schroedinger_picture{false};
    cmat hamiltonian;  // H_S, used only in the Schrödinger picture
};

inline cmat to_schroedinger(const cmat& rho, const cmat& h, double t) {
    // H_S is diagonal in the model basis.
    cmat out = rho;
    for (Eigen::Index a = 0; a < rho.rows(); ++a) {
        for (Eigen::Index b = 0; b < rho.cols(); ++b) {
            out(a, b) *= std::exp(-I * t * (h(a, a) - h(b, b)));
        }
    }
    return out;
}

inline TrajectoryRecord sample_trajectory(const CollisionKernel& k, const cmat& rho0,
                                          const std::vector<double>& outputs, std::uint64_t seed,
                                          const TrajectoryOptions& opt = {}) {
    if (!std::is_sorted(outputs.begin(), outputs.end())) {
        throw InvalidArgument("sample_trajectory: output times must be sorted");
    }
    TrajectoryRecord rec;
    rec.seed = seed;
    rec.output_times = outputs;
    CounterRng rng(seed);
    const double t_end = outputs.empty() ? 0.0 : outputs.back();
    cmat rho = rho0;
    double next = (k.empty() || k.rate <= 0.0) ? std::numeric_limits<double>::infinity()
                                                : rng.exponential(k.rate);
    std::size_t o = 0;
    auto emit_until = [&](double horizon) {
        while (o < outputs.size() && outputs[o] < horizon) {
            rec.snapshots.push_back(opt.schroedinger_picture ? to_schroedinger(rho, opt.hamiltonian, outputs[o])
                                                             : rho);
            ++o;
        }
    };
    while (next <= t_end) {
        emit_until(next);
        const auto& ch = k.channels[k.pick(rng.uniform())];
        rho = apply_channel(ch, rho);
        rho = 0.5 * (rho + rho.adjoint()).eval();
        rec.collision_times.push_back(next);
        rec.collision_bins.push_back(ch.bin);
        next += rng.exponential(k.rate);
    }
    emit_until(std::numeric_limits<double>::infinity());
    return rec;
}

struct EnsembleResult {
    std::vector<double> times;
    std::vector<cmat> mean;
    std::vector<Eigen::MatrixXd> stderr_re;
    std::vector<Eigen::MatrixXd> stderr_im;
    double mean_collisions{0.0};
    std::size_t n_traj{0};
};

namespace detail {

struct EnsembleChunk {
    std::vector<cmat> sum;
    std::vector<Eigen::MatrixXd> sq_re, sq_im;
    double collisions{0.0};
};

} // namespace detail

inline constexpr std::size_t ensemble_chunk_size = 128;

// Trajectory i uses seed master_seed ⊕ i. Partial sums are kept per fixed-size
// chunk and reduced in chunk order, so the result does not depend on `threads`.
inline EnsembleResult ensemble_average(const CollisionKernel& k, const cmat& rho0, const std::vector<double>& times,
                                       std::size_t n_traj, std::uint64_t master_seed, unsigned threads = 1,
                                       const TrajectoryOptions& opt = {}) {
    if (n_traj < 1) throw InvalidArgument("ensemble_average: n_traj must be >= 1");
    validate_state(rho0);
    const auto d = rho0.rows();
    const std::size_t nt = times.size();
    const std::size_t n_chunks = (n_traj + ensemble_chunk_size - 1) / ensemble_chunk_size;
    std::vector<detail::EnsembleChunk> chunks(n_chunks);

    auto run_chunk = [&](std::size_t c) {
        auto& ch = chunks[c];
        ch.sum.assign(nt, cmat::Zero(d, d));
        ch.sq_re.assign(nt, Eigen::MatrixXd::Zero(d, d));
        ch.sq_im.assign(nt, Eigen::MatrixXd::Zero(d, d));
        const std::size_t lo = c * ensemble_chunk_size;
        const std::size_t hi = std::min(n_traj, lo + ensemble_chunk_size);
        for (std::size_t i = lo; i < hi; ++i) {
            const auto rec = sample_trajectory(k, rho0, times, master_seed ^ static_cast<std::uint64_t>(i), opt);
            for (std::size_t t = 0; t < nt; ++t) {
                const cmat& s = rec.snapshots[t];
                ch.sum[t] += s;
                ch.sq_re[t] += s.real().cwiseAbs2();
                ch.sq_im[t] += s.imag().cwiseAbs2();
            }
            ch.collisions += static_cast<double>(rec.collision_times.size());
        }
    };

    const unsigned nthreads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_chunks)));
    if (nthreads == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < nthreads; ++w) {
            pool.emplace_back([&] {
                for (std::size_t c = next++; c < n_chunks; c = next++) run_chunk(c);
            });
        }
        for (auto& th : pool) th.join();
    }

    EnsembleResult res;
    res.times = times;
    res.n_traj = n_traj;
    const double n = static_cast<double>(n_traj);
    std::vector<cmat> sum(nt, cmat::Zero(d, d));
    std::vector<Eigen::MatrixXd> sq_re(nt, Eigen::MatrixXd::Zero(d, d)), sq_im(nt, Eigen::MatrixXd::Zero(d, d));
    double coll = 0.0;
    for (const auto& ch : chunks) {
        for (std::size_t t = 0; t < nt; ++t) {
            sum[t] += ch.sum[t];
            sq_re[t] += ch.sq_re[t];
            sq_im[t] += ch.sq_im[t];
        }
        coll += ch.collisions;
    }
    res.mean_collisions = coll / n;
    for (std::size_t t = 0; t < nt; ++t) {
        const cmat mean = sum[t] / n;
        res.mean.push_back(mean);
        if (n_traj < 2) {
            res.stderr_re.push_back(Eigen::MatrixXd::Zero(d, d));
            res.stderr_im.push_back(Eigen::MatrixXd::Zero(d, d));
            continue;
        }
        auto se = [&](const Eigen::MatrixXd& sq, const Eigen::MatrixXd& m) {
            Eigen::MatrixXd var = (sq - n * m.cwiseAbs2()) / (n - 1.0);
            return Eigen::MatrixXd(var.cwiseMax(0.0).cwiseSqrt() / std::sqrt(n));
        };
        res.stderr_re.push_back(se(sq_re[t], mean.real()));
        res.stderr_im.push_back(se(sq_im[t], mean.imag()));
    }
    return res;
}

} // namespace ldl
