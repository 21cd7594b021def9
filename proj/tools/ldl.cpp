// ldl: command-line driver for the low-density-limit library.
//
// Exit codes: 0 success/PASS, 1 verdict FAIL, 2 input or usage error.

#include "ldl/io.hpp"
#include "ldl/ldl.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

using namespace ldl;
using io::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_fail = 1;
constexpr int exit_input = 2;

const char* schema_help = R"(Model files are JSON with schema_version 1:
  {"schema_version": 1, "name": "...",
   "system": {"eigenvalues": [..], "labels": [..] (optional), "coupling": [[[re,im],..],..]},
   "grid": {"bins": [{"E": .., "width": .., "multiplicity": ..}, ..]},
   "form_factors": [{"v0": [[re,im],..], "v1": [[re,im],..]}, ..],
   "gas": {"xi": .., "beta": ..}  or  {"xi": .., "L": [number | matrix, ..]},
   "wick": {"broadening": ..} (optional)}
Bundled models: demo:two_level, demo:null, demo:rank_deficient.
Full description: docs/model_schema.md
)";

// ---- run bookkeeping ----

struct Run {
    std::string subcommand;
    std::string manifest_path;
    int verbosity{0};
    json inputs = json::object();
    json parameters = json::object();
    json outputs = json::array();
    json verdicts = json::object();
    std::optional<std::uint64_t> seed;
    std::chrono::system_clock::time_point started = std::chrono::system_clock::now();
    std::chrono::steady_clock::time_point tick = std::chrono::steady_clock::now();

    void log(const std::string& s) const {
        if (verbosity > 0) std::cerr << "[ldl " << subcommand << "] " << s << "\n";
    }

    void input(const std::string& name, const std::string& where, const std::string& bytes) {
        inputs[name] = {{"source", where}, {"fnv1a", io::hex64(io::fnv1a(bytes))}};
    }

    void output(const std::string& path, const std::string& content) {
        io::write_file(path, content);
        outputs.push_back({{"path", path}, {"fnv1a", io::hex64(io::fnv1a(content))}});
        log("wrote " + path);
    }

    void verdict(const std::string& name, bool pass, double value, double threshold) {
        verdicts[name] = {{"pass", pass}, {"value", value}, {"threshold", threshold}};
        std::printf("%s  %-34s %.3e  (threshold %.1e)\n", pass ? "PASS" : "FAIL", name.c_str(), value, threshold);
    }

    bool all_pass() const {
        for (const auto& [k, v] : verdicts.items()) {
            if (!v["pass"].get<bool>()) return false;
        }
        return true;
    }
};

std::string utc(std::chrono::system_clock::time_point tp) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const Run& run, int code) {
    if (run.manifest_path.empty()) return;
    json m;
    m["subcommand"] = run.subcommand;
    m["version"] = {{"ldl", ldl::version}, {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                          std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                          std::to_string(EIGEN_MINOR_VERSION)},
                    {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                    {"cli11", CLI11_VERSION}};
    m["inputs"] = run.inputs;
    m["parameters"] = run.parameters;
    m["outputs"] = run.outputs;
    m["verdicts"] = run.verdicts;
    m["seed"] = run.seed ? json(*run.seed) : json(nullptr);
    m["exit_code"] = code;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - run.tick).count();
    m["timing"] = {{"started_utc", utc(run.started)},
                   {"finished_utc", utc(std::chrono::system_clock::now())},
                   {"wall_seconds", wall}};
    try {
        io::write_file(run.manifest_path, m.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "ldl: " << e.what() << "\n";
    }
}

std::string default_manifest(const std::string& out, const std::string& sub) {
    if (!out.empty()) return out + ".manifest.json";
    return sub + ".manifest.json";
}

Model load(Run& run, const std::string& spec) {
    auto lm = io::load_model(spec);
    lm.model.validate();
    run.input("model", spec, lm.text);
    return lm.model;
}

cmat load_rho0(Run& run, const std::string& path, Eigen::Index d) {
    if (path.empty()) {
        cmat rho = cmat::Zero(d, d);
        rho(0, 0) = 1.0;
        run.parameters["rho0"] = "ground projector |0><0|";
        return rho;
    }
    const std::string text = io::read_file(path);
    run.input("rho0", path, text);
    const cmat rho = io::density_from_json(io::parse_located(text, path), d);
    validate_state(rho);
    return rho;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw InvalidArgument("cannot parse number '" + item + "' in list '" + s + "'");
        }
    }
    return out;
}

json cjson(cplx z) { return io::complex_json(z); }

// ---- subcommands ----

struct CheckOpts {
    std::string model, out, write_normalized;
};

int run_check(Run& run, const CheckOpts& o) {
    const Model m = load(run, o.model);
    json rep;
    rep["name"] = m.name;
    rep["system_dim"] = m.system.dim();
    rep["bins"] = m.grid.size();
    rep["coupling_stationary"] = m.system.coupling_is_stationary();
    rep["norm_g0_sq"] = m.form_factors.norm_squared(m.grid, 0);
    rep["norm_g1_sq"] = m.form_factors.norm_squared(m.grid, 1);
    json bohr = json::array();
    for (const auto& c : bohr_decompose(m.system)) bohr.push_back({{"omega", c.omega}, {"norm", max_abs(c.op)}});
    rep["bohr"] = bohr;
    std::vector<std::size_t> degenerate;
    for (std::size_t j = 0; j < m.grid.size(); ++j) {
        if (relevant_basis(m.form_factors.v(j, 0), m.form_factors.v(j, 1)).rank < 2) degenerate.push_back(j);
    }
    rep["degenerate_gram_bins"] = degenerate;
    std::printf("model %s: d_S=%zu, %zu bins, %zu rank-deficient Gram bins\n", m.name.c_str(), m.system.dim(),
                m.grid.size(), degenerate.size());
    if (!m.system.coupling_is_stationary()) {
        std::printf("warning: D does not commute with H_S; the S-matrix route uses D as given (D(t) = D)\n");
    }
    if (!o.write_normalized.empty()) run.output(o.write_normalized, io::model_to_json(m).dump(2) + "\n");
    if (!o.out.empty()) run.output(o.out, rep.dump(2) + "\n");
    return exit_ok;
}

struct SmatrixOpts {
    std::string model, out, blocks_json;
    double tol{1e-10};
};

int run_smatrix(Run& run, const SmatrixOpts& o) {
    const Model m = load(run, o.model);
    run.parameters["unit_tolerance"] = o.tol;
    const auto sd = build_smatrix(m);
    std::ostringstream csv;
    csv << "bin,E,cond_T0,cond_T1,unit_defect\n";
    double worst = 0.0;
    json blocks = json::array();
    for (const auto& b : sd.blocks) {
        const double defect = std::max(b.unit_defect, b.co_unit_defect);
        worst = std::max(worst, defect);
        csv << b.bin << "," << io::fmt(b.energy) << "," << io::fmt(b.t.cond0) << "," << io::fmt(b.t.cond1) << ","
            << io::fmt(defect) << "\n";
        if (!o.blocks_json.empty()) {
            blocks.push_back({{"bin", b.bin},
                              {"E", b.energy},
                              {"rank", b.rank()},
                              {"S", io::matrix_json(b.s)},
                              {"basis_C", io::matrix_json(b.basis.c)}});
        }
    }
    if (!o.out.empty()) run.output(o.out, csv.str());
    else std::cout << csv.str();
    if (!o.blocks_json.empty()) run.output(o.blocks_json, json{{"blocks", blocks}}.dump(2) + "\n");
    run.verdict("smatrix.unitarity", worst <= o.tol, worst, o.tol);
    return run.all_pass() ? exit_ok : exit_fail;
}

struct EvolveOpts {
    std::string model, rho0, out;
    double t{1.0}, dt{0.1};
    bool schroedinger{false};
};

std::string state_header(Eigen::Index d) {
    std::ostringstream h;
    h << "t";
    for (Eigen::Index i = 0; i < d; ++i) h << ",p" << i;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) h << ",re_" << i << j << ",im_" << i << j;
    }
    return h.str();
}

int run_evolve(Run& run, const EvolveOpts& o) {
    if (!(o.t >= 0.0) || !(o.dt > 0.0)) throw InvalidArgument("--t must be >= 0 and --dt > 0");
    const Model m = load(run, o.model);
    const cmat rho0 = load_rho0(run, o.rho0, static_cast<Eigen::Index>(m.system.dim()));
    run.parameters.update({{"t", o.t}, {"dt", o.dt}, {"schroedinger_picture", o.schroedinger}});
    const auto sd = build_smatrix(m);
    const auto gen = heisenberg_generator(sd, m.gas);
    std::vector<double> times;
    const auto steps = static_cast<long>(std::llround(o.t / o.dt));
    for (long k = 0; k <= steps; ++k) times.push_back(std::min(o.t, static_cast<double>(k) * o.dt));
    if (times.back() < o.t) times.push_back(o.t);
    const auto states = evolve_density(gen, rho0, times, o.dt);
    const cmat h = m.system.hamiltonian();
    const auto d = rho0.rows();
    std::ostringstream csv;
    csv << state_header(d) << ",trace,min_eig\n";
    double trace_dev = 0.0, min_eig = 1.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const cmat rho = o.schroedinger ? to_schroedinger(states[k], h, times[k]) : states[k];
        const double tr = rho.trace().real();
        const double me = min_hermitian_eigenvalue(rho);
        trace_dev = std::max(trace_dev, std::abs(rho.trace() - cplx{1.0, 0.0}));
        min_eig = std::min(min_eig, me);
        csv << io::fmt(times[k]);
        for (Eigen::Index i = 0; i < d; ++i) csv << "," << io::fmt(rho(i, i).real());
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = i + 1; j < d; ++j) csv << "," << io::fmt(rho(i, j).real()) << "," << io::fmt(rho(i, j).imag());
        }
        csv << "," << io::fmt(tr) << "," << io::fmt(me) << "\n";
    }
    if (!o.out.empty()) run.output(o.out, csv.str());
    else std::cout << csv.str();
    run.verdict("evolve.trace", trace_dev <= 1e-10, trace_dev, 1e-10);
    run.verdict("evolve.positivity", min_eig >= -1e-8, std::max(0.0, -min_eig), 1e-8);
    return run.all_pass() ? exit_ok : exit_fail;
}

struct TrajOpts {
    std::string model, rho0, out, meta;
    double t_end{1.0};
    std::size_t n_traj{1000};
    std::size_t n_out{10};
    std::uint64_t seed{0};
    bool schroedinger{false};
    unsigned threads{1};
};

int run_trajectories(Run& run, const TrajOpts& o) {
    if (!(o.t_end > 0.0)) throw InvalidArgument("--t-end must be > 0");
    if (o.n_traj < 1 || o.n_out < 1) throw InvalidArgument("--n-traj and --n-out must be >= 1");
    const Model m = load(run, o.model);
    const cmat rho0 = load_rho0(run, o.rho0, static_cast<Eigen::Index>(m.system.dim()));
    run.seed = o.seed;
    run.parameters.update({{"t_end", o.t_end}, {"n_traj", o.n_traj}, {"n_out", o.n_out},
                           {"schroedinger_picture", o.schroedinger}});
    const auto sd = build_smatrix(m);
    const auto kernel = build_kernel(sd, m.gas);
    const auto gen = heisenberg_generator(sd, m.gas);
    std::vector<double> times;
    for (std::size_t k = 1; k <= o.n_out; ++k) times.push_back(o.t_end * static_cast<double>(k) / static_cast<double>(o.n_out));
    TrajectoryOptions topt;
    topt.schroedinger_picture = o.schroedinger;
    topt.hamiltonian = m.system.hamiltonian();
    const auto ens = ensemble_average(kernel, rho0, times, o.n_traj, o.seed, o.threads, topt);
    const auto exact = evolve_density(gen, rho0, times, 1e-3);

    const auto d = rho0.rows();
    std::ostringstream csv;
    csv << "t";
    for (const char* part : {"mean_re", "mean_im", "se_re", "se_im"}) {
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) csv << "," << part << "_" << i << j;
        }
    }
    csv << "\n";
    std::size_t within = 0, total = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const cmat ref = o.schroedinger ? to_schroedinger(exact[k], topt.hamiltonian, times[k]) : exact[k];
        csv << io::fmt(times[k]);
        auto emit = [&](auto get) {
            for (Eigen::Index i = 0; i < d; ++i) {
                for (Eigen::Index j = 0; j < d; ++j) csv << "," << io::fmt(get(i, j));
            }
        };
        emit([&](auto i, auto j) { return ens.mean[k](i, j).real(); });
        emit([&](auto i, auto j) { return ens.mean[k](i, j).imag(); });
        emit([&](auto i, auto j) { return ens.stderr_re[k](i, j); });
        emit([&](auto i, auto j) { return ens.stderr_im[k](i, j); });
        csv << "\n";
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                within += std::abs(ens.mean[k](i, j).real() - ref(i, j).real()) <= 4.0 * ens.stderr_re[k](i, j) + 1e-12;
                within += std::abs(ens.mean[k](i, j).imag() - ref(i, j).imag()) <= 4.0 * ens.stderr_im[k](i, j) + 1e-12;
                total += 2;
            }
        }
    }
    json meta;
    meta["rate"] = kernel.rate;
    meta["generator_identity_defect"] = kernel.identity_defect;
    meta["mean_collisions"] = ens.mean_collisions;
    meta["expected_collisions"] = kernel.rate * o.t_end;
    json channels = json::array();
    for (const auto& ch : kernel.channels) {
        channels.push_back({{"bin", ch.bin}, {"probability", ch.probability}, {"rank", ch.rho1.rows()}});
    }
    meta["channels"] = channels;
    meta["fraction_within_4se"] = static_cast<double>(within) / static_cast<double>(total);
    const std::string out = o.out.empty() ? "trajectories.csv" : o.out;
    run.output(out, csv.str());
    run.output(o.meta.empty() ? out + ".json" : o.meta, meta.dump(2) + "\n");
    run.verdict("trajectories.generator_identity", kernel.identity_defect <= 1e-8, kernel.identity_defect, 1e-8);
    run.verdict("trajectories.entries_outside_4se", within == total, static_cast<double>(total - within), 0.0);
    return run.all_pass() ? exit_ok : exit_fail;
}

struct CorrOpts {
    std::string model, spec, channels, out;
    std::string xis{"0.1,0.01,0.001"};
    double t{1.0};
};

CorrelatorSpec spec_from_channels(const std::string& s) {
    std::vector<std::pair<int, int>> ch;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.size() != 2 || (item[0] != '0' && item[0] != '1') || (item[1] != '0' && item[1] != '1')) {
            throw InvalidArgument("--channels entries are two digits fg in {0,1}, got '" + item + "'");
        }
        ch.emplace_back(item[0] - '0', item[1] - '0');
    }
    return CorrelatorSpec::time_ordered(ch);
}

json spec_json(const CorrelatorSpec& s) {
    json a = json::array();
    for (const auto& f : s.factors) a.push_back({{"f", f.f}, {"g", f.g}, {"slot", f.slot}});
    return a;
}

int run_correlators(Run& run, const CorrOpts& o) {
    const Model m = load(run, o.model);
    CorrelatorSpec spec;
    if (!o.spec.empty()) {
        const std::string text = io::read_file(o.spec);
        run.input("spec", o.spec, text);
        spec = io::spec_from_json(io::parse_located(text, o.spec));
    } else if (!o.channels.empty()) {
        spec = spec_from_channels(o.channels);
    } else {
        throw InvalidArgument("give --spec <file> or --channels fg,fg,...");
    }
    const auto xis = parse_list(o.xis);
    for (std::size_t i = 1; i < xis.size(); ++i) {
        if (!(xis[i] < xis[i - 1])) throw InvalidArgument("--xis must be strictly decreasing");
    }
    run.parameters.update({{"t", o.t}, {"xis", xis}, {"spec", spec_json(spec)}});
    const auto w = WickModel::from(m);
    const auto rep = convergence_report(w, spec, o.t, xis);
    json j;
    j["spec"] = spec_json(spec);
    j["t"] = o.t;
    j["limit"] = cjson(rep.limit);
    json rows = json::array();
    for (const auto& r : rep.rows) {
        rows.push_back({{"xi", r.xi}, {"exact", cjson(r.exact)}, {"abs_error", r.abs_error}, {"rel_error", r.rel_error}});
    }
    j["rows"] = rows;
    j["decay_per_decade"] = rep.decay_per_decade;
    j["strictly_decreasing"] = rep.strictly_decreasing;
    j["final_rel_error"] = rep.final_rel_error;
    j["pass"] = rep.pass;
    if (!o.out.empty()) run.output(o.out, j.dump(2) + "\n");
    else std::cout << j.dump(2) << "\n";
    run.verdict("correlators.decreasing", rep.strictly_decreasing, rep.rows.empty() ? 0.0 : rep.rows.front().rel_error, 0.0);
    run.verdict("correlators.final_rel_error", rep.final_rel_error <= convergence_tolerance, rep.final_rel_error,
                convergence_tolerance);
    return run.all_pass() ? exit_ok : exit_fail;
}

// Fixed fixture vectors: the battery is deterministic and needs no seed.
json fock_battery(Run& run) {
    json j;
    const TruncatedFock fs(2, 8);
    cvec f(2), g(2);
    f << cplx(0.3, 0.1), cplx(-0.2, 0.25);
    g << cplx(0.15, -0.2), cplx(0.1, 0.3);
    cmat x(2, 2), y(2, 2);
    x << 0.7, cplx(0.2, -0.4), cplx(0.2, 0.4), -0.3;
    y << cplx(0.1, 0.5), 0.6, cplx(-0.3, 0.2), 0.9;

    auto record = [&](const std::string& name, double value, double thr) {
        j[name] = {{"value", value}, {"threshold", thr}, {"pass", value <= thr}};
        run.verdict("fock." + name, value <= thr, value, thr);
    };
    record("ccr_defect", fs.ccr_defect(), 1e-12);
    record("lie_morphism_defect", fs.lie_morphism_defect(x, y), 1e-12);
    record("coherent_overlap_defect", coherent_overlap_defect(fs, f, g), 1e-10);
    record("number_characterization", number_characterization_check(fs, x, f, g), 1e-8);
    record("second_quantization", second_quantization_check(fs, x, f, 0.7), 1e-8);
    const std::vector<double> energies{2.0, 3.0};
    record("quasifree_two_point", quasifree_two_point_check(fs, energies, 1.0, 0.2, f, g).defect, 1e-8);
    const auto ito = ito_scaling_check(fs, x, y, f * 3.0, {1e-1, 1e-2, 1e-3});
    record("ito_leading_slope_error", std::abs(ito.leading_slope - 1.0), 0.02);
    record("ito_cross_slope_error", std::abs(ito.cross_slope - 2.0), 0.05);
    j["truncation"] = {{"modes", fs.modes()},
                       {"n_max", fs.n_max()},
                       {"coherent_tail_bound", fs.coherent_tail(std::max(f.squaredNorm(), (3.0 * f).squaredNorm() * 0.1))},
                       {"gibbs_tail_bound", fs.gibbs_tail(0.2 * std::exp(-2.0))}};
    return j;
}

struct FockOpts {
    std::string out;
};

int run_fock(Run& run, const FockOpts& o) {
    const json j = fock_battery(run);
    if (!o.out.empty()) run.output(o.out, j.dump(2) + "\n");
    return run.all_pass() ? exit_ok : exit_fail;
}

struct VerifyOpts {
    std::string model{"demo:two_level"};
    std::string out;
    std::uint64_t seed{20240601};
    std::size_t n_traj{10000};
    unsigned threads{1};
};

int run_verify_all(Run& run, const VerifyOpts& o) {
    const Model m = load(run, o.model);
    run.seed = o.seed;
    run.parameters.update({{"n_traj", o.n_traj}});
    const auto d = static_cast<Eigen::Index>(m.system.dim());
    json report;

    const auto sd = build_smatrix(m);
    run.verdict("smatrix.unitarity", sd.max_unit_defect() <= 1e-10, sd.max_unit_defect(), 1e-10);

    double theta = 0.0;
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = 0; b < d; ++b) {
            for (const auto& tb : theta_map(sd, matrix_unit(d, a, b))) theta = std::max(theta, tb.defect);
        }
    }
    run.verdict("theta.dual_route", theta <= 1e-10, theta, 1e-10);

    const auto gen = heisenberg_generator(sd, m.gas);
    const auto kernel = build_kernel(sd, m.gas);
    run.verdict("collision.generator_identity", kernel.identity_defect <= 1e-8, kernel.identity_defect, 1e-8);

    const auto cp = cp_check(gen);
    run.verdict("generator.choi_min_eigenvalue", cp.pass, std::max(0.0, -cp.choi_min_eigenvalue), 1e-10);
    run.verdict("generator.unitality", cp.trace_defect <= 1e-12, cp.trace_defect, 1e-12);

    cmat rho0 = cmat::Zero(d, d);
    rho0(0, 0) = 1.0;
    const double t = kernel.rate > 0.0 ? std::min(3.0 / kernel.rate, 50.0) : 1.0;
    const auto ps = poisson_series(kernel, rho0, t);
    const double pdef = max_abs(ps.rho - evolve_density(gen, rho0, t, 1e-3));
    run.verdict("collision.poisson_series", pdef <= 1e-8, pdef, 1e-8);

    const double dual = duality_check(gen, rho0, matrix_unit(d, 0, d - 1) + matrix_unit(d, d - 1, 0), t);
    run.verdict("generator.duality", dual <= 1e-10, dual, 1e-10);

    std::vector<double> times;
    for (int k = 1; k <= 10; ++k) times.push_back(t * k / 10.0);
    const auto ens = ensemble_average(kernel, rho0, times, o.n_traj, o.seed, o.threads);
    const auto exact = evolve_density(gen, rho0, times, 1e-3);
    std::size_t within = 0, total = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        for (Eigen::Index i = 0; i < d; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) {
                within += std::abs(ens.mean[k](i, j).real() - exact[k](i, j).real()) <= 4.0 * ens.stderr_re[k](i, j) + 1e-12;
                within += std::abs(ens.mean[k](i, j).imag() - exact[k](i, j).imag()) <= 4.0 * ens.stderr_im[k](i, j) + 1e-12;
                total += 2;
            }
        }
    }
    run.verdict("collision.monte_carlo_outside_4se", within == total, static_cast<double>(total - within), 0.0);

    const auto w = WickModel::from(m);
    const std::vector<double> xis{1e-1, 1e-2, 1e-3};
    const std::vector<std::vector<std::pair<int, int>>> specs{{{0, 1}}, {{0, 1}, {1, 0}}, {{1, 0}, {0, 1}, {1, 1}}};
    for (const auto& s : specs) {
        const auto rep = convergence_report(w, CorrelatorSpec::time_ordered(s), 1.0, xis);
        const std::string name = "wick.limit_n" + std::to_string(s.size());
        const double lim_scale = std::abs(rep.limit);
        if (lim_scale == 0.0) {
            run.verdict(name, rep.rows.back().abs_error == 0.0, rep.rows.back().abs_error, 0.0);
            continue;
        }
        run.verdict(name, rep.pass, rep.final_rel_error, convergence_tolerance);
    }
    std::size_t bin = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < w.bins(); ++j) {
        const double a = std::abs(w.pair(j, 1, 0, w.l[j]));
        if (a > best) best = a, bin = j;
    }
    const auto fr = factorization_check(w, 0, 1, bin, CorrelatorSpec::time_ordered({{0, 1}}), 1.0, xis);
    run.verdict("wick.factorization", fr.pass, fr.final_defect, convergence_tolerance);

    report["fock"] = fock_battery(run);
    report["verdicts"] = run.verdicts;
    if (!o.out.empty()) run.output(o.out, report.dump(2) + "\n");
    return run.all_pass() ? exit_ok : exit_fail;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ldl: low-density-limit test particle in a dilute Bose gas"};
    app.footer(schema_help);
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand
    Run run;
    std::string manifest;
    unsigned threads = 1;
    app.add_flag("-v,--verbose", run.verbosity, "Verbose diagnostics on stderr");
    app.add_option("--manifest", manifest, "Run manifest path (default: <out>.manifest.json)");
    app.add_option("--threads", threads, "Upper bound on worker threads")->check(CLI::Range(1u, 256u));

    CheckOpts check;
    auto* c_check = app.add_subcommand("check", "Validate a model file and summarize it");
    c_check->add_option("--model", check.model, "Model file or demo:<name>")->required();
    c_check->add_option("--out", check.out, "JSON summary path");
    c_check->add_option("--write-normalized", check.write_normalized, "Write the parsed model back as JSON");

    SmatrixOpts sm;
    auto* c_sm = app.add_subcommand("smatrix", "Per-bin S-matrix unitarity and T conditioning");
    c_sm->add_option("--model", sm.model, "Model file or demo:<name>")->required();
    c_sm->add_option("--out", sm.out, "CSV path (stdout if omitted)");
    c_sm->add_option("--blocks-json", sm.blocks_json, "Write full S blocks as JSON");
    c_sm->add_option("--tol", sm.tol, "Unitarity tolerance")->check(CLI::PositiveNumber);

    EvolveOpts ev;
    auto* c_ev = app.add_subcommand("evolve", "Integrate the reduced master equation");
    c_ev->add_option("--model", ev.model, "Model file or demo:<name>")->required();
    c_ev->add_option("--rho0", ev.rho0, "Initial density matrix JSON {\"rho\": ...} (default |0><0|)");
    c_ev->add_option("--t", ev.t, "Final time");
    c_ev->add_option("--dt", ev.dt, "Output step");
    c_ev->add_option("--out", ev.out, "CSV path (stdout if omitted)");
    c_ev->add_flag("--schroedinger-picture", ev.schroedinger, "Add the free e^{-iH_S t} rotation");

    TrajOpts tr;
    auto* c_tr = app.add_subcommand("trajectories", "Poisson collision-model trajectories");
    c_tr->add_option("--model", tr.model, "Model file or demo:<name>")->required();
    c_tr->add_option("--rho0", tr.rho0, "Initial density matrix JSON (default |0><0|)");
    c_tr->add_option("--t-end", tr.t_end, "Final time");
    c_tr->add_option("--n-traj", tr.n_traj, "Number of trajectories");
    c_tr->add_option("--n-out", tr.n_out, "Number of output times on (0, t_end]");
    c_tr->add_option("--seed", tr.seed, "Master seed")->required();
    c_tr->add_option("--out", tr.out, "CSV path");
    c_tr->add_option("--meta", tr.meta, "JSON metadata path (default <out>.json)");
    c_tr->add_flag("--schroedinger-picture", tr.schroedinger, "Add the free e^{-iH_S t} rotation");

    CorrOpts co;
    auto* c_co = app.add_subcommand("correlators", "Finite-xi correlators against their xi -> 0 limit");
    c_co->add_option("--model", co.model, "Model file or demo:<name>")->required();
    c_co->add_option("--spec", co.spec, "Spec JSON {\"factors\": [{\"f\":0,\"g\":1,\"slot\":1}, ...]}");
    c_co->add_option("--channels", co.channels, "Time-ordered shorthand, e.g. 01,10,11");
    c_co->add_option("--xis", co.xis, "Comma-separated decreasing fugacities");
    c_co->add_option("--t", co.t, "Horizon t");
    c_co->add_option("--out", co.out, "JSON report path (stdout if omitted)");

    FockOpts fo;
    auto* c_fo = app.add_subcommand("fock-verify", "Truncated-Fock check battery");
    c_fo->add_option("--out", fo.out, "JSON report path");

    VerifyOpts va;
    auto* c_va = app.add_subcommand("verify-all", "End-to-end verification suite");
    c_va->add_option("--model", va.model, "Model file or demo:<name>");
    c_va->add_option("--out", va.out, "JSON report path");
    c_va->add_option("--seed", va.seed, "Master seed for the Monte Carlo stage");
    c_va->add_option("--n-traj", va.n_traj, "Trajectories in the Monte Carlo stage");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << "\n" << schema_help;
        return exit_input;
    }

    CLI::App* sub = app.get_subcommands().front();
    run.subcommand = sub->get_name();
    std::string out;
    if (sub == c_sm) out = sm.out;
    if (sub == c_ev) out = ev.out;
    if (sub == c_tr) out = tr.out.empty() ? "trajectories.csv" : tr.out;
    if (sub == c_co) out = co.out;
    if (sub == c_fo) out = fo.out;
    if (sub == c_va) out = va.out;
    if (sub == c_check) out = check.out;
    run.manifest_path = manifest.empty() ? default_manifest(out, run.subcommand) : manifest;
    tr.threads = threads;
    va.threads = threads;
    run.parameters["threads"] = threads;

    int code = exit_ok;
    try {
        if (sub == c_check) code = run_check(run, check);
        else if (sub == c_sm) code = run_smatrix(run, sm);
        else if (sub == c_ev) code = run_evolve(run, ev);
        else if (sub == c_tr) code = run_trajectories(run, tr);
        else if (sub == c_co) code = run_correlators(run, co);
        else if (sub == c_fo) code = run_fock(run, fo);
        else if (sub == c_va) code = run_verify_all(run, va);
    } catch (const SingularTMatrix& e) {
        std::cerr << "ldl: " << e.what() << "\n";
        code = exit_input;
    } catch (const io::ParseError& e) {
        std::cerr << "ldl: " << e.what() << "\n" << schema_help;
        code = exit_input;
    } catch (const Error& e) {
        std::cerr << "ldl: " << e.what() << "\n";
        code = exit_input;
    } catch (const std::exception& e) {
        std::cerr << "ldl: unexpected error: " << e.what() << "\n";
        code = exit_input;
    }
    write_manifest(run, code);
    if (code == exit_fail) std::printf("verdict: FAIL\n");
    else if (code == exit_ok && !run.verdicts.empty()) std::printf("verdict: PASS\n");
    return code;
}
