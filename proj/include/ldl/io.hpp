// io.hpp: JSON model files with line-level diagnostics, plus small file formats.
//
// Model schema (schema_version 1) is documented in docs/model_schema.md.

#pragma once

#include "ldl/demo_models.hpp"
#include "ldl/model.hpp"
#include "ldl/wick.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace ldl::io {

using json = nlohmann::json;

inline constexpr int schema_version = 1;

struct ParseError : InvalidArgument {
    int line{0};
    std::string pointer;
    ParseError(const std::string& source, int ln, const std::string& ptr, const std::string& msg)
        : InvalidArgument(source + ":" + std::to_string(ln) + ": " + (ptr.empty() ? "" : ptr + ": ") + msg),
          line(ln), pointer(ptr) {}
};

// ---- located parsing ----

namespace detail {

struct LineState {
    int newlines{0};
    bool has_last{false};
    char last{0};
};

// Counts newlines among consumed characters except the most recent one, which may
// be lexer lookahead past the end of a number.
class LineCountingIterator {
public:
    using iterator_category = std::input_iterator_tag;
    using value_type = char;
    using difference_type = std::ptrdiff_t;
    using pointer = const char*;
    using reference = const char&;

    LineCountingIterator(const char* p, LineState* st) : p_(p), st_(st) {}
    reference operator*() const { return *p_; }
    LineCountingIterator& operator++() {
        if (st_->has_last && st_->last == '\n') ++st_->newlines;
        st_->last = *p_;
        st_->has_last = true;
        ++p_;
        return *this;
    }
    LineCountingIterator operator++(int) {
        auto tmp = *this;
        ++*this;
        return tmp;
    }
    bool operator==(const LineCountingIterator& o) const { return p_ == o.p_; }
    bool operator!=(const LineCountingIterator& o) const { return p_ != o.p_; }

private:
    const char* p_;
    LineState* st_;
};

class LocatingSax {
public:
    LocatingSax(json& root, const LineState* st, std::map<std::string, int>& lines)
        : dom_(root, true), st_(st), lines_(lines) {}

    bool null() { return scalar([&] { return dom_.null(); }); }
    bool boolean(bool v) { return scalar([&] { return dom_.boolean(v); }); }
    bool number_integer(json::number_integer_t v) { return scalar([&] { return dom_.number_integer(v); }); }
    bool number_unsigned(json::number_unsigned_t v) { return scalar([&] { return dom_.number_unsigned(v); }); }
    bool number_float(json::number_float_t v, const json::string_t& s) {
        return scalar([&] { return dom_.number_float(v, s); });
    }
    bool string(json::string_t& v) { return scalar([&] { return dom_.string(v); }); }
    bool binary(json::binary_t& v) { return scalar([&] { return dom_.binary(v); }); }

    bool start_object(std::size_t n) {
        record();
        stack_.push_back({true, "", 0});
        return dom_.start_object(n);
    }
    bool key(json::string_t& k) {
        stack_.back().key = k;
        return dom_.key(k);
    }
    bool end_object() {
        stack_.pop_back();
        advance();
        return dom_.end_object();
    }
    bool start_array(std::size_t n) {
        record();
        stack_.push_back({false, "", 0});
        return dom_.start_array(n);
    }
    bool end_array() {
        stack_.pop_back();
        advance();
        return dom_.end_array();
    }
    // The DOM parser would rethrow a sliced copy; record the error and stop instead.
    bool parse_error(std::size_t pos, const std::string&, const nlohmann::detail::exception& ex) {
        error_byte = pos;
        error_message = ex.what();
        return false;
    }

    std::size_t error_byte{0};
    std::string error_message;

private:
    struct Frame {
        bool object;
        std::string key;
        std::size_t index;
    };

    template <class F>
    bool scalar(F&& f) {
        record();
        advance();
        return f();
    }

    std::string pointer() const {
        std::string p;
        for (const auto& fr : stack_) {
            p += "/";
            if (fr.object) {
                for (char c : fr.key) {
                    if (c == '~') p += "~0";
                    else if (c == '/') p += "~1";
                    else p += c;
                }
            } else {
                p += std::to_string(fr.index);
            }
        }
        return p;
    }

    void record() { lines_.emplace(pointer(), st_->newlines + 1); }
    void advance() {
        if (!stack_.empty() && !stack_.back().object) ++stack_.back().index;
    }

    nlohmann::detail::json_sax_dom_parser<json> dom_;
    const LineState* st_;
    std::map<std::string, int>& lines_;
    std::vector<Frame> stack_;
};

} // namespace detail

struct LocatedJson {
    std::string source;
    json doc;
    std::map<std::string, int> lines;  // JSON pointer → line of the value

    // Line of the pointer or of its nearest recorded ancestor.
    int line_of(std::string ptr) const {
        for (;;) {
            auto it = lines.find(ptr);
            if (it != lines.end()) return it->second;
            if (ptr.empty()) return 1;
            ptr = ptr.substr(0, ptr.rfind('/'));
        }
    }

    [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
        throw ParseError(source, line_of(ptr), ptr, msg);
    }
};

inline LocatedJson parse_located(const std::string& text, const std::string& source) {
    LocatedJson out;
    out.source = source;
    detail::LineState st;
    detail::LocatingSax sax(out.doc, &st, out.lines);
    if (!json::sax_parse(detail::LineCountingIterator(text.data(), &st),
                         detail::LineCountingIterator(text.data() + text.size(), &st), &sax)) {
        int line = 1;
        const auto upto = std::min<std::size_t>(sax.error_byte > 0 ? sax.error_byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < upto; ++i) line += text[i] == '\n' ? 1 : 0;
        throw ParseError(source, line, "", "syntax error: " + sax.error_message);
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write '" + path + "'");
    out << content;
}

// 64-bit FNV-1a, used for input hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- element readers ----

class Reader {
public:
    explicit Reader(const LocatedJson& lj) : lj_(lj) {}

    const json& at(const std::string& ptr) const {
        const json::json_pointer jp(ptr);
        if (!lj_.doc.contains(jp)) lj_.fail(ptr, "missing required field");
        return lj_.doc.at(jp);
    }
    bool has(const std::string& ptr) const { return lj_.doc.contains(json::json_pointer(ptr)); }

    double number(const std::string& ptr) const {
        const json& v = at(ptr);
        if (!v.is_number()) lj_.fail(ptr, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) lj_.fail(ptr, "expected a finite number");
        return d;
    }

    long integer(const std::string& ptr) const {
        const json& v = at(ptr);
        if (!v.is_number_integer()) lj_.fail(ptr, "expected an integer");
        return v.get<long>();
    }

    // A complex entry is [re, im] or a plain real number.
    cplx complex(const std::string& ptr) const {
        const json& v = at(ptr);
        if (v.is_number()) return {number(ptr), 0.0};
        if (!v.is_array() || v.size() != 2) lj_.fail(ptr, "expected a complex number [re, im]");
        return {number(ptr + "/0"), number(ptr + "/1")};
    }

    std::size_t array_size(const std::string& ptr) const {
        const json& v = at(ptr);
        if (!v.is_array()) lj_.fail(ptr, "expected an array");
        return v.size();
    }

    cvec complex_vector(const std::string& ptr, std::size_t expected) const {
        const auto n = array_size(ptr);
        if (n != expected) {
            lj_.fail(ptr, "expected " + std::to_string(expected) + " entries, got " + std::to_string(n));
        }
        cvec out(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i)) = complex(ptr + "/" + std::to_string(i));
        return out;
    }

    // Row-major: a list of rows, each a list of complex entries.
    cmat complex_matrix(const std::string& ptr, std::size_t rows, std::size_t cols) const {
        const auto n = array_size(ptr);
        if (n != rows) lj_.fail(ptr, "expected " + std::to_string(rows) + " rows, got " + std::to_string(n));
        cmat out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < rows; ++r) {
            out.row(static_cast<Eigen::Index>(r)) = complex_vector(ptr + "/" + std::to_string(r), cols).transpose();
        }
        return out;
    }

    [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const { lj_.fail(ptr, msg); }

private:
    const LocatedJson& lj_;
};

// ---- model ----

inline Model model_from_json(const LocatedJson& lj) {
    const Reader rd(lj);
    if (!lj.doc.is_object()) rd.fail("", "model file must be a JSON object");
    if (rd.integer("/schema_version") != schema_version) {
        rd.fail("/schema_version", "unsupported schema_version (expected " + std::to_string(schema_version) + ")");
    }
    Model m;
    m.name = rd.has("/name") && rd.at("/name").is_string() ? rd.at("/name").get<std::string>() : "unnamed";

    const auto ds = rd.array_size("/system/eigenvalues");
    if (ds == 0) rd.fail("/system/eigenvalues", "system dimension must be >= 1");
    for (std::size_t i = 0; i < ds; ++i) m.system.eigenvalues.push_back(rd.number("/system/eigenvalues/" + std::to_string(i)));
    if (rd.has("/system/labels")) {
        if (rd.array_size("/system/labels") != ds) rd.fail("/system/labels", "expected one label per eigenvalue");
        for (std::size_t i = 0; i < ds; ++i) {
            m.system.labels.push_back(static_cast<int>(rd.integer("/system/labels/" + std::to_string(i))));
        }
    } else {
        for (std::size_t i = 0; i < ds; ++i) m.system.labels.push_back(static_cast<int>(i));
    }
    m.system.coupling = rd.complex_matrix("/system/coupling", ds, ds);
    try {
        m.system.validate();
    } catch (const Error& e) {
        rd.fail("/system", e.what());
    }

    const auto nb = rd.array_size("/grid/bins");
    if (nb == 0) rd.fail("/grid/bins", "at least one bin required");
    for (std::size_t j = 0; j < nb; ++j) {
        const std::string p = "/grid/bins/" + std::to_string(j);
        EnergyBin b;
        b.center = rd.number(p + "/E");
        b.width = rd.number(p + "/width");
        if (!(b.width > 0.0)) rd.fail(p + "/width", "width must be > 0");
        const long mult = rd.has(p + "/multiplicity") ? rd.integer(p + "/multiplicity") : 1;
        if (mult < 1) rd.fail(p + "/multiplicity", "multiplicity must be >= 1");
        b.multiplicity = static_cast<int>(mult);
        if (j > 0 && !(b.center > m.grid.bins.back().center)) rd.fail(p + "/E", "bin centers must be strictly increasing");
        m.grid.bins.push_back(b);
    }
    try {
        m.grid.validate();
    } catch (const Error& e) {
        rd.fail("/grid/bins", e.what());
    }

    if (rd.array_size("/form_factors") != nb) {
        rd.fail("/form_factors", "expected " + std::to_string(nb) + " entries (one per bin)");
    }
    for (std::size_t j = 0; j < nb; ++j) {
        const std::string p = "/form_factors/" + std::to_string(j);
        const auto dj = static_cast<std::size_t>(m.grid[j].multiplicity);
        m.form_factors.amplitudes.push_back({rd.complex_vector(p + "/v0", dj), rd.complex_vector(p + "/v1", dj)});
    }

    const double xi = rd.number("/gas/xi");
    if (!(xi >= 0.0 && xi < 1.0)) rd.fail("/gas/xi", "xi must lie in [0, 1)");
    if (rd.has("/gas/beta")) {
        if (rd.has("/gas/L")) rd.fail("/gas", "give either beta or L, not both");
        const double beta = rd.number("/gas/beta");
        if (beta < 0.0) rd.fail("/gas/beta", "beta must be >= 0");
        m.gas = GasState::gibbs(m.grid, beta, xi);
    } else {
        if (rd.array_size("/gas/L") != nb) rd.fail("/gas/L", "expected one entry per bin");
        m.gas.xi = xi;
        for (std::size_t j = 0; j < nb; ++j) {
            const std::string p = "/gas/L/" + std::to_string(j);
            const auto dj = static_cast<std::size_t>(m.grid[j].multiplicity);
            if (rd.at(p).is_number()) {
                m.gas.weights.push_back(rd.number(p) * identity(static_cast<Eigen::Index>(dj)));
            } else {
                m.gas.weights.push_back(rd.complex_matrix(p, dj, dj));
            }
        }
    }
    try {
        m.gas.validate(m.grid);
    } catch (const Error& e) {
        rd.fail("/gas", e.what());
    }

    if (rd.has("/wick/broadening")) {
        m.broadening = rd.number("/wick/broadening");
        if (!(m.broadening > 0.0)) rd.fail("/wick/broadening", "broadening must be > 0");
    }
    return m;
}

inline json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline json vector_json(const cvec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(complex_json(v(i)));
    return a;
}

inline json matrix_json(const cmat& m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
    return a;
}

inline json model_to_json(const Model& m) {
    json j;
    j["schema_version"] = schema_version;
    j["name"] = m.name;
    j["system"]["eigenvalues"] = m.system.eigenvalues;
    j["system"]["labels"] = m.system.labels;
    j["system"]["coupling"] = matrix_json(m.system.coupling);
    json bins = json::array();
    for (const auto& b : m.grid.bins) bins.push_back({{"E", b.center}, {"width", b.width}, {"multiplicity", b.multiplicity}});
    j["grid"]["bins"] = bins;
    json ff = json::array();
    for (const auto& a : m.form_factors.amplitudes) ff.push_back({{"v0", vector_json(a[0])}, {"v1", vector_json(a[1])}});
    j["form_factors"] = ff;
    j["gas"]["xi"] = m.gas.xi;
    if (m.gas.is_gibbs()) {
        j["gas"]["beta"] = m.gas.beta;
    } else {
        json l = json::array();
        for (const auto& w : m.gas.weights) l.push_back(matrix_json(w));
        j["gas"]["L"] = l;
    }
    j["wick"]["broadening"] = m.broadening;
    return j;
}

struct LoadedModel {
    Model model;
    std::string text;  // bytes that were hashed
};

// `demo:<name>` selects a bundled model; anything else is a file path.
inline LoadedModel load_model(const std::string& spec) {
    LoadedModel out;
    if (spec.rfind("demo:", 0) == 0) {
        out.model = demo::by_name(spec.substr(5));
        out.text = model_to_json(out.model).dump(2);
        return out;
    }
    out.text = read_file(spec);
    out.model = model_from_json(parse_located(out.text, spec));
    return out;
}

// ---- states and specs ----

inline cmat density_from_json(const LocatedJson& lj, Eigen::Index d) {
    const Reader rd(lj);
    const auto n = static_cast<std::size_t>(d);
    return rd.complex_matrix("/rho", n, n);
}

inline cmat load_density(const std::string& path, Eigen::Index d) {
    return density_from_json(parse_located(read_file(path), path), d);
}

inline CorrelatorSpec spec_from_json(const LocatedJson& lj) {
    const Reader rd(lj);
    CorrelatorSpec s;
    const auto n = rd.array_size("/factors");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string p = "/factors/" + std::to_string(i);
        Factor f;
        f.f = static_cast<int>(rd.integer(p + "/f"));
        f.g = static_cast<int>(rd.integer(p + "/g"));
        f.slot = rd.has(p + "/slot") ? static_cast<int>(rd.integer(p + "/slot")) : static_cast<int>(i) + 1;
        if (f.f < 0 || f.f > 1) rd.fail(p + "/f", "channel must be 0 or 1");
        if (f.g < 0 || f.g > 1) rd.fail(p + "/g", "channel must be 0 or 1");
        s.factors.push_back(f);
    }
    try {
        s.validate(static_cast<int>(std::max<std::size_t>(n, 1)));
    } catch (const Error& e) {
        rd.fail("/factors", e.what());
    }
    return s;
}

inline CorrelatorSpec load_spec(const std::string& path) { return spec_from_json(parse_located(read_file(path), path)); }

} // namespace ldl::io
