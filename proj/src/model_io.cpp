#include "shs/model_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace shs {

namespace {

std::string fmt_num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    return buf;
}

std::string vec_text(const Vec& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += fmt_num(v[i]);
    }
    return s + "]";
}

std::string mat_text(const std::vector<Vec>& m) {
    std::string s = "[";
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i) s += ",";
        s += vec_text(m[i]);
    }
    return s + "]";
}

std::string evec_text(const std::vector<int>& e) {
    Vec v(e.begin(), e.end());
    return vec_text(v);
}

void require_matrix(const std::vector<Vec>& m, int rows, int cols, const std::string& what) {
    if (static_cast<int>(m.size()) != rows) throw ModelError(what + ": expected " + std::to_string(rows) + " rows");
    for (const Vec& r : m)
        if (static_cast<int>(r.size()) != cols)
            throw ModelError(what + ": expected " + std::to_string(cols) + " columns");
}

}  // namespace

// ---------------------------------------------------------------------------
// builtin catalog
// ---------------------------------------------------------------------------

DriftFn make_drift_zero(int /*dim*/) {
    DriftFn f;
    f.zero = true;
    f.text = "zero";
    f.eval = [](std::span<const double>, std::span<double> out) {
        for (double& v : out) v = 0.0;
    };
    return f;
}

DriftFn make_drift_const(const Vec& v, std::string text) {
    DriftFn f;
    f.zero = true;
    for (double x : v) f.zero = f.zero && x == 0.0;
    f.text = text.empty() ? "const(" + vec_text(v) + ")" : std::move(text);
    f.eval = [v](std::span<const double>, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i];
    };
    return f;
}

DriftFn make_drift_linear(const std::vector<Vec>& a, std::string text) {
    int n = static_cast<int>(a.size());
    require_matrix(a, n, n, "linear drift");
    DriftFn f;
    f.zero = true;
    for (const Vec& row : a)
        for (double x : row) f.zero = f.zero && x == 0.0;
    f.text = text.empty() ? "linear(a=" + mat_text(a) + ")" : std::move(text);
    f.eval = [a](std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j) s += a[i][j] * x[j];
            out[i] = s;
        }
    };
    return f;
}

DriftFn make_drift_affine(const std::vector<Vec>& a, const Vec& b, std::string text) {
    int n = static_cast<int>(b.size());
    require_matrix(a, n, n, "affine drift");
    DriftFn f;
    f.zero = true;
    for (const Vec& row : a)
        for (double x : row) f.zero = f.zero && x == 0.0;
    for (double x : b) f.zero = f.zero && x == 0.0;
    f.text = text.empty() ? "affine(a=" + mat_text(a) + ",b=" + vec_text(b) + ")" : std::move(text);
    f.eval = [a, b](std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            double s = b[i];
            for (std::size_t j = 0; j < x.size(); ++j) s += a[i][j] * x[j];
            out[i] = s;
        }
    };
    return f;
}

DiffusionFn make_diffusion_zero(int /*dim*/, int /*brownian_dim*/) {
    DiffusionFn f;
    f.zero = true;
    f.text = "zero";
    f.eval = [](std::span<const double>, std::span<double> out) {
        for (double& v : out) v = 0.0;
    };
    return f;
}

DiffusionFn make_diffusion_const(const std::vector<Vec>& w, std::string text) {
    DiffusionFn f;
    f.zero = true;
    for (const Vec& row : w)
        for (double x : row) f.zero = f.zero && x == 0.0;
    f.text = text.empty() ? "const(w=" + mat_text(w) + ")" : std::move(text);
    std::size_t cols = w.empty() ? 0 : w.front().size();
    f.eval = [w, cols](std::span<const double>, std::span<double> out) {
        std::size_t k = 0;
        for (const Vec& row : w)
            for (std::size_t j = 0; j < cols; ++j) out[k++] = row[j];
    };
    return f;
}

GuardFn make_guard_halfspace(const Vec& normal, double offset, std::string text) {
    double norm = 0.0;
    for (double x : normal) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw ModelError("halfspace guard with zero normal");
    GuardFn g;
    g.text = text.empty() ? "halfspace(normal=" + vec_text(normal) + ",offset=" + fmt_num(offset) + ")"
                          : std::move(text);
    g.signed_distance = [normal, offset, norm](std::span<const double> x) {
        double dot = 0.0;
        for (std::size_t i = 0; i < normal.size(); ++i) dot += normal[i] * x[i];
        return (dot - offset) / norm;
    };
    return g;
}

GuardFn make_guard_box(const Vec& lo, const Vec& hi, std::string text) {
    if (lo.size() != hi.size()) throw ModelError("box guard bound dimensions differ");
    GuardFn g;
    g.text = text.empty() ? "box(lo=" + vec_text(lo) + ",hi=" + vec_text(hi) + ")" : std::move(text);
    g.signed_distance = [lo, hi](std::span<const double> x) {
        double sd = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < lo.size(); ++i) {
            if (std::isfinite(lo[i])) sd = std::max(sd, lo[i] - x[i]);
            if (std::isfinite(hi[i])) sd = std::max(sd, x[i] - hi[i]);
        }
        return sd;
    };
    return g;
}

RateFn make_rate_const(double value, const std::string& symbol, std::optional<Rational> exact,
                       std::string text) {
    if (value < 0.0) throw ModelError("constant delay rate must be >= 0");
    RateFn r;
    r.constant = true;
    r.value = value;
    r.exact = exact;
    if (!symbol.empty()) {
        r.symbol = LinForm::term(symbol);
        r.text = text.empty() ? "const(" + symbol + ")" : std::move(text);
    } else {
        r.symbol = exact ? LinForm(*exact) : LinForm();
        r.text = text.empty() ? "const(" + fmt_num(value) + ")" : std::move(text);
    }
    r.eval = [value](std::span<const double>) { return value; };
    return r;
}

FiringMeasure make_firing_dirac(int n_outputs, std::vector<int> e) {
    FiringMeasure f;
    if (e.empty()) e.assign(static_cast<std::size_t>(n_outputs), 1);
    f.text = "dirac";
    bool all_ones = true;
    for (int v : e) all_ones = all_ones && v == 1;
    if (!all_ones) f.text = "dirac(e=" + evec_text(e) + ")";
    f.support = {std::move(e)};
    f.probs = {Rational(1)};
    f.colour_preserving = true;
    return f;
}

FiringMeasure make_firing_choice(std::vector<std::vector<int>> support, std::vector<Rational> probs,
                                 std::string text) {
    if (support.size() != probs.size() || support.empty())
        throw ModelError("choice firing needs one probability per e-vector");
    FiringMeasure f;
    if (text.empty()) {
        Vec p;
        for (const Rational& r : probs) p.push_back(r.value());
        std::vector<Vec> e;
        for (const auto& row : support) e.emplace_back(row.begin(), row.end());
        text = "choice(p=" + vec_text(p) + ",e=" + mat_text(e) + ")";
    }
    f.text = std::move(text);
    f.support = std::move(support);
    f.probs = std::move(probs);
    f.colour_preserving = true;
    return f;
}

FiringMeasure make_firing_shift(int n_outputs, const Vec& delta, std::string text) {
    FiringMeasure f = make_firing_dirac(n_outputs);
    f.text = text.empty() ? "shift(delta=" + vec_text(delta) + ")" : std::move(text);
    f.colour_preserving = false;
    f.produce_colour = [delta](int, std::span<const double> c, SplitStream&) {
        Vec out(c.begin(), c.end());
        for (std::size_t i = 0; i < out.size() && i < delta.size(); ++i) out[i] += delta[i];
        return out;
    };
    return f;
}

ColourSampler make_colour_point(const Vec& v, std::string text) {
    ColourSampler c;
    c.text = text.empty() ? "point(" + vec_text(v) + ")" : std::move(text);
    c.sample = [v](SplitStream&) { return v; };
    return c;
}

// ---------------------------------------------------------------------------
// parser
// ---------------------------------------------------------------------------

namespace {

struct ValueAst {
    enum class Kind { number, vector, matrix, ref };
    Kind kind = Kind::number;
    double num = 0.0;
    std::optional<Rational> exact;
    Vec vec;
    std::vector<std::optional<Rational>> vec_exact;
    std::vector<Vec> mat;
    std::string ref;
    int line = 0, col = 0;

    std::string text() const {
        switch (kind) {
            case Kind::number: return fmt_num(num);
            case Kind::vector: return vec_text(vec);
            case Kind::matrix: return mat_text(mat);
            case Kind::ref: return ref;
        }
        return "";
    }
};

struct CallAst {
    std::string name;
    struct Arg {
        std::string key;  // empty for positional
        ValueAst value;
    };
    std::vector<Arg> args;
    int line = 0, col = 0;
};

class LineCursor {
public:
    LineCursor(const std::string& s, int line) : s_(s), line_(line) {}

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, static_cast<int>(pos_) + 1); }

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    bool at_end() {
        skip_ws();
        return pos_ >= s_.size();
    }
    int col() const { return static_cast<int>(pos_) + 1; }
    int line() const { return line_; }

    bool peek_punct(char c) {
        skip_ws();
        return pos_ < s_.size() && s_[pos_] == c;
    }
    bool eat_punct(char c) {
        if (!peek_punct(c)) return false;
        ++pos_;
        return true;
    }
    void expect_punct(char c) {
        if (!eat_punct(c)) fail(std::string("expected '") + c + "'");
    }
    bool eat_arrow() {
        skip_ws();
        if (pos_ + 1 < s_.size() && s_[pos_] == '-' && s_[pos_ + 1] == '>') {
            pos_ += 2;
            return true;
        }
        return false;
    }
    bool peek_ident() {
        skip_ws();
        return pos_ < s_.size() && (std::isalpha(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_');
    }
    std::string ident() {
        skip_ws();
        if (!peek_ident()) fail("expected identifier");
        std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-')) {
            // '-' only inside names like airtraffic-noguard, not before '>'
            if (s_[pos_] == '-' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '>') break;
            ++pos_;
        }
        return s_.substr(start, pos_ - start);
    }
    bool peek_number() {
        skip_ws();
        if (pos_ >= s_.size()) return false;
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return true;
        if ((c == '-' || c == '+') && pos_ + 1 < s_.size()) {
            char d = s_[pos_ + 1];
            return std::isdigit(static_cast<unsigned char>(d)) || d == '.' || d == 'i';
        }
        return c == 'i';  // inf
    }
    std::pair<double, std::optional<Rational>> number() {
        skip_ws();
        std::size_t start = pos_;
        bool neg = false;
        if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) {
            neg = s_[pos_] == '-';
            ++pos_;
        }
        if (pos_ + 3 <= s_.size() && s_.compare(pos_, 3, "inf") == 0) {
            pos_ += 3;
            double v = std::numeric_limits<double>::infinity();
            return {neg ? -v : v, std::nullopt};
        }
        bool exact_ok = true;
        while (pos_ < s_.size() &&
               (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' || s_[pos_] == 'e' ||
                s_[pos_] == 'E' || ((s_[pos_] == '-' || s_[pos_] == '+') && (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E')))) {
            if (s_[pos_] == 'e' || s_[pos_] == 'E') exact_ok = false;
            ++pos_;
        }
        if (pos_ == start) fail("expected number");
        std::string lit = s_.substr(start, pos_ - start);
        char* end = nullptr;
        double v = std::strtod(lit.c_str(), &end);
        if (end != lit.c_str() + lit.size()) fail("malformed number '" + lit + "'");
        std::optional<Rational> exact;
        if (exact_ok) {
            try {
                exact = Rational::from_decimal(lit);
            } catch (const std::exception&) {
                exact = std::nullopt;
            }
        }
        return {v, exact};
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;
    int line_;
};

ValueAst parse_value(LineCursor& cur) {
    ValueAst v;
    v.line = cur.line();
    v.col = cur.col();
    if (cur.peek_punct('[')) {
        cur.expect_punct('[');
        if (cur.peek_punct('[')) {
            v.kind = ValueAst::Kind::matrix;
            while (true) {
                cur.expect_punct('[');
                Vec row;
                while (!cur.peek_punct(']')) {
                    auto [num, exact] = cur.number();
                    row.push_back(num);
                    if (!cur.eat_punct(',')) break;
                }
                cur.expect_punct(']');
                v.mat.push_back(std::move(row));
                if (!cur.eat_punct(',')) break;
            }
            cur.expect_punct(']');
        } else {
            v.kind = ValueAst::Kind::vector;
            while (!cur.peek_punct(']')) {
                auto [num, exact] = cur.number();
                v.vec.push_back(num);
                v.vec_exact.push_back(exact);
                if (!cur.eat_punct(',')) break;
            }
            cur.expect_punct(']');
        }
        return v;
    }
    if (cur.peek_number()) {
        v.kind = ValueAst::Kind::number;
        auto [num, exact] = cur.number();
        v.num = num;
        v.exact = exact;
        return v;
    }
    v.kind = ValueAst::Kind::ref;
    v.ref = cur.ident();
    return v;
}

CallAst parse_call(LineCursor& cur) {
    CallAst call;
    call.line = cur.line();
    call.col = cur.col();
    call.name = cur.ident();
    if (cur.eat_punct('(')) {
        if (!cur.peek_punct(')')) {
            while (true) {
                CallAst::Arg arg;
                // named arg: IDENT '=' value; a bare IDENT not followed by '='
                // is a parameter reference
                if (cur.peek_ident()) {
                    std::string id = cur.ident();
                    if (cur.eat_punct('=')) {
                        arg.key = id;
                        arg.value = parse_value(cur);
                    } else {
                        arg.value.kind = ValueAst::Kind::ref;
                        arg.value.ref = id;
                        arg.value.line = cur.line();
                    }
                } else {
                    arg.value = parse_value(cur);
                }
                call.args.push_back(std::move(arg));
                if (!cur.eat_punct(',')) break;
            }
        }
        cur.expect_punct(')');
    }
    return call;
}

// Resolution of call ASTs against the parameter table.

struct Resolver {
    const std::map<std::string, ParamValue>& params;

    [[noreturn]] void fail(const CallAst& call, const std::string& msg) const {
        throw ParseError(call.name + ": " + msg, call.line, call.col);
    }

    const ValueAst* find(const CallAst& call, const std::string& key, int position) const {
        for (const auto& a : call.args)
            if (!a.key.empty() && a.key == key) return &a.value;
        int pos = 0;
        for (const auto& a : call.args) {
            if (!a.key.empty()) continue;
            if (pos == position) return &a.value;
            ++pos;
        }
        return nullptr;
    }

    const ParamValue& look_up(const ValueAst& v) const {
        auto it = params.find(v.ref);
        if (it == params.end())
            throw ParseError("unknown parameter '" + v.ref + "'", v.line, v.col);
        return it->second;
    }

    double scalar(const CallAst& call, const std::string& key, int position,
                  std::optional<Rational>* exact = nullptr, std::string* ref = nullptr) const {
        const ValueAst* v = find(call, key, position);
        if (!v) fail(call, "missing argument '" + key + "'");
        if (v->kind == ValueAst::Kind::number) {
            if (exact) *exact = v->exact;
            return v->num;
        }
        if (v->kind == ValueAst::Kind::ref) {
            const ParamValue& p = look_up(*v);
            if (p.kind != ParamValue::Kind::scalar) fail(call, "'" + v->ref + "' is not a scalar");
            if (exact) *exact = p.exact;
            if (ref) *ref = v->ref;
            return p.scalar;
        }
        fail(call, "argument '" + key + "' must be a scalar");
    }

    Vec vector(const CallAst& call, const std::string& key, int position, std::string* ref = nullptr,
               std::vector<std::optional<Rational>>* exact = nullptr) const {
        const ValueAst* v = find(call, key, position);
        if (!v) fail(call, "missing argument '" + key + "'");
        if (v->kind == ValueAst::Kind::vector) {
            if (exact) *exact = v->vec_exact;
            return v->vec;
        }
        if (v->kind == ValueAst::Kind::ref) {
            const ParamValue& p = look_up(*v);
            if (p.kind != ParamValue::Kind::vector) fail(call, "'" + v->ref + "' is not a vector");
            if (ref) *ref = v->ref;
            return p.vec;
        }
        fail(call, "argument '" + key + "' must be a vector");
    }

    std::vector<Vec> matrix(const CallAst& call, const std::string& key, int position,
                            std::string* ref = nullptr) const {
        const ValueAst* v = find(call, key, position);
        if (!v) fail(call, "missing argument '" + key + "'");
        if (v->kind == ValueAst::Kind::matrix) return v->mat;
        if (v->kind == ValueAst::Kind::ref) {
            const ParamValue& p = look_up(*v);
            if (p.kind != ParamValue::Kind::matrix) fail(call, "'" + v->ref + "' is not a matrix");
            if (ref) *ref = v->ref;
            return p.mat;
        }
        fail(call, "argument '" + key + "' must be a matrix");
    }

    DriftFn drift(const CallAst& call, int dim) const {
        if (call.name == "zero") return make_drift_zero(dim);
        if (call.name == "const") {
            std::string ref;
            Vec v = vector(call, "v", 0, &ref);
            if (static_cast<int>(v.size()) != dim) fail(call, "dimension mismatch for constant drift");
            return make_drift_const(v, ref.empty() ? "" : "const(" + ref + ")");
        }
        if (call.name == "linear") {
            std::string ref;
            std::vector<Vec> a = matrix(call, "a", 0, &ref);
            if (static_cast<int>(a.size()) != dim) fail(call, "dimension mismatch for linear drift");
            return make_drift_linear(a, ref.empty() ? "" : "linear(a=" + ref + ")");
        }
        if (call.name == "affine") {
            std::string refa, refb;
            std::vector<Vec> a = matrix(call, "a", 0, &refa);
            Vec b = vector(call, "b", 1, &refb);
            if (static_cast<int>(b.size()) != dim) fail(call, "dimension mismatch for affine drift");
            std::string text = "affine(a=" + (refa.empty() ? mat_text(a) : refa) + ",b=" +
                               (refb.empty() ? vec_text(b) : refb) + ")";
            return make_drift_affine(a, b, text);
        }
        fail(call, "unknown drift function");
    }

    DiffusionFn diffusion(const CallAst& call, int dim, int* brownian_dim) const {
        if (call.name == "zero") {
            *brownian_dim = dim;
            return make_diffusion_zero(dim, dim);
        }
        if (call.name == "const") {
            std::string ref;
            std::vector<Vec> w = matrix(call, "w", 0, &ref);
            if (static_cast<int>(w.size()) != dim || w.empty())
                fail(call, "dimension mismatch for constant diffusion");
            *brownian_dim = static_cast<int>(w.front().size());
            return make_diffusion_const(w, ref.empty() ? "" : "const(w=" + ref + ")");
        }
        fail(call, "unknown diffusion function");
    }

    GuardFn guard(const CallAst& call) const {
        if (call.name == "halfspace") {
            std::string refn;
            Vec n = vector(call, "normal", 0, &refn);
            std::optional<Rational> ex;
            std::string refo;
            double off = scalar(call, "offset", 1, &ex, &refo);
            std::string text = "halfspace(normal=" + (refn.empty() ? vec_text(n) : refn) + ",offset=" +
                               (refo.empty() ? fmt_num(off) : refo) + ")";
            return make_guard_halfspace(n, off, text);
        }
        if (call.name == "box") {
            std::string refl, refh;
            Vec lo = vector(call, "lo", 0, &refl);
            Vec hi = vector(call, "hi", 1, &refh);
            std::string text = "box(lo=" + (refl.empty() ? vec_text(lo) : refl) + ",hi=" +
                               (refh.empty() ? vec_text(hi) : refh) + ")";
            return make_guard_box(lo, hi, text);
        }
        fail(call, "unknown guard function");
    }

    RateFn rate(const CallAst& call) const {
        if (call.name == "const") {
            std::optional<Rational> exact;
            std::string ref;
            double v = scalar(call, "value", 0, &exact, &ref);
            return make_rate_const(v, ref, exact);
        }
        fail(call, "unknown rate function");
    }

    FiringMeasure fire(const CallAst& call, int n_outputs) const {
        if (call.name == "dirac") {
            std::vector<int> e;
            if (find(call, "e", 0)) {
                Vec ev = vector(call, "e", 0);
                for (double x : ev) e.push_back(static_cast<int>(x));
            }
            if (!e.empty() && static_cast<int>(e.size()) != n_outputs)
                fail(call, "e-vector length differs from output arc count");
            return make_firing_dirac(n_outputs, std::move(e));
        }
        if (call.name == "choice") {
            std::vector<std::optional<Rational>> pex;
            Vec p = vector(call, "p", 0, nullptr, &pex);
            std::vector<Vec> em = matrix(call, "e", 1);
            std::vector<std::vector<int>> support;
            for (const Vec& row : em) {
                if (static_cast<int>(row.size()) != n_outputs)
                    fail(call, "e-vector length differs from output arc count");
                std::vector<int> e;
                for (double x : row) e.push_back(static_cast<int>(x));
                support.push_back(std::move(e));
            }
            std::vector<Rational> probs;
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (!pex[i]) fail(call, "choice probabilities must be plain decimals");
                probs.push_back(*pex[i]);
            }
            return make_firing_choice(std::move(support), std::move(probs));
        }
        if (call.name == "shift") {
            Vec d = vector(call, "delta", 0);
            return make_firing_shift(n_outputs, d);
        }
        fail(call, "unknown firing function");
    }

    ColourSampler colour(const CallAst& call) const {
        if (call.name == "point") {
            std::string ref;
            Vec v = vector(call, "v", 0, &ref);
            return make_colour_point(v, ref.empty() ? "" : "point(" + ref + ")");
        }
        fail(call, "unknown colour sampler");
    }
};

struct PendingFire {
    int transition;
    CallAst call;
};

}  // namespace

SdcpnModel parse_model(const std::string& text, const std::map<std::string, std::string>& overrides) {
    SdcpnModel model;
    enum class Section { none, params, places, transitions, arcs, initial };

    // First pass: split into (section, line) pairs so [params] can be
    // processed first regardless of position.
    std::vector<std::pair<Section, std::pair<int, std::string>>> entries;
    {
        std::istringstream in(text);
        std::string raw;
        int lineno = 0;
        Section current = Section::none;
        while (std::getline(in, raw)) {
            ++lineno;
            std::string line = raw;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            std::size_t a = line.find_first_not_of(" \t\r");
            if (a == std::string::npos) continue;
            std::size_t b = line.find_last_not_of(" \t\r");
            line = line.substr(a, b - a + 1);
            if (line.front() == '[') {
                if (line.back() != ']') throw ParseError("unterminated section header", lineno, 1);
                std::string name = line.substr(1, line.size() - 2);
                if (name == "params") current = Section::params;
                else if (name == "places") current = Section::places;
                else if (name == "transitions") current = Section::transitions;
                else if (name == "arcs") current = Section::arcs;
                else if (name == "initial") current = Section::initial;
                else throw ParseError("unknown section '" + name + "'", lineno, 1);
                continue;
            }
            if (line.rfind("version", 0) == 0) {
                LineCursor cur(line, lineno);
                cur.ident();
                auto [v, ex] = cur.number();
                if (v != 1.0) throw ParseError("unsupported format version", lineno, 1);
                continue;
            }
            if (current == Section::none) throw ParseError("entry outside any section", lineno, 1);
            entries.emplace_back(current, std::make_pair(lineno, line));
        }
    }

    // params
    for (const auto& [sec, entry] : entries) {
        if (sec != Section::params) continue;
        LineCursor cur(entry.second, entry.first);
        std::string name = cur.ident();
        cur.expect_punct('=');
        ValueAst v = parse_value(cur);
        if (!cur.at_end()) cur.fail("trailing input after parameter value");
        ParamValue p;
        switch (v.kind) {
            case ValueAst::Kind::number:
                p.kind = ParamValue::Kind::scalar;
                p.scalar = v.num;
                p.exact = v.exact;
                break;
            case ValueAst::Kind::vector:
                p.kind = ParamValue::Kind::vector;
                p.vec = v.vec;
                break;
            case ValueAst::Kind::matrix:
                p.kind = ParamValue::Kind::matrix;
                p.mat = v.mat;
                break;
            case ValueAst::Kind::ref:
                cur.fail("parameter values must be literals");
        }
        model.params[name] = std::move(p);
    }
    for (const auto& [k, v] : overrides) {
        auto it = model.params.find(k);
        if (it == model.params.end()) throw ConfigError("override names unknown parameter '" + k + "'");
        if (it->second.kind != ParamValue::Kind::scalar)
            throw ConfigError("override '" + k + "' must target a scalar parameter");
        it->second.scalar = std::strtod(v.c_str(), nullptr);
        try {
            it->second.exact = Rational::from_decimal(v);
        } catch (const std::exception&) {
            it->second.exact = std::nullopt;
        }
    }

    Resolver resolve{model.params};

    // places
    for (const auto& [sec, entry] : entries) {
        if (sec != Section::places) continue;
        LineCursor cur(entry.second, entry.first);
        Place p;
        p.id = cur.ident();
        cur.expect_punct(':');
        CallAst drift_call, diff_call;
        bool has_drift = false, has_diff = false;
        while (!cur.at_end()) {
            std::string key = cur.ident();
            cur.expect_punct('=');
            if (key == "dim") {
                auto [v, ex] = cur.number();
                p.colour_dim = static_cast<int>(v);
            } else if (key == "drift") {
                drift_call = parse_call(cur);
                has_drift = true;
            } else if (key == "diffusion") {
                diff_call = parse_call(cur);
                has_diff = true;
            } else {
                cur.fail("unknown place attribute '" + key + "'");
            }
        }
        if (p.colour_dim > 0) {
            if (!has_drift) {
                p.drift = make_drift_zero(p.colour_dim);
            } else {
                p.drift = resolve.drift(drift_call, p.colour_dim);
            }
            p.brownian_dim = p.colour_dim;
            if (!has_diff) {
                p.diffusion = make_diffusion_zero(p.colour_dim, p.colour_dim);
            } else {
                p.diffusion = resolve.diffusion(diff_call, p.colour_dim, &p.brownian_dim);
            }
        } else if (has_drift || has_diff) {
            cur.fail("colourless place must not declare drift/diffusion");
        }
        if (model.place_index(p.id) >= 0) cur.fail("duplicate place '" + p.id + "'");
        model.places.push_back(std::move(p));
    }
    if (model.places.empty()) throw ParseError("no places", 1, 1);

    // transitions
    std::vector<PendingFire> pending_fires;
    for (const auto& [sec, entry] : entries) {
        if (sec != Section::transitions) continue;
        LineCursor cur(entry.second, entry.first);
        Transition t;
        t.id = cur.ident();
        cur.expect_punct(':');
        std::string kind = cur.ident();
        if (kind == "immediate") t.kind = TransitionKind::immediate;
        else if (kind == "delay") t.kind = TransitionKind::delay;
        else if (kind == "guard") t.kind = TransitionKind::guard;
        else cur.fail("unknown transition kind '" + kind + "'");
        std::optional<CallAst> fire_call;
        while (!cur.at_end()) {
            std::string key = cur.ident();
            cur.expect_punct('=');
            CallAst call = parse_call(cur);
            if (key == "rate") t.rate = resolve.rate(call);
            else if (key == "guard") t.guard = resolve.guard(call);
            else if (key == "fire") fire_call = std::move(call);
            else cur.fail("unknown transition attribute '" + key + "'");
        }
        if (model.transition_index(t.id) >= 0) cur.fail("duplicate transition '" + t.id + "'");
        int index = static_cast<int>(model.transitions.size());
        model.transitions.push_back(std::move(t));
        if (fire_call) pending_fires.push_back({index, std::move(*fire_call)});
    }

    // arcs
    for (const auto& [sec, entry] : entries) {
        if (sec != Section::arcs) continue;
        LineCursor cur(entry.second, entry.first);
        std::string src = cur.ident();
        if (!cur.eat_arrow()) cur.fail("expected '->'");
        std::string dst = cur.ident();
        cur.expect_punct(':');
        std::string kind = cur.ident();
        Arc a;
        a.id = "a" + std::to_string(model.arcs.size());
        if (kind == "ordinary") a.kind = ArcKind::ordinary;
        else if (kind == "enabling") a.kind = ArcKind::enabling;
        else if (kind == "inhibitor") a.kind = ArcKind::inhibitor;
        else cur.fail("unknown arc kind '" + kind + "'");
        int sp = model.place_index(src), st = model.transition_index(src);
        int dp = model.place_index(dst), dt = model.transition_index(dst);
        if (sp >= 0 && dt >= 0) {
            a.place_to_transition = true;
            a.place = sp;
            a.transition = dt;
        } else if (st >= 0 && dp >= 0) {
            a.place_to_transition = false;
            a.place = dp;
            a.transition = st;
        } else {
            cur.fail("arc endpoint does not name a declared place and transition");
        }
        model.arcs.push_back(a);
    }

    model.finalize();

    // firing measures now that output arc counts are known
    for (std::size_t t = 0; t < model.transitions.size(); ++t) {
        int n_out = static_cast<int>(model.io[t].output_arcs.size());
        model.transitions[t].firing = make_firing_dirac(n_out);
    }
    for (const PendingFire& pf : pending_fires) {
        int n_out = static_cast<int>(model.io[static_cast<std::size_t>(pf.transition)].output_arcs.size());
        model.transitions[static_cast<std::size_t>(pf.transition)].firing = resolve.fire(pf.call, n_out);
    }

    // initial marking
    for (const auto& [sec, entry] : entries) {
        if (sec != Section::initial) continue;
        LineCursor cur(entry.second, entry.first);
        InitialTokens init;
        std::string id = cur.ident();
        init.place = model.place_index(id);
        if (init.place < 0) cur.fail("initial marking names undeclared place '" + id + "'");
        cur.expect_punct(':');
        auto [count, ex] = cur.number();
        init.count = static_cast<int>(count);
        if (!cur.at_end()) {
            std::string key = cur.ident();
            if (key != "colour") cur.fail("unknown initial attribute '" + key + "'");
            cur.expect_punct('=');
            init.colours.push_back(resolve.colour(parse_call(cur)));
            while (cur.eat_punct(',')) init.colours.push_back(resolve.colour(parse_call(cur)));
        }
        model.initial.push_back(std::move(init));
    }

    ValidationReport report = validate(model);
    if (!report.ok()) throw ModelError("model failed validation:\n" + report.to_string());
    return model;
}

SdcpnModel load_model_file(const std::string& path, const std::map<std::string, std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    SdcpnModel m = parse_model(buf.str(), overrides);
    if (m.name.empty()) {
        auto slash = path.find_last_of('/');
        m.name = slash == std::string::npos ? path : path.substr(slash + 1);
    }
    return m;
}

std::string serialize_model(const SdcpnModel& model) {
    if (!model.serializable())
        throw ModelError("model contains ad hoc functions and cannot be serialized");
    std::ostringstream out;
    out << "version 1\n";
    if (!model.params.empty()) {
        out << "\n[params]\n";
        for (const auto& [k, v] : model.params) {
            out << k << " = ";
            if (v.kind == ParamValue::Kind::scalar) {
                out << fmt_num(v.scalar);
            } else if (v.kind == ParamValue::Kind::vector) {
                out << vec_text(v.vec);
            } else {
                out << mat_text(v.mat);
            }
            out << "\n";
        }
    }
    out << "\n[places]\n";
    for (const Place& p : model.places) {
        out << p.id << " : dim=" << p.colour_dim;
        if (p.colour_dim > 0) out << " drift=" << p.drift.text << " diffusion=" << p.diffusion.text;
        out << "\n";
    }
    out << "\n[transitions]\n";
    for (const Transition& t : model.transitions) {
        out << t.id << " : ";
        switch (t.kind) {
            case TransitionKind::immediate: out << "immediate"; break;
            case TransitionKind::delay: out << "delay"; break;
            case TransitionKind::guard: out << "guard"; break;
        }
        if (t.rate) out << " rate=" << t.rate->text;
        if (t.guard) out << " guard=" << t.guard->text;
        if (t.firing.text != "dirac") out << " fire=" << t.firing.text;
        out << "\n";
    }
    out << "\n[arcs]\n";
    for (const Arc& a : model.arcs) {
        const std::string& place = model.places[static_cast<std::size_t>(a.place)].id;
        const std::string& trans = model.transitions[static_cast<std::size_t>(a.transition)].id;
        if (a.place_to_transition) out << place << " -> " << trans;
        else out << trans << " -> " << place;
        out << " : ";
        switch (a.kind) {
            case ArcKind::ordinary: out << "ordinary"; break;
            case ArcKind::enabling: out << "enabling"; break;
            case ArcKind::inhibitor: out << "inhibitor"; break;
        }
        out << "\n";
    }
    out << "\n[initial]\n";
    for (const InitialTokens& i : model.initial) {
        out << model.places[static_cast<std::size_t>(i.place)].id << " : " << i.count;
        if (!i.colours.empty()) {
            out << " colour=";
            for (std::size_t k = 0; k < i.colours.size(); ++k) {
                if (k) out << ", ";
                out << i.colours[k].text;
            }
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// builtin air-traffic example
// ---------------------------------------------------------------------------

AirtrafficConfig AirtrafficConfig::defaults() {
    AirtrafficConfig c;
    // Position integrates velocity; velocity relaxes toward a per-mode target
    // (with negative vertical component, so the landing boundary is reached).
    c.drift_a = {
        {0, 0, 0, 1, 0, 0},
        {0, 0, 0, 0, 1, 0},
        {0, 0, 0, 0, 0, 1},
        {0, 0, 0, -1, 0, 0},
        {0, 0, 0, 0, -1, 0},
        {0, 0, 0, 0, 0, -1},
    };
    c.drift_b_nominal = {0, 0, 0, 1.0, 0.0, -0.5};
    c.drift_b_nonnominal = {0, 0, 0, 0.8, 0.2, -0.4};
    c.diffusion_nominal = {
        {0, 0, 0, 0, 0, 0},
        {0, 0, 0, 0, 0, 0},
        {0, 0, 0, 0, 0, 0},
        {0, 0, 0, 0.1, 0, 0},
        {0, 0, 0, 0, 0.1, 0},
        {0, 0, 0, 0, 0, 0.1},
    };
    c.diffusion_nonnominal = {
        {0, 0, 0, 0, 0, 0},
        {0, 0, 0, 0, 0, 0},
        {0, 0, 0, 0, 0, 0},
        {0, 0, 0, 0.2, 0, 0},
        {0, 0, 0, 0, 0.2, 0},
        {0, 0, 0, 0, 0, 0.2},
    };
    c.x0 = {0, 0, 1, 1, 0, 0.5};
    return c;
}

SdcpnModel airtraffic_example(const AirtrafficConfig& config) {
    if (config.x0.size() != 6) throw ModelError("airtraffic x0 must have dimension 6");
    if (!(config.x0[2] > 0.0)) throw ModelError("airtraffic x0 vertical position must be positive");
    for (double d : {config.delta3, config.delta4, config.delta5, config.delta6})
        if (!(d >= 0.0) || !std::isfinite(d)) throw ModelError("airtraffic rates must be finite and >= 0");

    SdcpnModel m;
    m.name = config.landing_guards ? "airtraffic" : "airtraffic-noguard";

    auto rate_param = [&m](const std::string& name, double v) {
        ParamValue p;
        p.kind = ParamValue::Kind::scalar;
        p.scalar = v;
        try {
            p.exact = Rational::from_decimal(fmt_num(v));
        } catch (const std::exception&) {
            p.exact = std::nullopt;
        }
        m.params[name] = p;
    };
    rate_param("delta3", config.delta3);
    rate_param("delta4", config.delta4);
    rate_param("delta5", config.delta5);
    rate_param("delta6", config.delta6);
    ParamValue x0;
    x0.kind = ParamValue::Kind::vector;
    x0.vec = config.x0;
    m.params["x0"] = x0;

    auto coloured = [&](const std::string& id, const Vec& b, const std::vector<Vec>& w) {
        Place p;
        p.id = id;
        p.colour_dim = 6;
        p.brownian_dim = 6;
        p.drift = make_drift_affine(config.drift_a, b);
        p.diffusion = make_diffusion_const(w);
        m.places.push_back(std::move(p));
    };
    auto colourless = [&](const std::string& id) {
        Place p;
        p.id = id;
        m.places.push_back(std::move(p));
    };

    coloured("P1", config.drift_b_nominal, config.diffusion_nominal);
    coloured("P2", config.drift_b_nonnominal, config.diffusion_nonnominal);
    colourless("P3");
    colourless("P4");
    colourless("P5");
    colourless("P6");
    {
        Place p;
        p.id = "P7";
        p.colour_dim = 6;
        p.brownian_dim = 6;
        p.drift = make_drift_zero(6);
        p.diffusion = make_diffusion_zero(6, 6);
        m.places.push_back(std::move(p));
    }

    auto immediate = [&m](const std::string& id) {
        Transition t;
        t.id = id;
        t.kind = TransitionKind::immediate;
        m.transitions.push_back(std::move(t));
    };
    auto delay = [&m](const std::string& id, const std::string& param, double v) {
        Transition t;
        t.id = id;
        t.kind = TransitionKind::delay;
        t.rate = make_rate_const(v, param, m.params[param].exact);
        m.transitions.push_back(std::move(t));
    };

    immediate("T1a");
    immediate("T1b");
    immediate("T2");
    delay("T3", "delta3", config.delta3);
    delay("T4", "delta4", config.delta4);
    delay("T5", "delta5", config.delta5);
    delay("T6", "delta6", config.delta6);
    if (config.landing_guards) {
        Vec lo = {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0,
                  -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0};
        Vec hi(6, std::numeric_limits<double>::infinity());
        for (const char* id : {"T7", "T8"}) {
            Transition t;
            t.id = id;
            t.kind = TransitionKind::guard;
            t.guard = make_guard_box(lo, hi);
            m.transitions.push_back(std::move(t));
        }
    }

    auto arc = [&m](const std::string& src, const std::string& dst, ArcKind kind) {
        Arc a;
        a.id = "a" + std::to_string(m.arcs.size());
        a.kind = kind;
        int sp = m.place_index(src);
        if (sp >= 0) {
            a.place_to_transition = true;
            a.place = sp;
            a.transition = m.transition_index(dst);
        } else {
            a.place_to_transition = false;
            a.transition = m.transition_index(src);
            a.place = m.place_index(dst);
        }
        m.arcs.push_back(a);
    };

    arc("P1", "T1a", ArcKind::ordinary);
    arc("P3", "T1a", ArcKind::enabling);
    arc("T1a", "P2", ArcKind::ordinary);
    arc("P1", "T1b", ArcKind::ordinary);
    arc("P5", "T1b", ArcKind::enabling);
    arc("T1b", "P2", ArcKind::ordinary);
    arc("P2", "T2", ArcKind::ordinary);
    arc("P4", "T2", ArcKind::enabling);
    arc("P6", "T2", ArcKind::enabling);
    arc("T2", "P1", ArcKind::ordinary);
    arc("P3", "T3", ArcKind::ordinary);
    arc("T3", "P4", ArcKind::ordinary);
    arc("P4", "T4", ArcKind::ordinary);
    arc("T4", "P3", ArcKind::ordinary);
    arc("P5", "T5", ArcKind::ordinary);
    arc("T5", "P6", ArcKind::ordinary);
    arc("P6", "T6", ArcKind::ordinary);
    arc("T6", "P5", ArcKind::ordinary);
    if (config.landing_guards) {
        arc("P1", "T7", ArcKind::ordinary);
        arc("T7", "P7", ArcKind::ordinary);
        arc("P2", "T8", ArcKind::ordinary);
        arc("T8", "P7", ArcKind::ordinary);
    }

    m.finalize();
    for (std::size_t t = 0; t < m.transitions.size(); ++t)
        m.transitions[t].firing = make_firing_dirac(static_cast<int>(m.io[t].output_arcs.size()));

    InitialTokens p1;
    p1.place = m.place_index("P1");
    p1.count = 1;
    p1.colours.push_back(make_colour_point(config.x0, "point(x0)"));
    m.initial.push_back(std::move(p1));
    InitialTokens p4;
    p4.place = m.place_index("P4");
    p4.count = 1;
    m.initial.push_back(p4);
    InitialTokens p6;
    p6.place = m.place_index("P6");
    p6.count = 1;
    m.initial.push_back(p6);

    return m;
}

bool is_builtin_model(const std::string& name) {
    return name == "airtraffic" || name == "airtraffic-noguard";
}

SdcpnModel builtin_model(const std::string& name, const std::map<std::string, std::string>& overrides) {
    if (!is_builtin_model(name)) throw ModelError("unknown builtin model '" + name + "'");
    AirtrafficConfig c = AirtrafficConfig::defaults();
    c.landing_guards = name == "airtraffic";
    for (const auto& [k, v] : overrides) {
        double* target = nullptr;
        if (k == "delta3") target = &c.delta3;
        else if (k == "delta4") target = &c.delta4;
        else if (k == "delta5") target = &c.delta5;
        else if (k == "delta6") target = &c.delta6;
        else throw ConfigError("builtin model has no parameter '" + k + "'");
        *target = std::strtod(v.c_str(), nullptr);
    }
    return airtraffic_example(c);
}

}  // namespace shs
