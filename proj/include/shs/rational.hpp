#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace shs {

// Exact rational on 64-bit integers. The quantities that flow through here
// (jump probabilities assembled from a handful of rate constants and small
// uniform conflict weights) stay tiny; intermediate products go through
// 128-bit so reduction never overflows silently.
class Rational {
public:
    Rational() = default;
    Rational(std::int64_t value) : num_(value), den_(1) {}
    Rational(std::int64_t num, std::int64_t den) : num_(num), den_(den) { normalize(); }

    // Parses a plain decimal literal ("2", "-1.5", "0.125") exactly.
    static Rational from_decimal(const std::string& text);

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
    bool is_zero() const { return num_ == 0; }

    Rational operator-() const { return Rational(-num_, den_); }
    Rational& operator+=(const Rational& o) { return assign_ratio(i128(num_) * o.den_ + i128(o.num_) * den_, i128(den_) * o.den_); }
    Rational& operator-=(const Rational& o) { return *this += -o; }
    Rational& operator*=(const Rational& o) { return assign_ratio(i128(num_) * o.num_, i128(den_) * o.den_); }
    Rational& operator/=(const Rational& o) {
        if (o.num_ == 0) throw std::domain_error("rational division by zero");
        return assign_ratio(i128(num_) * o.den_, i128(den_) * o.num_);
    }

    friend Rational operator+(Rational a, const Rational& b) { return a += b; }
    friend Rational operator-(Rational a, const Rational& b) { return a -= b; }
    friend Rational operator*(Rational a, const Rational& b) { return a *= b; }
    friend Rational operator/(Rational a, const Rational& b) { return a /= b; }
    friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
    friend bool operator<(const Rational& a, const Rational& b) { return i128(a.num_) * b.den_ < i128(b.num_) * a.den_; }

    std::string to_string() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

private:
    using i128 = __int128;

    void normalize() {
        if (den_ == 0) throw std::domain_error("rational with zero denominator");
        if (den_ < 0) { num_ = -num_; den_ = -den_; }
        std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
        if (g > 1) { num_ /= g; den_ /= g; }
    }

    Rational& assign_ratio(i128 n, i128 d) {
        if (d == 0) throw std::domain_error("rational with zero denominator");
        if (d < 0) { n = -n; d = -d; }
        i128 a = n < 0 ? -n : n;
        i128 b = d;
        while (b != 0) { i128 t = a % b; a = b; b = t; }
        if (a > 1) { n /= a; d /= a; }
        constexpr i128 lim = INT64_MAX;
        if (n > lim || n < -lim || d > lim) throw std::overflow_error("rational overflow");
        num_ = static_cast<std::int64_t>(n);
        den_ = static_cast<std::int64_t>(d);
        return *this;
    }

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

inline Rational Rational::from_decimal(const std::string& text) {
    std::string s = text;
    bool neg = false;
    std::size_t i = 0;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) { neg = s[i] == '-'; ++i; }
    std::int64_t whole = 0, frac = 0, scale = 1;
    bool any = false;
    for (; i < s.size() && s[i] >= '0' && s[i] <= '9'; ++i) { whole = whole * 10 + (s[i] - '0'); any = true; }
    if (i < s.size() && s[i] == '.') {
        ++i;
        for (; i < s.size() && s[i] >= '0' && s[i] <= '9'; ++i) {
            if (scale > INT64_MAX / 10) throw std::overflow_error("decimal literal too long: " + text);
            frac = frac * 10 + (s[i] - '0');
            scale *= 10;
            any = true;
        }
    }
    if (!any || i != s.size()) throw std::invalid_argument("not a plain decimal literal: " + text);
    Rational r = Rational(whole) + Rational(frac, scale);
    return neg ? -r : r;
}

// Linear form c0 + sum_i c_i * p_i over named parameters, with exact rational
// coefficients. Used to keep rate sums and jump probabilities symbolic when a
// model's rates are named constants.
class LinForm {
public:
    LinForm() = default;
    explicit LinForm(Rational constant) : constant_(constant) {}
    static LinForm term(const std::string& param, Rational coeff = Rational(1)) {
        LinForm f;
        if (!coeff.is_zero()) f.terms_[param] = coeff;
        return f;
    }

    const Rational& constant() const { return constant_; }
    const std::map<std::string, Rational>& terms() const { return terms_; }
    bool is_zero() const { return constant_.is_zero() && terms_.empty(); }

    LinForm& operator+=(const LinForm& o) {
        constant_ += o.constant_;
        for (const auto& [k, v] : o.terms_) {
            Rational c = coeff(k) + v;
            if (c.is_zero()) terms_.erase(k); else terms_[k] = c;
        }
        return *this;
    }
    friend LinForm operator+(LinForm a, const LinForm& b) { return a += b; }

    LinForm scaled(const Rational& s) const {
        LinForm f;
        if (s.is_zero()) return f;
        f.constant_ = constant_ * s;
        for (const auto& [k, v] : terms_) f.terms_[k] = v * s;
        return f;
    }

    Rational coeff(const std::string& param) const {
        auto it = terms_.find(param);
        return it == terms_.end() ? Rational(0) : it->second;
    }

    friend bool operator==(const LinForm& a, const LinForm& b) {
        return a.constant_ == b.constant_ && a.terms_ == b.terms_;
    }
    friend bool operator!=(const LinForm& a, const LinForm& b) { return !(a == b); }

    double eval(const std::map<std::string, double>& params) const {
        double v = constant_.value();
        for (const auto& [k, c] : terms_) {
            auto it = params.find(k);
            if (it == params.end()) throw std::invalid_argument("unbound parameter " + k);
            v += c.value() * it->second;
        }
        return v;
    }

    Rational eval_exact(const std::map<std::string, Rational>& params) const {
        Rational v = constant_;
        for (const auto& [k, c] : terms_) {
            auto it = params.find(k);
            if (it == params.end()) throw std::invalid_argument("unbound parameter " + k);
            v += c * it->second;
        }
        return v;
    }

    std::string to_string() const;

private:
    Rational constant_;
    std::map<std::string, Rational> terms_;
};

inline std::string LinForm::to_string() const {
    if (is_zero()) return "0";
    std::string out;
    auto append = [&out](const std::string& piece) {
        if (!out.empty() && piece[0] != '-') out += "+";
        out += piece;
    };
    if (!constant_.is_zero()) append(constant_.to_string());
    for (const auto& [k, c] : terms_) {
        if (c == Rational(1)) append(k);
        else if (c == Rational(-1)) append("-" + k);
        else append(c.to_string() + "*" + k);
    }
    return out;
}

// Ratio of two linear forms: the shape of every entry of a mapped transition
// matrix (e.g. d4/(d4+d6)). Symbolic equality is decided by cross
// multiplication, so d4/(d4+d6) == 2*d4/(2*d4+2*d6).
struct RateRatio {
    LinForm num;
    LinForm den;

    static RateRatio zero() { return {LinForm(), LinForm(Rational(1))}; }
    static RateRatio one() { LinForm f{Rational(1)}; return {f, f}; }

    bool is_zero() const { return num.is_zero(); }

    double eval(const std::map<std::string, double>& params) const {
        double d = den.eval(params);
        if (d == 0.0) throw std::domain_error("rate ratio with zero denominator");
        return num.eval(params) / d;
    }

    Rational eval_exact(const std::map<std::string, Rational>& params) const {
        Rational d = den.eval_exact(params);
        return num.eval_exact(params) / d;
    }

    std::string to_string() const {
        std::string d = den.to_string();
        bool plain = den.terms().empty() || (den.constant().is_zero() && den.terms().size() == 1);
        return num.to_string() + "/" + (plain ? d : "(" + d + ")");
    }
};

namespace detail {
// Expands a*b into a symmetric quadratic coefficient table, "" standing for
// the constant slot.
inline std::map<std::pair<std::string, std::string>, Rational> form_product(const LinForm& a, const LinForm& b) {
    std::map<std::pair<std::string, std::string>, Rational> out;
    auto add = [&out](std::string x, std::string y, const Rational& c) {
        if (c.is_zero()) return;
        if (y < x) std::swap(x, y);
        auto key = std::make_pair(std::move(x), std::move(y));
        Rational next = (out.count(key) ? out[key] : Rational(0)) + c;
        if (next.is_zero()) out.erase(key); else out[key] = next;
    };
    add("", "", a.constant() * b.constant());
    for (const auto& [k, v] : b.terms()) add("", k, a.constant() * v);
    for (const auto& [k, v] : a.terms()) add("", k, v * b.constant());
    for (const auto& [ka, va] : a.terms())
        for (const auto& [kb, vb] : b.terms()) add(ka, kb, va * vb);
    return out;
}
}  // namespace detail

inline bool operator==(const RateRatio& a, const RateRatio& b) {
    return detail::form_product(a.num, b.den) == detail::form_product(b.num, a.den);
}
inline bool operator!=(const RateRatio& a, const RateRatio& b) { return !(a == b); }

}  // namespace shs
