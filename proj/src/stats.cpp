#include "shs/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace shs::stats {

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = 3e-14;

// Series expansion of P(a,x), valid for x < a+1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int i = 0; i < kMaxIter; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x), valid for x >= a+1.
double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / 1e-300;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double beta_cf(double a, double b, double x) {
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = 1.0 + aa / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = 1.0 + aa / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::domain_error("gamma_q domain");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double beta_i(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw std::domain_error("beta_i domain");
    if (x == 0.0 || x == 1.0) return x;
    double lnfront = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(1.0 - x);
    double front = std::exp(lnfront);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double chi2_sf(double x, int dof) {
    if (dof <= 0) throw std::domain_error("chi2_sf needs dof >= 1");
    if (x <= 0.0) return 1.0;
    return gamma_q(0.5 * dof, 0.5 * x);
}

double kolmogorov_sf(double t) {
    if (t <= 0.0) return 1.0;
    if (t < 0.2) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * t * t);
        sum += sign * term;
        if (term < 1e-16) break;
        sign = -sign;
    }
    double q = 2.0 * sum;
    return std::clamp(q, 0.0, 1.0);
}

double student_t_sf2(double t, double dof) {
    if (dof <= 0.0) throw std::domain_error("student_t_sf2 needs dof > 0");
    double x = dof / (dof + t * t);
    return beta_i(0.5 * dof, 0.5, x);
}

Summary summarize(const std::vector<double>& xs) {
    Summary s;
    for (double x : xs) {
        double d1 = x - s.mean;
        s.mean += d1 / static_cast<double>(++s.n);
        s.variance += d1 * (x - s.mean);
    }
    if (s.n) s.variance /= static_cast<double>(s.n);
    return s;
}

TestOutcome chi2_gof(const std::vector<long long>& counts, const std::vector<double>& probs) {
    if (counts.size() != probs.size()) throw std::invalid_argument("chi2_gof size mismatch");
    long long total = 0;
    for (long long c : counts) total += c;
    TestOutcome out;
    if (total == 0) {
        out.skipped = true;
        out.note = "no observations";
        return out;
    }
    double stat = 0.0;
    int dof = -1;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        double expected = probs[i] * static_cast<double>(total);
        if (expected <= 0.0) {
            if (counts[i] > 0) {
                out.statistic = std::numeric_limits<double>::infinity();
                out.p_value = 0.0;
                out.note = "mass observed on zero-probability category";
                return out;
            }
            continue;
        }
        double d = static_cast<double>(counts[i]) - expected;
        stat += d * d / expected;
        ++dof;
    }
    if (dof < 1) {
        out.skipped = true;
        out.note = "fewer than two supported categories";
        return out;
    }
    out.statistic = stat;
    out.p_value = chi2_sf(stat, dof);
    return out;
}

TestOutcome chi2_homogeneity(const std::vector<long long>& a, const std::vector<long long>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("chi2_homogeneity size mismatch");
    long long na = 0, nb = 0;
    for (long long c : a) na += c;
    for (long long c : b) nb += c;
    TestOutcome out;
    if (na == 0 || nb == 0) {
        out.skipped = true;
        out.note = "empty sample";
        return out;
    }
    double n = static_cast<double>(na + nb);
    double stat = 0.0;
    int used = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        long long col = a[i] + b[i];
        if (col == 0) continue;
        ++used;
        double ea = static_cast<double>(na) * static_cast<double>(col) / n;
        double eb = static_cast<double>(nb) * static_cast<double>(col) / n;
        double da = static_cast<double>(a[i]) - ea;
        double db = static_cast<double>(b[i]) - eb;
        stat += da * da / ea + db * db / eb;
    }
    if (used < 2) {
        out.skipped = true;
        out.note = "single effective category";
        return out;
    }
    out.statistic = stat;
    out.p_value = chi2_sf(stat, used - 1);
    return out;
}

TestOutcome ks_two_sample(std::vector<double> a, std::vector<double> b) {
    TestOutcome out;
    if (a.empty() || b.empty()) {
        out.skipped = true;
        out.note = "empty sample";
        return out;
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.front() == a.back() && b.front() == b.back() && a.front() == b.front()) {
        out.skipped = true;
        out.note = "both samples constant";
        return out;
    }
    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
        double xa = a[ia], xb = b[ib];
        double x = std::min(xa, xb);
        while (ia < a.size() && a[ia] <= x) ++ia;
        while (ib < b.size() && b[ib] <= x) ++ib;
        d = std::max(d, std::fabs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb));
    }
    double ne = std::sqrt(na * nb / (na + nb));
    out.statistic = d;
    out.p_value = kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d);
    return out;
}

TestOutcome welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    TestOutcome out;
    if (a.size() < 2 || b.size() < 2) {
        out.skipped = true;
        out.note = "need at least two observations per sample";
        return out;
    }
    Summary sa = summarize(a), sb = summarize(b);
    double va = sa.variance * sa.n / (sa.n - 1.0);  // sample variance
    double vb = sb.variance * sb.n / (sb.n - 1.0);
    double sea = va / static_cast<double>(sa.n);
    double seb = vb / static_cast<double>(sb.n);
    double se2 = sea + seb;
    if (se2 == 0.0) {
        if (sa.mean == sb.mean) {
            out.skipped = true;
            out.note = "both samples constant and equal";
            return out;
        }
        out.statistic = std::numeric_limits<double>::infinity();
        out.p_value = 0.0;
        return out;
    }
    double t = (sa.mean - sb.mean) / std::sqrt(se2);
    double dof = se2 * se2 / (sea * sea / (sa.n - 1.0) + seb * seb / (sb.n - 1.0));
    out.statistic = t;
    out.p_value = student_t_sf2(t, dof);
    return out;
}

}  // namespace shs::stats
