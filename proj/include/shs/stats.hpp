#pragma once

#include <string>
#include <vector>

namespace shs::stats {

// Regularized upper incomplete gamma Q(a,x).
double gamma_q(double a, double x);

// Regularized incomplete beta I_x(a,b).
double beta_i(double a, double b, double x);

// Survival function of the chi-square distribution with k dof.
double chi2_sf(double x, int dof);

// Survival function of the Kolmogorov limit distribution,
// Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2).
double kolmogorov_sf(double t);

// Two-sided survival of Student's t with (possibly fractional) dof.
double student_t_sf2(double t, double dof);

struct TestOutcome {
    double statistic = 0.0;
    double p_value = 1.0;
    bool skipped = false;     // degenerate input, no decision possible
    std::string note;
};

// Goodness of fit of observed counts against known category probabilities.
// Categories with zero probability must have zero counts (else p=0).
TestOutcome chi2_gof(const std::vector<long long>& counts, const std::vector<double>& probs);

// Two-sample homogeneity chi-square on a 2 x k count table.
TestOutcome chi2_homogeneity(const std::vector<long long>& a, const std::vector<long long>& b);

// Two-sample Kolmogorov-Smirnov with the asymptotic p-value.
TestOutcome ks_two_sample(std::vector<double> a, std::vector<double> b);

// Welch two-sample t test for equal means.
TestOutcome welch_t(const std::vector<double>& a, const std::vector<double>& b);

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;  // population (denominator n)
};
Summary summarize(const std::vector<double>& xs);

}  // namespace shs::stats
