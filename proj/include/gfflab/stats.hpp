#pragma once

#include <cstddef>
#include <vector>

namespace gff {

// Moment summary with batch-mean standard errors; deterministic given the
// input order.
struct StatSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double skewness = 0.0;
    double ex_kurtosis = 0.0;
    double se_mean = 0.0;
    double se_variance = 0.0;
    double se_skewness = 0.0;
    double se_kurtosis = 0.0;
};

StatSummary summarize(const std::vector<double>& values, int batches = 20);

double normal_cdf(double x);
double normal_pdf(double x);

// One-sample KS against N(0,1) (values are standardized by the caller).
double ks_statistic_normal(std::vector<double> values);
// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
double ks_pvalue(double stat, std::size_t n);

double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b);
double ks_pvalue_two_sample(double stat, std::size_t n, std::size_t m);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double se_slope = 0.0;
};

// weighted least squares y ~ a + b x with weights 1/se_y^2
LineFit weighted_line_fit(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& se_y);

}  // namespace gff
