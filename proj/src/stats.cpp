#include "gfflab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gff {

namespace {

struct Moments {
    double mean = 0, var = 0, skew = 0, kurt = 0;
};

Moments raw_moments(const double* v, std::size_t n) {
    Moments m;
    if (n == 0) return m;
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    m.mean = s / double(n);
    double m2 = 0, m3 = 0, m4 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = v[i] - m.mean;
        double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= double(n);
    m3 /= double(n);
    m4 /= double(n);
    m.var = (n > 1) ? m2 * double(n) / double(n - 1) : 0.0;
    m.skew = (m2 > 0) ? m3 / std::pow(m2, 1.5) : 0.0;
    m.kurt = (m2 > 0) ? m4 / (m2 * m2) - 3.0 : 0.0;
    return m;
}

}  // namespace

StatSummary summarize(const std::vector<double>& values, int batches) {
    if (values.size() < 2) throw std::invalid_argument("summarize: need n >= 2");
    StatSummary out;
    out.n = values.size();
    Moments full = raw_moments(values.data(), values.size());
    out.mean = full.mean;
    out.variance = full.var;
    out.skewness = full.skew;
    out.ex_kurtosis = full.kurt;

    int B = std::min<int>(batches, static_cast<int>(values.size() / 2));
    if (B >= 2) {
        std::vector<double> bm, bv, bs, bk;
        std::size_t per = values.size() / static_cast<std::size_t>(B);
        for (int b = 0; b < B; ++b) {
            Moments mb = raw_moments(values.data() + static_cast<std::size_t>(b) * per, per);
            bm.push_back(mb.mean);
            bv.push_back(mb.var);
            bs.push_back(mb.skew);
            bk.push_back(mb.kurt);
        }
        auto batch_se = [B](const std::vector<double>& xs) {
            double mu = 0;
            for (double x : xs) mu += x;
            mu /= B;
            double s2 = 0;
            for (double x : xs) s2 += (x - mu) * (x - mu);
            s2 /= double(B - 1);
            return std::sqrt(s2 / B);
        };
        out.se_mean = batch_se(bm);
        out.se_variance = batch_se(bv);
        out.se_skewness = batch_se(bs);
        out.se_kurtosis = batch_se(bk);
    }
    return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

double ks_statistic_normal(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    double D = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double F = normal_cdf(values[i]);
        D = std::max(D, std::abs(F - double(i) / double(n)));
        D = std::max(D, std::abs(double(i + 1) / double(n) - F));
    }
    return D;
}

double ks_pvalue(double stat, std::size_t n) {
    double sn = std::sqrt(double(n));
    double lambda = (sn + 0.12 + 0.11 / sn) * stat;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
        p += term;
        if (std::abs(term) < 1e-12) break;
    }
    return std::clamp(p, 0.0, 1.0);
}

double ks_statistic_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double D = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        D = std::max(D, std::abs(double(i) / a.size() - double(j) / b.size()));
    }
    return D;
}

double ks_pvalue_two_sample(double stat, std::size_t n, std::size_t m) {
    double ne = double(n) * double(m) / double(n + m);
    return ks_pvalue(stat, static_cast<std::size_t>(ne));
}

LineFit weighted_line_fit(const std::vector<double>& x, const std::vector<double>& y,
                          const std::vector<double>& se_y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("weighted_line_fit: bad input");
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double se = se_y.empty() ? 1.0 : se_y[i];
        double w = 1.0 / (se * se);
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    double det = sw * sxx - sx * sx;
    LineFit f;
    f.slope = (sw * sxy - sx * sy) / det;
    f.intercept = (sxx * sy - sx * sxy) / det;
    f.se_slope = std::sqrt(sw / det);
    return f;
}

}  // namespace gff
