#include "gfflab/green.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace gff {

namespace {

// 24-point Gauss-Legendre nodes/weights on [-1, 1]
constexpr int kGL = 24;
constexpr double kGLx[kGL] = {
    -0.9951872199970213, -0.9747285559713095, -0.9382745520027328, -0.8864155270044011,
    -0.8200019859739029, -0.7401241915785544, -0.6480936519369755, -0.5454214713888396,
    -0.4337935076260451, -0.3150426796961634, -0.1911188674736163, -0.0640568928626056,
    0.0640568928626056,  0.1911188674736163,  0.3150426796961634,  0.4337935076260451,
    0.5454214713888396,  0.6480936519369755,  0.7401241915785544,  0.8200019859739029,
    0.8864155270044011,  0.9382745520027328,  0.9747285559713095,  0.9951872199970213};
constexpr double kGLw[kGL] = {
    0.0123412297999872, 0.0285313886289337, 0.0442774388174198, 0.0592985849154368,
    0.0733464814110803, 0.0861901615319533, 0.0976186521041139, 0.1074442701159656,
    0.1155056680537256, 0.1216704729278034, 0.1258374563468283, 0.1279381953467522,
    0.1279381953467522, 0.1258374563468283, 0.1216704729278034, 0.1155056680537256,
    0.1074442701159656, 0.0976186521041139, 0.0861901615319533, 0.0733464814110803,
    0.0592985849154368, 0.0442774388174198, 0.0285313886289337, 0.0123412297999872};

// e^{-z} I_n(z) for n = 0..nmax via Miller's downward recurrence with
// on-the-fly rescaling (values span hundreds of orders of magnitude).
void ibar_vector(double z, int nmax, double* out) {
    if (z <= 0.0) {
        out[0] = 1.0;
        for (int n = 1; n <= nmax; ++n) out[n] = 0.0;
        return;
    }
    const double zi = std::max(z, double(nmax));
    int M = nmax + static_cast<int>(z) + static_cast<int>(12.0 * std::sqrt(zi)) + 40;
    double hi = 0.0, mid = 1e-280;  // hi = I_{n+2}, mid = I_{n+1}, seeded at n = M
    double norm = 0.0;
    const double kBig = 1e250, kInv = 1e-250;
    for (int n = M; n >= 0; --n) {
        double lo = hi + (2.0 * (n + 1) / z) * mid;  // I_n = I_{n+2} + (2(n+1)/z) I_{n+1}
        hi = mid;
        mid = lo;
        if (n <= nmax) out[n] = lo;
        norm += (n == 0) ? lo : 2.0 * lo;
        if (std::abs(mid) > kBig) {
            hi *= kInv;
            mid *= kInv;
            norm *= kInv;
            if (n <= nmax)
                for (int k = n; k <= nmax; ++k) out[k] *= kInv;
        }
    }
    // e^{-z}(I_0 + 2 sum_{k>=1} I_k) = 1
    for (int n = 0; n <= nmax; ++n) out[n] /= norm;
}

struct NodeTable {
    std::vector<double> w;                   // quadrature weights
    std::vector<std::vector<double>> ibar;   // per node: e^{-s/d} I_n(s/d), n = 0..nmax
    double T = 0.0;
    int nmax = 0;
};

// Geometric panels [0,1],[1,2],[2,4],...,[T/2,T]; the integrand is analytic
// so fixed-order GL per panel is enough.
NodeTable build_table(int d, int nmax) {
    NodeTable t;
    t.nmax = nmax;
    double T = std::max(512.0, 64.0 * d * double(nmax) * double(nmax));
    std::vector<std::pair<double, double>> panels;
    panels.emplace_back(0.0, 1.0);
    double a = 1.0;
    while (a < T) {
        panels.emplace_back(a, 2.0 * a);
        a *= 2.0;
    }
    t.T = a;
    for (auto [lo, hi] : panels) {
        for (int j = 0; j < kGL; ++j) {
            double s = 0.5 * (hi + lo) + 0.5 * (hi - lo) * kGLx[j];
            t.w.push_back(0.5 * (hi - lo) * kGLw[j]);
            t.ibar.emplace_back(nmax + 1);
            ibar_vector(s / d, nmax, t.ibar.back().data());
        }
    }
    return t;
}

const NodeTable& table_for(int d, int need_n) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, NodeTable> tables;
    int tier = 8;
    while (tier < need_n) tier *= 2;
    tier = std::min(tier, 128);
    std::lock_guard<std::mutex> lk(mu);
    auto key = std::make_pair(d, tier);
    auto it = tables.find(key);
    if (it == tables.end()) it = tables.emplace(key, build_table(d, tier)).first;
    return it->second;
}

// Coefficients of the asymptotic series e^{-z} I_n(z) ~ (2 pi z)^{-1/2}
// sum_k (-1)^k a_k(n) z^{-k}.
std::array<double, 6> series_coeffs(int n) {
    std::array<double, 6> a{};
    a[0] = 1.0;
    double mu = 4.0 * double(n) * double(n);
    for (int k = 1; k < 6; ++k) {
        double odd = 2.0 * k - 1.0;
        a[k] = a[k - 1] * (mu - odd * odd) / (8.0 * k);
    }
    return a;
}

double tail_integral(int d, const Site& x, double T) {
    // product of the per-factor series in 1/s, truncated, integrated termwise
    std::array<double, 6> prod{};
    prod[0] = 1.0;
    for (int i = 0; i < d; ++i) {
        auto a = series_coeffs(static_cast<int>(std::abs(x.c[i])));
        std::array<double, 6> next{};
        for (int k = 0; k < 6; ++k) {
            double bk = ((k % 2) ? -1.0 : 1.0) * a[k] * std::pow(double(d), k);
            for (int j = 0; j + k < 6; ++j) next[j + k] += prod[j] * bk;
        }
        prod = next;
    }
    double lead = std::pow(d / (2.0 * M_PI), 0.5 * d);
    double total = 0.0;
    for (int k = 0; k < 6; ++k) {
        double p = 0.5 * d + k - 1.0;  // integral of s^{-d/2-k} from T
        total += prod[k] * std::pow(T, -p) / p;
    }
    return lead * total;
}

double eval_green(int d, const Site& x) {
    int need = 0;
    for (int i = 0; i < d; ++i) need = std::max(need, static_cast<int>(std::abs(x.c[i])));
    if (need > 128) throw std::invalid_argument("walk_green: coordinate too large for exact path");
    const NodeTable& t = table_for(d, need);
    double head = 0.0;
    for (std::size_t j = 0; j < t.w.size(); ++j) {
        double p = 1.0;
        for (int i = 0; i < d; ++i) p *= t.ibar[j][static_cast<std::size_t>(std::abs(x.c[i]))];
        head += t.w[j] * p;
    }
    return head + tail_integral(d, x, t.T);
}

struct CacheKey {
    int d;
    std::array<long, kMaxDim> a;
    bool operator<(const CacheKey& o) const {
        if (d != o.d) return d < o.d;
        return a < o.a;
    }
};

}  // namespace

double walk_green(int d, const Site& x, double tol) {
    if (d < 3) throw std::invalid_argument("walk_green: walk is recurrent for d < 3");
    if (x.d != d) throw std::invalid_argument("walk_green: dimension mismatch");
    if (tol < 1e-11) throw std::invalid_argument("walk_green: tol below supported accuracy");
    CacheKey key{d, {}};
    for (int i = 0; i < d; ++i) key.a[static_cast<std::size_t>(i)] = std::abs(x.c[i]);
    std::sort(key.a.begin(), key.a.begin() + d);
    static std::mutex mu;
    static std::map<CacheKey, double> cache;
    {
        std::lock_guard<std::mutex> lk(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    Site canon = Site::zero(d);
    for (int i = 0; i < d; ++i) canon.c[i] = key.a[static_cast<std::size_t>(i)];
    double v = eval_green(d, canon);
    std::lock_guard<std::mutex> lk(mu);
    cache.emplace(key, v);
    return v;
}

std::pair<double, int> green_asymptotic(int d) {
    if (d < 3) throw std::invalid_argument("green_asymptotic: d >= 3 required");
    double cd = 0.5 * d * std::tgamma(0.5 * d - 1.0) * std::pow(M_PI, -0.5 * d);
    return {cd, d - 2};
}

double walk_green_asymptotic_value(int d, const Site& x) {
    auto [cd, alpha] = green_asymptotic(d);
    double r = x.norm2();
    if (r == 0.0) throw std::invalid_argument("asymptotic value undefined at 0");
    return cd * std::pow(r, -double(alpha));
}

double spectral_density(int d, const std::vector<double>& theta) {
    if (static_cast<int>(theta.size()) != d) throw std::invalid_argument("spectral_density: bad theta");
    double phi = 0.0;
    for (double th : theta) phi += std::cos(th);
    phi /= d;
    if (1.0 - phi <= 0.0) throw std::domain_error("spectral_density: pole at theta = 0");
    return std::pow(2.0 * M_PI, -double(d)) / (1.0 - phi);
}

std::size_t offset_table_index(int d, long m, const Site& u) {
    std::size_t side = static_cast<std::size_t>(2 * m + 1);
    std::size_t idx = 0;
    for (int i = 0; i < d; ++i) idx = idx * side + static_cast<std::size_t>(u.c[i] + m);
    return idx;
}

std::vector<double> green_offset_table(int d, long m) {
    std::size_t side = static_cast<std::size_t>(2 * m + 1);
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) n *= side;
    std::vector<double> out(n);
    Site u = Site::zero(d);
    for (std::size_t idx = 0; idx < n; ++idx) {
        std::size_t rem = idx;
        for (int i = d - 1; i >= 0; --i) {
            u.c[i] = static_cast<long>(rem % side) - m;
            rem /= side;
        }
        out[idx] = walk_green(d, u);
    }
    return out;
}

}  // namespace gff
