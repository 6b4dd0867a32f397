#include "gfflab/green.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "gfflab/model.hpp"
#include "gfflab/rng.hpp"

using namespace gff;

namespace {

// Independent oracle for G(0) in d=3: Fourier integral over [-pi,pi]^3 with
// the |theta|^{-2} singularity subtracted analytically. The 6/|theta|^2 part
// integrates over [-a,a]^3 to 6 a C2 with C2 = int_{[-1,1]^3} |u|^{-2} du.
constexpr int kGn = 16;
void gl16(double a, double b, double* x, double* w) {
    static const double nodes[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                                    0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                                    0.9445750230732326, 0.9894009349916499};
    static const double wts[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                                  0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                                  0.0622535239386479, 0.0271524594117541};
    for (int i = 0; i < 8; ++i) {
        double m = 0.5 * (a + b), h = 0.5 * (b - a);
        x[2 * i] = m - h * nodes[i];
        x[2 * i + 1] = m + h * nodes[i];
        w[2 * i] = w[2 * i + 1] = h * wts[i];
    }
}

double c2_constant() {
    // C2 = 2 pi^{3/2} int_0^inf erf(t)^3 / t^2 dt  (Gamma trick, s = t^2)
    double total = 0.0;
    double lo = 0.0;
    for (double hi : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 40.0}) {
        double x[kGn], w[kGn];
        gl16(lo, hi, x, w);
        for (int i = 0; i < kGn; ++i) {
            double t = x[i];
            double f = (t < 1e-12) ? 0.0 : std::pow(std::erf(t), 3) / (t * t);
            total += w[i] * f;
        }
        lo = hi;
    }
    total += 1.0 / 40.0;  // erf ~ 1 beyond
    return 2.0 * std::pow(M_PI, 1.5) * total;
}

double inv_one_minus_phi(double t1, double t2, double t3) {
    return 1.0 / (1.0 - (std::cos(t1) + std::cos(t2) + std::cos(t3)) / 3.0);
}

double box_integral(double lo1, double hi1, double lo2, double hi2, double lo3, double hi3,
                    bool subtract_pole) {
    double x1[kGn], w1[kGn], x2[kGn], w2[kGn], x3[kGn], w3[kGn];
    gl16(lo1, hi1, x1, w1);
    gl16(lo2, hi2, x2, w2);
    gl16(lo3, hi3, x3, w3);
    double acc = 0.0;
    for (int i = 0; i < kGn; ++i)
        for (int j = 0; j < kGn; ++j)
            for (int k = 0; k < kGn; ++k) {
                double f = inv_one_minus_phi(x1[i], x2[j], x3[k]);
                if (subtract_pole) {
                    double r2 = x1[i] * x1[i] + x2[j] * x2[j] + x3[k] * x3[k];
                    f -= 6.0 / r2;
                }
                acc += w1[i] * w2[j] * w3[k] * f;
            }
    return acc;
}

double watson_oracle_g0() {
    const double a = 0.05;
    // positive octant; integrand even in each coordinate
    double acc = 0.0;
    double r = a;
    while (r < M_PI) {
        double R = std::min(2.0 * r, M_PI);
        acc += box_integral(r, R, 0, R, 0, R, false);
        acc += box_integral(0, r, r, R, 0, R, false);
        acc += box_integral(0, r, 0, r, r, R, false);
        r = R;
    }
    // inner cube: pole in closed form + bounded remainder numerically
    acc += box_integral(0, a, 0, a, 0, a, true);
    double inner_pole = 6.0 * a * c2_constant() / 8.0;  // positive octant share
    acc += inner_pole;
    return 8.0 * acc / std::pow(2.0 * M_PI, 3);
}

// Dirichlet solve of (I - P) u = delta_0 on a box, via conjugate gradients.
std::vector<double> killed_green_d3(long R) {
    LatticeBox box(3, R);
    const std::size_t n = box.num_sites();
    std::vector<std::vector<std::size_t>> nb(n);
    for (std::size_t i = 0; i < n; ++i) nb[i] = box.neighbors(i);
    auto apply = [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (auto j : nb[i]) s += v[j];
            out[i] = v[i] - s / 6.0;
        }
    };
    std::vector<double> u(n, 0.0), rvec(n, 0.0), p(n), Ap(n);
    rvec[box.index_of(Site{0, 0, 0})] = 1.0;
    p = rvec;
    double rr = 1.0;
    for (int it = 0; it < 4000 && rr > 1e-20; ++it) {
        apply(p, Ap);
        double pAp = 0.0;
        for (std::size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
        double alpha = rr / pAp;
        double rr_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            u[i] += alpha * p[i];
            rvec[i] -= alpha * Ap[i];
            rr_new += rvec[i] * rvec[i];
        }
        double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = rvec[i] + beta * p[i];
    }
    return u;
}

}  // namespace

TEST_CASE("G(0) in d=3 against the singularity-subtracted Fourier oracle") {
    double oracle = watson_oracle_g0();
    double g0 = walk_green(3, Site{0, 0, 0});
    CHECK(g0 == doctest::Approx(1.516386).epsilon(1e-5));
    CHECK(std::abs(g0 - oracle) < 2e-5);
    CHECK(g0 > 1.0);
}

TEST_CASE("harmonicity G(x) = delta + (1/2d) sum G(y) on |x| <= 5") {
    for (int d : {3, 4}) {
        for (long x1 = 0; x1 <= 5; ++x1)
            for (long x2 = 0; x2 <= x1; ++x2) {
                Site x = Site::zero(d);
                x.c[0] = x1;
                x.c[1] = x2;
                double nbsum = 0.0;
                for (int i = 0; i < d; ++i)
                    for (long step : {-1L, 1L}) {
                        Site y = x;
                        y.c[i] += step;
                        nbsum += walk_green(d, y);
                    }
                double expect = (x.norm_inf() == 0 ? 1.0 : 0.0) + nbsum / (2 * d);
                CHECK(std::abs(walk_green(d, x) - expect) < 1e-8);
            }
    }
}

TEST_CASE("G is even and G(e1) = G(0) - 1") {
    double g0 = walk_green(3, Site{0, 0, 0});
    CHECK(walk_green(3, Site{1, 0, 0}) == doctest::Approx(g0 - 1.0).epsilon(1e-10));
    CHECK(walk_green(3, Site{-2, 1, 3}) == doctest::Approx(walk_green(3, Site{2, -1, -3})));
    CHECK(walk_green(3, Site{1, 0, 0}) == doctest::Approx(0.516386).epsilon(1e-4));
}

TEST_CASE("asymptotic constants") {
    auto [c3, a3] = green_asymptotic(3);
    CHECK(c3 == doctest::Approx(3.0 / (2.0 * M_PI)).epsilon(1e-12));
    CHECK(a3 == 1);
    auto [c4, a4] = green_asymptotic(4);
    CHECK(c4 == doctest::Approx(2.0 / (M_PI * M_PI)).epsilon(1e-12));
    CHECK(a4 == 2);
    CHECK_THROWS(green_asymptotic(2));
}

TEST_CASE("large-|x| fit of c_3 within 1%") {
    auto [c3, alpha] = green_asymptotic(3);
    double num = 0.0, den = 0.0;
    std::vector<Site> dirs = {Site{1, 0, 0}, Site{1, 1, 0}, Site{1, 1, 1}, Site{2, 1, 0}};
    for (const auto& dir : dirs)
        for (long k = 20; k <= 28; k += 2) {
            Site x = Site::zero(3);
            for (int i = 0; i < 3; ++i) x.c[i] = dir.c[i] * k;
            if (x.norm_inf() > 60) continue;
            double r = x.norm2();
            num += walk_green(3, x) * std::pow(r, alpha);
            den += 1.0;
        }
    double fit = num / den;
    CHECK(std::abs(fit - c3) / c3 < 0.01);
}

TEST_CASE("remainder |G - c_3/|x|| decays like |x|^{-3}") {
    auto [c3, alpha] = green_asymptotic(3);
    auto scaled_resid = [&](long k) {
        Site x{k, 0, 0};
        double r = x.norm2();
        return std::abs(walk_green(3, x) - c3 / r) * r * r * r;
    };
    double near = 0.0, far = 0.0;
    for (long k = 10; k <= 20; ++k) near = std::max(near, scaled_resid(k));
    for (long k = 40; k <= 60; k += 4) far = std::max(far, scaled_resid(k));
    CHECK(far < 1.5 * near);  // scaled remainder stays bounded
    CHECK(near < 1.0);
}

TEST_CASE("Dirichlet linear-solver oracle agrees on |x| <= 5") {
    long R = 20;
    auto u = killed_green_d3(R);
    LatticeBox box(3, R);
    for (long x1 = 0; x1 <= 5; x1 += 2)
        for (long x2 = 0; x2 <= x1; x2 += 2) {
            Site x{x1, x2, 0};
            double diff = std::abs(walk_green(3, x) - u[box.index_of(x)]);
            CHECK(diff < 0.05);  // boundary truncation bias ~ c_3 / R
        }
}

TEST_CASE("spectral density") {
    CHECK(spectral_density(3, {M_PI, M_PI, M_PI}) ==
          doctest::Approx(std::pow(2 * M_PI, -3) / 2.0).epsilon(1e-12));
    CHECK_THROWS(spectral_density(3, {0.0, 0.0, 0.0}));
    // diverges like c/|theta|^2 near zero
    double v1 = spectral_density(3, {0.01, 0, 0});
    double v2 = spectral_density(3, {0.02, 0, 0});
    CHECK(v1 / v2 == doctest::Approx(4.0).epsilon(0.01));
    // minimum over the torus at (pi,...,pi)
    double mn = spectral_density(3, {M_PI, M_PI, M_PI});
    RngStream rng(7, 0);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> th = {rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI, M_PI),
                                  rng.uniform(-M_PI, M_PI)};
        CHECK(spectral_density(3, th) >= mn - 1e-15);
    }
}

TEST_CASE("covariance matrices") {
    auto gff3 = CovarianceModel::gff(3);
    auto K1 = gff3.covariance({Site{0, 0, 0}});
    CHECK(K1(0, 0) == doctest::Approx(1.516386).epsilon(1e-5));
    auto K2 = gff3.covariance({Site{0, 0, 0}, Site{1, 0, 0}});
    CHECK(K2(0, 1) == doctest::Approx(0.516386).epsilon(1e-4));
    CHECK(K2(0, 1) == K2(1, 0));

    auto iid = CovarianceModel::iid(3);
    auto I5 = iid.covariance({Site{0, 0, 0}, Site{1, 0, 0}, Site{4, 4, 4}});
    CHECK(I5.isIdentity(1e-15));

    CHECK_THROWS(gff3.covariance({Site{0, 0, 0}, Site{0, 0, 0}}));
    CHECK(gff3.kappa2() == doctest::Approx(0.5));
    CHECK(iid.kappa2() == doctest::Approx(1.0));

    // restrictions are SPD with min eigenvalue >= kappa^2
    std::vector<Site> sites;
    for (long a = 0; a < 3; ++a)
        for (long b = 0; b < 3; ++b) sites.push_back(Site{a, b, 0});
    auto K = gff3.covariance(sites);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= 0.5 - 1e-9);

    // explicit SPD validation
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS(CovarianceModel::explicit_spd({Site{0}, Site{1}}, bad));
}
