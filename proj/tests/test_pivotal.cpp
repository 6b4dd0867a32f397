#include "gfflab/pivotal.hpp"

#include <cmath>

#include "doctest.h"
#include "gfflab/green.hpp"

using namespace gff;

namespace {

// one-factor SPD model on the 3x3 grid in d = 2
CovarianceModel grid3x3_model(double eps = 0.0) {
    std::vector<Site> sites;
    for (long a = -1; a <= 1; ++a)
        for (long b = -1; b <= 1; ++b) sites.push_back(Site{a, b});
    Eigen::VectorXd diag(9), load(9);
    for (int i = 0; i < 9; ++i) {
        diag[i] = 0.8 + 0.05 * i + eps * eps;
        load[i] = 0.5 + 0.03 * i;
    }
    return CovarianceModel::one_factor(sites, diag, load);
}

std::vector<Site> plaquette3() {
    return {Site{0, 0, 0}, Site{1, 0, 0}, Site{0, 1, 0}, Site{1, 1, 0}};
}

}  // namespace

TEST_CASE("single-site domain: Xi vanishes identically, so P = 0 exactly") {
    auto g = graph_of_sites({Site{0, 0, 0}});
    PivotalLab lab(CovarianceModel::gff(3), g);
    auto xi = ClusterCountFunctional::standard();
    RngStream rng(1, 0);
    auto e = lab.intensity(xi, 0.5, {Site{0, 0, 0}}, 200, rng);
    CHECK(e.value == 0.0);
    CHECK(e.se == 0.0);
    CHECK_THROWS(lab.intensity(xi, 0.5, {Site{0, 0, 0}}, 0, rng));  // zero budget
}

TEST_CASE("permutation invariance: P(y1,y2) and P(y2,y1) coincide sample-by-sample") {
    LatticeBox box(2, 2);
    PivotalLab lab(grid3x3_model(), graph_of_sites(grid3x3_model().fixed_sites()));
    auto xi = ClusterCountFunctional::free_count();
    RngStream rng(2, 0);
    Site a{0, 0}, b{1, 0};
    auto ests = lab.intensity_batch(xi, 0.3, {{a, b}, {b, a}}, 4000, rng);
    CHECK(ests[0].value == ests[1].value);
    CHECK(ests[0].se == ests[1].se);
    (void)box;
}

TEST_CASE("derivative identity: P matches mixed differences of the smoothed mean") {
    // W = f + eps Z has the one-factor form with inflated diagonal, so the
    // oracle mean is exact and its nu-derivatives equal the pivotal
    // intensities of W up to sign: P(nu; y_1..y_m) = (-1)^m d^m mean.
    double eps = 0.05;
    auto base = grid3x3_model(0.0);
    auto inflated = grid3x3_model(eps);
    auto g = graph_of_sites(base.fixed_sites());
    auto xi = ClusterCountFunctional::free_count();
    SmoothedFunctionalOracle oracle(base, g, xi, eps);
    PivotalLab lab(inflated, g);
    double level = 0.4;
    Eigen::VectorXd nu = Eigen::VectorXd::Constant(9, level);
    RngStream rng(3, 0);

    // order 1 at the centre (index of (0,0) in the site list)
    std::size_t yc = 4;
    Site sc = base.fixed_sites()[yc];
    double d1 = oracle.derivative(yc, nu);
    double d1_fd = oracle.mixed_difference({yc}, nu, 1e-4);
    CHECK(d1 == doctest::Approx(d1_fd).epsilon(1e-6));
    auto e1 = lab.intensity(xi, level, {sc}, 300000, rng);
    CHECK(std::abs(e1.value - (-d1)) < std::max(0.03 * std::abs(d1), 3.5 * e1.se));

    // order 2 at two distinct points
    std::size_t y2 = 5;
    Site s2 = base.fixed_sites()[y2];
    double d2 = oracle.mixed_difference({yc, y2}, nu, 0.02);
    auto e2 = lab.intensity(xi, level, {sc, s2}, 300000, rng);
    CHECK(std::abs(e2.value - d2) < std::max(0.03 * std::abs(d2), 3.5 * e2.se));

    // order 3, adjacent triple
    std::size_t y3 = 1;
    Site s3 = base.fixed_sites()[y3];
    double d3 = oracle.mixed_difference({yc, y2, y3}, nu, 0.05);
    auto e3 = lab.intensity(xi, level, {sc, s2, s3}, 600000, rng);
    CHECK(std::abs(e3.value - (-d3)) < std::max(0.03 * std::abs(d3), 3.5 * e3.se));
}

TEST_CASE("repeated points carry the conditional Hermite factor") {
    // P(y, y) = d^2/dnu(y)^2 of the mean; checked against the oracle
    double eps = 0.08;
    auto base = grid3x3_model(0.0);
    auto inflated = grid3x3_model(eps);
    auto g = graph_of_sites(base.fixed_sites());
    auto xi = ClusterCountFunctional::free_count();
    SmoothedFunctionalOracle oracle(base, g, xi, eps);
    PivotalLab lab(inflated, g);
    double level = 0.2;
    Eigen::VectorXd nu = Eigen::VectorXd::Constant(9, level);
    std::size_t yc = 4;
    Site sc = base.fixed_sites()[yc];
    // second difference in the same coordinate
    Eigen::VectorXd up = nu, dn = nu;
    up[4] += 0.02;
    dn[4] -= 0.02;
    double d2 = (oracle.mean(up) - 2 * oracle.mean(nu) + oracle.mean(dn)) / (0.02 * 0.02);
    RngStream rng(4, 0);
    auto e = lab.intensity(xi, level, {sc, sc}, 400000, rng);
    CHECK(std::abs(e.value - d2) < std::max(0.04 * std::abs(d2), 4.0 * e.se));
}

TEST_CASE("joint intensity factorizes at t = 0") {
    auto model = CovarianceModel::gff(3);
    auto g = graph_of_sites(plaquette3());
    PivotalLab lab(model, g);
    auto xi = ClusterCountFunctional::free_count();
    RngStream rng(5, 0);
    double level = 0.5;
    Site x{0, 0, 0}, y{1, 1, 0};
    auto joint = lab.joint_intensity(xi, level, {x}, {y}, 0.0, 200000, rng);
    auto px = lab.intensity(xi, level, {x}, 200000, rng);
    auto py = lab.intensity(xi, level, {y}, 200000, rng);
    double prod = px.value * py.value;
    double se = std::abs(px.value) * py.se + std::abs(py.value) * px.se + joint.se;
    CHECK(std::abs(joint.value - prod) < 3 * se);

    // continuity in t: adjacent grid estimates within Monte Carlo noise
    auto j1 = lab.joint_intensity(xi, level, {x}, {y}, 0.48, 150000, rng);
    auto j2 = lab.joint_intensity(xi, level, {x}, {y}, 0.52, 150000, rng);
    CHECK(std::abs(j1.value - j2.value) < 4 * (j1.se + j2.se) + 0.02 * std::abs(j1.value));

    CHECK_THROWS(lab.joint_intensity(xi, level, {x}, {y}, 1.0, 10, rng));
}

TEST_CASE("tail variance at m = 1 equals Var[Xi] on the 2x2 plaquette") {
    auto model = CovarianceModel::gff(3);
    auto g = graph_of_sites(plaquette3());
    PivotalLab lab(model, g);
    auto xi = ClusterCountFunctional::free_count();
    double level = 0.4;
    RngStream rng(6, 0);
    double tv = lab.tail_variance(xi, level, 1, 10, 40000, rng);

    // direct Monte Carlo variance of Xi(f - level)
    ExactSampler s(model, plaquette3());
    std::size_t n = 400000;
    double sum = 0, sum2 = 0;
    std::vector<std::uint8_t> mask(4);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd f = s.sample(rng);
        for (int k = 0; k < 4; ++k) mask[static_cast<std::size_t>(k)] = f[k] > level ? 1 : 0;
        double v = xi.value(g, mask.data());
        sum += v;
        sum2 += v * v;
    }
    double mean = sum / n;
    double direct = sum2 / n - mean * mean;
    CHECK(std::abs(tv - direct) / direct < 0.05);
}

TEST_CASE("tail variance is monotone in m and consistent with Var[Q_1]") {
    auto model = CovarianceModel::gff(3);
    auto g = graph_of_sites(plaquette3());
    PivotalLab lab(model, g);
    auto xi = ClusterCountFunctional::free_count();
    double level = 0.4;
    RngStream rng(7, 0);
    double t1 = lab.tail_variance(xi, level, 1, 8, 20000, rng);
    double t2 = lab.tail_variance(xi, level, 2, 8, 8000, rng);
    CHECK(t2 <= t1 * 1.10);  // orthogonal decomposition, up to MC noise

    // Var[Q_1] from single-point intensities: Q_1 = sum_x f(x) P(x)
    IntensityTable table(1);
    auto ests = lab.intensity_batch(xi, level,
                                    {{plaquette3()[0]}, {plaquette3()[1]}, {plaquette3()[2]},
                                     {plaquette3()[3]}},
                                    200000, rng);
    for (int i = 0; i < 4; ++i) table.set({i}, ests[static_cast<std::size_t>(i)].value);
    ChaosComponentEvaluator q1(lab.covariance(), table);
    double var_q1 = q1.variance();
    CHECK(std::abs((t1 - var_q1) - t2) < 0.12 * t1);  // decomposition identity
}

TEST_CASE("chaos components: centred, orthogonal, variance formula") {
    auto model = CovarianceModel::gff(3);
    auto sites = plaquette3();
    auto g = graph_of_sites(sites);
    PivotalLab lab(model, g);
    auto xi = ClusterCountFunctional::free_count();
    double level = 0.3;
    RngStream rng(8, 0);

    IntensityTable t1(1), t2(2);
    std::vector<std::vector<Site>> singles, pairs;
    for (const auto& s : sites) singles.push_back({s});
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a; b < 4; ++b) pairs.push_back({sites[a], sites[b]});
    auto e1 = lab.intensity_batch(xi, level, singles, 150000, rng);
    auto e2 = lab.intensity_batch(xi, level, pairs, 150000, rng);
    for (std::size_t i = 0; i < singles.size(); ++i) t1.set({static_cast<int>(i)}, e1[i].value);
    std::size_t pi = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = a; b < 4; ++b) t2.set({a, b}, e2[pi++].value);

    ChaosComponentEvaluator q1(lab.covariance(), t1), q2(lab.covariance(), t2);

    ExactSampler s(model, sites);
    std::size_t n = 200000;
    double s1 = 0, s1sq = 0, s2 = 0, s2sq = 0, s12 = 0, sxi = 0, sxiq = 0, sx1 = 0;
    std::vector<std::uint8_t> mask(4);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd f = s.sample(rng);
        double a = q1.eval(f), b = q2.eval(f);
        for (int k = 0; k < 4; ++k) mask[static_cast<std::size_t>(k)] = f[k] > level ? 1 : 0;
        double xv = xi.value(g, mask.data());
        s1 += a;
        s1sq += a * a;
        s2 += b;
        s2sq += b * b;
        s12 += a * b;
        sxi += xv;
        sxiq += xv * xv;
        sx1 += xv * a;
    }
    double m1 = s1 / n, m2 = s2 / n;
    double v1 = s1sq / n - m1 * m1, v2 = s2sq / n - m2 * m2;
    double cov12 = s12 / n - m1 * m2;
    // zero means (3 SE)
    CHECK(std::abs(m1) < 3 * std::sqrt(v1 / n) + 1e-6);
    CHECK(std::abs(m2) < 3 * std::sqrt(v2 / n) + 1e-6);
    // orthogonality of different orders (3 SE on the product moment)
    CHECK(std::abs(cov12) < 3 * std::sqrt(v1 * v2 / n) + 1e-6);
    // variance formula vs empirical variance (4 SE-ish)
    CHECK(std::abs(v1 - q1.variance()) < 4 * v1 * std::sqrt(2.0 / n) + 0.01 * v1);
    CHECK(std::abs(v2 - q2.variance()) < 4 * v2 * std::sqrt(2.0 / n) + 0.03 * v2);
    // Q_1 carries the covariance with Xi: E[Xi Q_1] = Var[Q_1]
    double mxi = sxi / n;
    double cxi1 = sx1 / n - mxi * m1;
    CHECK(std::abs(cxi1 - q1.variance()) < 0.05 * q1.variance() + 3 * std::sqrt(v1 * (sxiq / n - mxi * mxi) / n));
}

TEST_CASE("constant single-point table: variance reduces to p^2 sum K") {
    auto model = CovarianceModel::gff(3);
    LatticeBox box(3, 1);
    auto g = graph_of_box(box);
    Eigen::MatrixXd K = model.covariance(g.coords);
    double p = 0.37;
    IntensityTable t1(1);
    for (int i = 0; i < static_cast<int>(g.n); ++i) t1.set({i}, p);
    ChaosComponentEvaluator q(K, t1);
    CHECK(q.variance() == doctest::Approx(p * p * K.sum()).epsilon(1e-12));
}

TEST_CASE("stationary proxy: symmetry, reflection, decay, flags") {
    StationaryPivotalLab lab(3, 5);
    RngStream rng(9, 0);
    double level = 1.0;
    auto ests = lab.intensity_batch(
        level,
        {{Site{0, 0, 0}, Site{1, 0, 0}}, {Site{0, 0, 0}, Site{-1, 0, 0}},
         {Site{0, 0, 0}, Site{2, 0, 0}}, {Site{0, 0, 0}, Site{0, 1, 0}}},
        12000, rng);
    // reflection and coordinate-permutation symmetry within 2 joint SE
    CHECK(std::abs(ests[0].value - ests[1].value) < 2.5 * (ests[0].se + ests[1].se));
    CHECK(std::abs(ests[0].value - ests[3].value) < 2.5 * (ests[0].se + ests[3].se));
    // decay in the offset at an off-critical level
    CHECK(std::abs(ests[2].value) < std::abs(ests[0].value) + 2.5 * (ests[0].se + ests[2].se));
    // sensitivity diagnostic was populated
    CHECK(ests[0].sensitivity >= 0.0);
    CHECK(ests[0].window_R == 5);
    CHECK(ests[0].flagged_fraction >= 0.0);
    CHECK(ests[0].flagged_fraction <= 1.0);
    CHECK_THROWS(lab.intensity(level, {Site{5, 0, 0}}, 100, rng));  // not centred
}

TEST_CASE("half-space intensity approaches the bulk value for large k") {
    RngStream rng(10, 0);
    double level = 0.0;
    long W = 5;
    auto bulk_lab = StationaryPivotalLab(3, W);
    auto bulk = bulk_lab.intensity(level, {Site{0, 0, 0}}, 20000, rng);
    auto deep = halfspace_pivotal_intensity(3, level, W, W, 20000, rng);
    auto face = halfspace_pivotal_intensity(3, level, 0, W, 20000, rng);
    // k = W (the window centre) should look like bulk within noise
    CHECK(std::abs(deep.value - bulk.value) < 3 * (deep.se + bulk.se));
    // k = 0 differs from bulk beyond 2 SE (boundary effect exists)
    CHECK(std::abs(face.value - bulk.value) > 2 * (face.se + bulk.se));
    CHECK_THROWS(halfspace_pivotal_intensity(3, level, 9, 5, 100, rng));
}

TEST_CASE("truncated intensity: support cutoff and truncation-inactive limit") {
    RngStream rng(11, 0);
    double level = 0.6;
    // diam > r + 2: exact zero, no sampling
    auto zero = truncated_pivotal_intensity(3, level, {Site{0, 0, 0}, Site{7, 0, 0}}, 2, 5, 100, rng);
    CHECK(zero.value == 0.0);
    CHECK(zero.budget == 0);

    // r at least the window diameter: equals the plain intensity (2-3 joint SE)
    long W = 4;
    auto trunc = truncated_pivotal_intensity(3, level, {Site{0, 0, 0}}, 2 * W + 1, W, 30000, rng);
    PivotalLab plain(CovarianceModel::gff(3), graph_of_box(LatticeBox(3, W)));
    auto ref = plain.intensity(ClusterCountFunctional::standard(), level, {Site{0, 0, 0}}, 30000,
                               rng);
    CHECK(std::abs(trunc.value - ref.value) < 3 * (trunc.se + ref.se));
}

TEST_CASE("truncated r = 0 intensity matches the exact neighbourhood enumeration (iid)") {
    // isolated-site count intensity on the iid model: d_y Xi_{<=0} depends on
    // the radius-2 neighbourhood of y only, so exact enumeration is available
    LatticeBox box(2, 3);
    auto g = graph_of_box(box);
    auto iid = CovarianceModel::iid(2);
    auto xi = ClusterCountFunctional::truncated(0);
    double level = 0.3;

    // relevant sites: neighbours of the centre and their neighbours
    Site centre{0, 0};
    std::vector<std::size_t> shell;
    for (std::size_t nb : box.neighbors(centre)) {
        shell.push_back(nb);
        for (std::size_t nb2 : box.neighbors(nb))
            if (nb2 != box.index_of(centre)) shell.push_back(nb2);
    }
    std::sort(shell.begin(), shell.end());
    shell.erase(std::unique(shell.begin(), shell.end()), shell.end());
    double p_above = 1.0 - 0.5 * std::erfc(-level / std::sqrt(2.0));  // P[f > level]... see below
    // for the iid standard normal: P[f > l] = 1 - Phi(l)
    p_above = 0.5 * std::erfc(level / std::sqrt(2.0));

    double exact = 0.0;
    std::vector<std::uint8_t> mask(g.n, 0);
    std::vector<std::int32_t> yb = {static_cast<std::int32_t>(box.index_of(centre))};
    for (std::size_t cfg = 0; cfg < (std::size_t(1) << shell.size()); ++cfg) {
        double prob = 1.0;
        for (std::size_t i = 0; i < shell.size(); ++i) {
            bool in = (cfg >> i) & 1;
            mask[shell[i]] = in ? 1 : 0;
            prob *= in ? p_above : (1 - p_above);
        }
        exact += prob * iterated_derivative(xi, g, mask, yb);
    }
    exact *= std::exp(-0.5 * level * level) / std::sqrt(2 * M_PI);  // pinned density

    RngStream rng(12, 0);
    PivotalLab lab(iid, g);
    auto est = lab.intensity(xi, level, {centre}, 150000, rng);
    CHECK(std::abs(est.value - exact) < 4 * est.se);
}

TEST_CASE("smoothed functional oracle basics") {
    // 1-site domain: the boundary-excluding count vanishes identically
    auto g1 = graph_of_sites({Site{0, 0, 0}});
    auto xi = ClusterCountFunctional::standard();
    SmoothedFunctionalOracle o1(CovarianceModel::gff(3), g1, xi, 0.1);
    CHECK(o1.mean_level(0.7) == 0.0);

    // 2-site domain embedded in Z^3, free count: matches direct MC
    std::vector<Site> two = {Site{0, 0, 0}, Site{1, 0, 0}};
    auto g2 = graph_of_sites(two);
    auto gff3 = CovarianceModel::gff(3);
    auto xif = ClusterCountFunctional::free_count();
    double eps = 0.2, level = 0.5;
    SmoothedFunctionalOracle o2(gff3, g2, xif, eps);
    double oracle_mean = o2.mean_level(level);

    ExactSampler s(gff3, two);
    RngStream rng(13, 0);
    std::size_t n = 300000;
    double sum = 0, sum2 = 0;
    std::vector<std::uint8_t> mask(2);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd f = s.sample(rng);
        f[0] += eps * rng.normal();
        f[1] += eps * rng.normal();
        mask[0] = f[0] > level;
        mask[1] = f[1] > level;
        double v = xif.value(g2, mask.data());
        sum += v;
        sum2 += v * v;
    }
    double mc = sum / n;
    double se = std::sqrt((sum2 / n - mc * mc) / n);
    CHECK(std::abs(oracle_mean - mc) < 3.5 * se);

    // eps -> 0 recovers the unsmoothed mean
    SmoothedFunctionalOracle o3(gff3, g2, xif, 1e-4);
    double sum0 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd f = s.sample(rng);
        mask[0] = f[0] > level;
        mask[1] = f[1] > level;
        sum0 += xif.value(g2, mask.data());
    }
    CHECK(std::abs(o3.mean_level(level) - sum0 / n) < 0.01);

    CHECK_THROWS(SmoothedFunctionalOracle(gff3, graph_of_box(LatticeBox(3, 2)), xif, 0.1));
}

TEST_CASE("de-pinning bound holds with the explicit constant") {
    RngStream rng(14, 0);
    int violations = 0;
    for (int inst = 0; inst < 200; ++inst) {
        int nx = 1 + static_cast<int>(rng.uniform_index(3));
        int m = 1 + static_cast<int>(rng.uniform_index(2));
        int dim = nx + m;
        // random correlation matrix (unit variances)
        Eigen::MatrixXd A(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) A(i, j) = rng.normal();
        Eigen::MatrixXd K = A * A.transpose() / dim + 0.3 * Eigen::MatrixXd::Identity(dim, dim);
        Eigen::VectorXd dinv = K.diagonal().array().sqrt().inverse();
        K = dinv.asDiagonal() * K * dinv.asDiagonal();

        double ell = rng.uniform(-0.5, 1.0);
        Eigen::VectorXd thr(nx);
        for (int i = 0; i < nx; ++i) thr[i] = rng.uniform(-1.0, 1.0);

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
        double lmin = es.eigenvalues().minCoeff();

        // conditional sampling of X | Y = ell
        Eigen::MatrixXd Kxy = K.topRightCorner(nx, m);
        Eigen::MatrixXd Kyy = K.bottomRightCorner(m, m);
        Eigen::MatrixXd Kxx = K.topLeftCorner(nx, nx);
        Eigen::VectorXd ones = Eigen::VectorXd::Constant(m, ell);
        Eigen::VectorXd mu = Kxy * Kyy.llt().solve(ones);
        Eigen::MatrixXd S = Kxx - Kxy * Kyy.llt().solve(Kxy.transpose());
        Eigen::MatrixXd Ls = S.llt().matrixL();
        std::size_t n = 20000;
        double hits = 0;
        Eigen::VectorXd z(nx);
        for (std::size_t i = 0; i < n; ++i) {
            for (int j = 0; j < nx; ++j) z[j] = rng.normal();
            Eigen::VectorXd x = mu + Ls * z;
            bool in = true;
            for (int j = 0; j < nx; ++j)
                if (x[j] <= thr[j]) in = false;
            if (in) hits += 1;
        }
        double cond_prob = hits / double(n);
        double phiY = gaussian_density(Kyy, ones);
        double lhs = cond_prob * phiY;

        // joint P = P[A, Y <= ell]
        Eigen::MatrixXd L = K.llt().matrixL();
        double joint = 0;
        Eigen::VectorXd zf(dim);
        for (std::size_t i = 0; i < n; ++i) {
            for (int j = 0; j < dim; ++j) zf[j] = rng.normal();
            Eigen::VectorXd v = L * zf;
            bool in = true;
            for (int j = 0; j < nx; ++j)
                if (v[j] <= thr[j]) in = false;
            for (int j = 0; j < m; ++j)
                if (v[nx + j] > ell) in = false;
            if (in) joint += 1;
        }
        double P = std::max(joint / double(n), 0.5 / double(n));
        double c = 2.0 * std::exp(m * (std::abs(ell) + 4.5));
        double bound = c * std::pow(lmin, -m) * P *
                       std::max(1.0, std::pow(std::log(1.0 / P), 0.5 * m));
        double se_lhs = phiY * std::sqrt(cond_prob * (1 - cond_prob) / n);
        if (lhs > bound + 4 * se_lhs) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("mu_derivative smoke: symmetry at level 0") {
    RngStream rng(15, 0);
    auto est = mu_derivative(3, 0.0, 1, 4, 0, 8000, rng);
    CHECK(std::abs(est.value) < 4 * est.se + 1e-12);
    auto est2 = mu_derivative(3, 0.0, 2, 4, 1, 1500, rng);
    CHECK(est2.m == 2);
    CHECK(std::isfinite(est2.value));
    CHECK(est2.shell_tail_bound >= 0.0);
}
