#include "gfflab/pivotal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gff {

namespace {

constexpr int kOrthantNodes = 96;

// Gauss-Legendre nodes on [0,1] via Newton iteration on Legendre polynomials.
void gauss_legendre_01(int n, std::vector<double>& x, std::vector<double>& w) {
    x.resize(static_cast<std::size_t>(n));
    w.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double p0 = 0, p1 = 0;
        for (int it = 0; it < 100; ++it) {
            p0 = 1.0;
            p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) * t * p1 - j * p2) / (j + 1);
            }
            double dp = n * (t * p0 - p1) / (t * t - 1.0);
            double dt = p0 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        p1 = 0.0;
        p0 = 1.0;
        for (int j = 0; j < n; ++j) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) * t * p1 - j * p2) / (j + 1);
        }
        double dp = n * (t * p0 - p1) / (t * t - 1.0);
        x[static_cast<std::size_t>(i)] = 0.5 * (1.0 - t);
        w[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
}

std::vector<int> distinct_first_occurrence(const std::vector<Site>& y, std::vector<int>& mult_out,
                                           std::vector<Site>& ybar_out) {
    ybar_out.clear();
    mult_out.clear();
    std::vector<int> which(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        int found = -1;
        for (std::size_t j = 0; j < ybar_out.size(); ++j)
            if (ybar_out[j] == y[i]) {
                found = static_cast<int>(j);
                break;
            }
        if (found < 0) {
            found = static_cast<int>(ybar_out.size());
            ybar_out.push_back(y[i]);
            mult_out.push_back(0);
        }
        mult_out[static_cast<std::size_t>(found)] += 1;
        which[i] = found;
    }
    return which;
}

}  // namespace

struct PivotalLab::Target {
    std::vector<Site> y;
    std::vector<Site> ybar;
    std::vector<int> ybar_idx;
    std::vector<int> mult;
    Eigen::MatrixXd kriging;  // n x m
    Eigen::VectorXd pinvals;
    double pin_density = 0.0;
    bool has_repeats = false;
    Poly hermite{0};
    Eigen::MatrixXd reg_rest;  // m x (n - m)
    std::vector<int> rest_idx;
    std::vector<std::size_t> nbr_probe;  // neighbours of pins, for the stabilisation flag
};

PivotalLab::PivotalLab(const CovarianceModel& model, SiteGraph graph)
    : model_(model), graph_(std::move(graph)) {
    sampler_ = std::make_unique<ExactSampler>(model_, graph_.coords);
}

PivotalLab::Target PivotalLab::resolve(const std::vector<Site>& y, double level) const {
    if (y.empty()) throw std::invalid_argument("pivotal_intensity: empty point tuple");
    Target t;
    t.y = y;
    distinct_first_occurrence(y, t.mult, t.ybar);
    for (const auto& s : t.ybar) {
        int idx = -1;
        for (std::size_t i = 0; i < graph_.n; ++i)
            if (graph_.coords[i] == s) {
                idx = static_cast<int>(i);
                break;
            }
        if (idx < 0) throw std::invalid_argument("pivotal_intensity: point outside domain");
        t.ybar_idx.push_back(idx);
    }
    const auto n = static_cast<Eigen::Index>(graph_.n);
    const auto m = static_cast<Eigen::Index>(t.ybar_idx.size());
    const Eigen::MatrixXd& K = sampler_->covariance();
    Eigen::MatrixXd Kpp(m, m);
    Eigen::MatrixXd Knp(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        Knp.col(j) = K.col(t.ybar_idx[static_cast<std::size_t>(j)]);
        for (Eigen::Index i = 0; i < m; ++i)
            Kpp(i, j) = K(t.ybar_idx[static_cast<std::size_t>(i)], t.ybar_idx[static_cast<std::size_t>(j)]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Kpp);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("pivotal_intensity: degenerate pin covariance");
    t.kriging = llt.solve(Knp.transpose()).transpose();
    t.pinvals = Eigen::VectorXd::Constant(m, level);
    t.pin_density = gaussian_density(Kpp, t.pinvals);
    t.has_repeats = static_cast<std::size_t>(m) != y.size();
    if (t.has_repeats) {
        // Hermite factor data: Cov(f(ybar) | f(rest) = 0) plus the regression
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::find(t.ybar_idx.begin(), t.ybar_idx.end(), static_cast<int>(i)) ==
                t.ybar_idx.end())
                t.rest_idx.push_back(static_cast<int>(i));
        const auto nr = static_cast<Eigen::Index>(t.rest_idx.size());
        Eigen::MatrixXd Krr(nr, nr), Kpr(m, nr);
        for (Eigen::Index a = 0; a < nr; ++a) {
            for (Eigen::Index b = 0; b < nr; ++b)
                Krr(a, b) = K(t.rest_idx[static_cast<std::size_t>(a)], t.rest_idx[static_cast<std::size_t>(b)]);
            for (Eigen::Index i = 0; i < m; ++i)
                Kpr(i, a) = K(t.ybar_idx[static_cast<std::size_t>(i)], t.rest_idx[static_cast<std::size_t>(a)]);
        }
        Eigen::LLT<Eigen::MatrixXd> lltr(Krr);
        t.reg_rest = lltr.solve(Kpr.transpose()).transpose();
        Eigen::MatrixXd C = Kpp - t.reg_rest * Kpr.transpose();
        std::vector<int> alpha_tilde;
        for (int mu : t.mult) alpha_tilde.push_back(mu - 1);
        t.hermite = hermite_multivariate_poly(C, MultiIndex(alpha_tilde));
    }
    for (int p : t.ybar_idx)
        for (const std::int32_t* q = graph_.nbr_begin(static_cast<std::size_t>(p));
             q != graph_.nbr_end(static_cast<std::size_t>(p)); ++q)
            t.nbr_probe.push_back(static_cast<std::size_t>(*q));
    return t;
}

double PivotalLab::sample_value(const Target& t, const LevelSetFunctional& xi,
                                const Eigen::VectorXd& unconditional, double level,
                                std::vector<std::uint8_t>& mask, bool* flagged) const {
    const auto m = static_cast<Eigen::Index>(t.ybar_idx.size());
    Eigen::VectorXd delta(m);
    for (Eigen::Index j = 0; j < m; ++j)
        delta[j] = level - unconditional[t.ybar_idx[static_cast<std::size_t>(j)]];
    Eigen::VectorXd f = unconditional + t.kriging * delta;
    mask.resize(graph_.n);
    for (std::size_t i = 0; i < graph_.n; ++i)
        mask[i] = f[static_cast<Eigen::Index>(i)] > level ? 1 : 0;

    std::vector<std::int32_t> ybar32(t.ybar_idx.begin(), t.ybar_idx.end());
    double val = iterated_derivative(xi, graph_, mask, ybar32);

    if (t.has_repeats && val != 0.0) {
        Eigen::VectorXd rest(static_cast<Eigen::Index>(t.rest_idx.size()));
        for (std::size_t a = 0; a < t.rest_idx.size(); ++a)
            rest[static_cast<Eigen::Index>(a)] = f[t.rest_idx[a]];
        Eigen::VectorXd arg = t.pinvals - t.reg_rest * rest;
        val *= t.hermite.eval(arg);
    }

    if (flagged) {
        // stabilisation check (Lemma-3.5 style): bounded clusters of E \ ybar
        // and E^c \ ybar incident to pinned neighbourhoods must avoid the edge
        *flagged = false;
        std::vector<std::uint8_t> work = mask;
        for (int p : t.ybar_idx) work[static_cast<std::size_t>(p)] = 0;
        ClusterLabeling lab0 = label_clusters(graph_, work.data());
        for (std::size_t nb : t.nbr_probe) {
            std::int32_t c = lab0.comp_pos[nb];
            if (c >= 0 && lab0.pos[static_cast<std::size_t>(c)].touches_boundary) *flagged = true;
        }
        for (int p : t.ybar_idx) work[static_cast<std::size_t>(p)] = 1;
        ClusterLabeling lab1 = label_clusters(graph_, work.data());
        for (std::size_t nb : t.nbr_probe) {
            std::int32_t c = lab1.comp_neg[nb];
            if (c >= 0 && lab1.neg[static_cast<std::size_t>(c)].touches_boundary) *flagged = true;
        }
    }
    return val;
}

PivotalEstimate PivotalLab::intensity(const LevelSetFunctional& xi, double level,
                                      const std::vector<Site>& y, std::size_t n,
                                      RngStream& rng) const {
    auto out = intensity_batch(xi, level, {y}, n, rng);
    return out[0];
}

std::vector<PivotalEstimate> PivotalLab::intensity_batch(
    const LevelSetFunctional& xi, double level, const std::vector<std::vector<Site>>& targets,
    std::size_t n, RngStream& rng) const {
    if (n == 0) throw std::invalid_argument("pivotal_intensity: zero budget");
    std::vector<Target> ts;
    for (const auto& y : targets) ts.push_back(resolve(y, level));
    std::vector<double> sum(ts.size(), 0.0), sum2(ts.size(), 0.0), flags(ts.size(), 0.0);
    std::vector<std::uint8_t> mask;
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd f = sampler_->sample(rng);
        for (std::size_t k = 0; k < ts.size(); ++k) {
            bool fl = false;
            double v = sample_value(ts[k], xi, f, level, mask, &fl);
            sum[k] += v;
            sum2[k] += v * v;
            if (fl) flags[k] += 1.0;
        }
    }
    std::vector<PivotalEstimate> out;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        PivotalEstimate e;
        e.target = "P_R";
        e.points = targets[k];
        e.level = level;
        e.budget = n;
        double mean = sum[k] / double(n);
        double var = std::max(0.0, sum2[k] / double(n) - mean * mean);
        e.value = mean * ts[k].pin_density;
        e.se = std::sqrt(var / double(n)) * ts[k].pin_density;
        e.flagged_fraction = flags[k] / double(n);
        out.push_back(e);
    }
    return out;
}

PivotalEstimate PivotalLab::joint_intensity(const LevelSetFunctional& xi, double level,
                                            const std::vector<Site>& x, const std::vector<Site>& y,
                                            double t, std::size_t n, RngStream& rng) const {
    if (t < 0.0 || t >= 1.0)
        throw std::invalid_argument("joint_pivotal_intensity: t must lie in [0,1)");
    if (x.size() != y.size()) throw std::invalid_argument("joint_pivotal_intensity: order mismatch");
    const auto nn = static_cast<Eigen::Index>(graph_.n);
    if (nn > 1000) throw std::invalid_argument("joint_pivotal_intensity: domain too large");
    const Eigen::MatrixXd& K = sampler_->covariance();
    Eigen::MatrixXd C2(2 * nn, 2 * nn);
    C2.topLeftCorner(nn, nn) = K;
    C2.bottomRightCorner(nn, nn) = K;
    C2.topRightCorner(nn, nn) = t * K;
    C2.bottomLeftCorner(nn, nn) = t * K;

    std::vector<Site> xbar, ybar;
    std::vector<int> mx, my;
    distinct_first_occurrence(x, mx, xbar);
    distinct_first_occurrence(y, my, ybar);
    auto locate = [&](const Site& s) {
        for (std::size_t i = 0; i < graph_.n; ++i)
            if (graph_.coords[i] == s) return static_cast<Eigen::Index>(i);
        throw std::invalid_argument("joint_pivotal_intensity: point outside domain");
    };
    std::vector<Eigen::Index> pins;
    for (const auto& s : xbar) pins.push_back(locate(s));
    for (const auto& s : ybar) pins.push_back(nn + locate(s));
    const auto m = static_cast<Eigen::Index>(pins.size());
    Eigen::MatrixXd Cpp(m, m);
    Eigen::MatrixXd Cnp(2 * nn, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        Cnp.col(j) = C2.col(pins[static_cast<std::size_t>(j)]);
        for (Eigen::Index i = 0; i < m; ++i)
            Cpp(i, j) = C2(pins[static_cast<std::size_t>(i)], pins[static_cast<std::size_t>(j)]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Cpp);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("joint_pivotal_intensity: degenerate pins");
    Eigen::MatrixXd A = llt.solve(Cnp.transpose()).transpose();
    Eigen::VectorXd pinvals = Eigen::VectorXd::Constant(m, level);
    double dens = gaussian_density(Cpp, pinvals);

    bool repeats = (xbar.size() != x.size()) || (ybar.size() != y.size());
    Poly hermite{0};
    Eigen::MatrixXd reg_rest;
    std::vector<Eigen::Index> rest_idx;
    if (repeats) {
        for (Eigen::Index i = 0; i < 2 * nn; ++i)
            if (std::find(pins.begin(), pins.end(), i) == pins.end()) rest_idx.push_back(i);
        const auto nr = static_cast<Eigen::Index>(rest_idx.size());
        Eigen::MatrixXd Crr(nr, nr), Cpr(m, nr);
        for (Eigen::Index a = 0; a < nr; ++a) {
            for (Eigen::Index b = 0; b < nr; ++b)
                Crr(a, b) = C2(rest_idx[static_cast<std::size_t>(a)], rest_idx[static_cast<std::size_t>(b)]);
            for (Eigen::Index i = 0; i < m; ++i)
                Cpr(i, a) = C2(pins[static_cast<std::size_t>(i)], rest_idx[static_cast<std::size_t>(a)]);
        }
        reg_rest = Crr.llt().solve(Cpr.transpose()).transpose();
        Eigen::MatrixXd Cc = Cpp - reg_rest * Cpr.transpose();
        std::vector<int> at;
        for (int mu : mx) at.push_back(mu - 1);
        for (int mu : my) at.push_back(mu - 1);
        hermite = hermite_multivariate_poly(Cc, MultiIndex(at));
    }

    std::vector<std::int32_t> xb32, yb32;
    for (const auto& s : xbar) xb32.push_back(static_cast<std::int32_t>(locate(s)));
    for (const auto& s : ybar) yb32.push_back(static_cast<std::int32_t>(locate(s)));

    double sum = 0, sum2 = 0;
    std::vector<std::uint8_t> mask1(graph_.n), mask2(graph_.n);
    const double root = std::sqrt(1.0 - t * t);
    Eigen::VectorXd v(2 * nn);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::VectorXd f = sampler_->sample(rng);
        Eigen::VectorXd g = sampler_->sample(rng);
        v.head(nn) = f;
        v.tail(nn) = t * f + root * g;
        Eigen::VectorXd delta(m);
        for (Eigen::Index j = 0; j < m; ++j) delta[j] = level - v[pins[static_cast<std::size_t>(j)]];
        v += A * delta;
        for (std::size_t s = 0; s < graph_.n; ++s) {
            mask1[s] = v[static_cast<Eigen::Index>(s)] > level ? 1 : 0;
            mask2[s] = v[nn + static_cast<Eigen::Index>(s)] > level ? 1 : 0;
        }
        double val = iterated_derivative(xi, graph_, mask1, xb32) *
                     iterated_derivative(xi, graph_, mask2, yb32);
        if (repeats && val != 0.0) {
            Eigen::VectorXd rest(static_cast<Eigen::Index>(rest_idx.size()));
            for (std::size_t a = 0; a < rest_idx.size(); ++a)
                rest[static_cast<Eigen::Index>(a)] = v[rest_idx[a]];
            val *= hermite.eval(pinvals - reg_rest * rest);
        }
        sum += val;
        sum2 += val * val;
    }
    PivotalEstimate e;
    e.target = "P_joint";
    e.points = x;
    e.points2 = y;
    e.level = level;
    e.t = t;
    e.budget = n;
    double mean = sum / double(n);
    double var = std::max(0.0, sum2 / double(n) - mean * mean);
    e.value = mean * dens;
    e.se = std::sqrt(var / double(n)) * dens;
    return e;
}

double PivotalLab::tail_variance(const LevelSetFunctional& xi, double level, int m, int t_nodes,
                                 std::size_t n_per_node, RngStream& rng) const {
    if (m < 1) throw std::invalid_argument("tail_variance: m >= 1");
    const std::size_t nd = graph_.n;
    std::size_t tuples = 1;
    for (int i = 0; i < m; ++i) {
        tuples *= nd;
        if (tuples > 64) throw std::invalid_argument("tail_variance: domain too large for order m");
    }
    std::vector<std::vector<Site>> tup;
    std::vector<std::vector<int>> tup_idx;
    std::vector<int> cur(static_cast<std::size_t>(m), 0);
    for (;;) {
        std::vector<Site> sites;
        for (int c : cur) sites.push_back(graph_.coords[static_cast<std::size_t>(c)]);
        tup.push_back(sites);
        tup_idx.push_back(cur);
        int k = m - 1;
        while (k >= 0 && cur[static_cast<std::size_t>(k)] == static_cast<int>(nd) - 1) {
            cur[static_cast<std::size_t>(k)] = 0;
            --k;
        }
        if (k < 0) break;
        cur[static_cast<std::size_t>(k)] += 1;
    }
    const Eigen::MatrixXd& K = sampler_->covariance();
    std::vector<double> xnodes, xweights;
    gauss_legendre_01(t_nodes, xnodes, xweights);
    double fct = 1.0;
    for (int k = 2; k <= m - 1; ++k) fct *= double(k);

    // nested simplex integral collapses to int_0^1 P^s (1-s)^{m-1}/(m-1)! ds;
    // the map s = 1-(1-u)^2 keeps nodes away from the endpoint singularity
    double total = 0.0;
    for (int q = 0; q < t_nodes; ++q) {
        double u = xnodes[static_cast<std::size_t>(q)];
        double t = 1.0 - (1.0 - u) * (1.0 - u);
        double wq = xweights[static_cast<std::size_t>(q)] * 2.0 * (1.0 - u);
        double simplex = std::pow(1.0 - t, m - 1) / fct;
        for (std::size_t a = 0; a < tup.size(); ++a)
            for (std::size_t b = 0; b < tup.size(); ++b) {
                double kprod = 1.0;
                for (int i = 0; i < m; ++i)
                    kprod *= K(tup_idx[a][static_cast<std::size_t>(i)], tup_idx[b][static_cast<std::size_t>(i)]);
                if (kprod == 0.0) continue;
                PivotalEstimate pe = joint_intensity(xi, level, tup[a], tup[b], t, n_per_node, rng);
                total += wq * simplex * kprod * pe.value;
            }
    }
    return total;
}

StationaryPivotalLab::StationaryPivotalLab(int d, long window_R, long diag_window_R)
    : d_(d),
      window_R_(window_R),
      diag_R_(diag_window_R > 0 ? diag_window_R : std::max(3L, window_R - 2)) {
    auto model = CovarianceModel::gff(d);
    main_ = std::make_unique<PivotalLab>(model, graph_of_box(LatticeBox(d, window_R_)));
    diag_ = std::make_unique<PivotalLab>(model, graph_of_box(LatticeBox(d, diag_R_)));
}

PivotalEstimate StationaryPivotalLab::intensity(double level, const std::vector<Site>& y_offsets,
                                                std::size_t n, RngStream& rng) const {
    auto out = intensity_batch(level, {y_offsets}, n, rng);
    return out[0];
}

std::vector<PivotalEstimate> StationaryPivotalLab::intensity_batch(
    double level, const std::vector<std::vector<Site>>& offsets, std::size_t n,
    RngStream& rng) const {
    for (const auto& y : offsets)
        for (const auto& s : y)
            if (s.norm_inf() > window_R_ / 2)
                throw std::invalid_argument("stationary_pivotal_intensity: offsets not centred");
    auto xi = ClusterCountFunctional::standard();
    auto main = main_->intensity_batch(xi, level, offsets, n, rng);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
        main[k].target = "P_inf_proxy";
        main[k].window_R = window_R_;
        bool fits = true;
        for (const auto& s : offsets[k])
            if (s.norm_inf() > diag_R_ / 2) fits = false;
        if (fits) {
            auto d = diag_->intensity(xi, level, offsets[k], std::max<std::size_t>(n / 4, 1), rng);
            main[k].sensitivity = std::abs(main[k].value - d.value);
        }
    }
    return main;
}

PivotalEstimate halfspace_pivotal_intensity(int d, double level, long k, long window_R,
                                            std::size_t n, RngStream& rng) {
    if (k < 0) throw std::invalid_argument("halfspace_pivotal_intensity: k >= 0");
    if (k > window_R) throw std::invalid_argument("halfspace_pivotal_intensity: window too small");
    Site shift = Site::zero(d);
    shift.c[0] = window_R;
    LatticeBox box(d, window_R, shift);  // x_1 in [0, 2R]: pressed against the half-space face
    PivotalLab lab(CovarianceModel::gff(d), graph_of_box(box));
    Site y = Site::zero(d);
    y.c[0] = k;
    auto xi = ClusterCountFunctional::standard();
    PivotalEstimate e = lab.intensity(xi, level, {y}, n, rng);
    e.target = "P_H";
    e.window_R = window_R;
    return e;
}

PivotalEstimate truncated_pivotal_intensity(int d, double level, const std::vector<Site>& y_offsets,
                                            long r, long window_R, std::size_t n, RngStream& rng) {
    long diam = 0;
    for (const auto& a : y_offsets)
        for (const auto& b : y_offsets) diam = std::max(diam, dist_inf(a, b));
    PivotalEstimate e;
    e.target = "P_trunc";
    e.points = y_offsets;
    e.level = level;
    e.window_R = window_R;
    if (diam > r + 2) {
        // supported on diam_inf(y) <= r + 2 only: exact zero, no sampling
        e.value = 0.0;
        e.se = 0.0;
        e.budget = 0;
        return e;
    }
    PivotalLab lab(CovarianceModel::gff(d), graph_of_box(LatticeBox(d, window_R)));
    auto xi = ClusterCountFunctional::truncated(r);
    PivotalEstimate out = lab.intensity(xi, level, y_offsets, n, rng);
    out.target = "P_trunc";
    out.window_R = window_R;
    return out;
}

MuDerivativeEstimate mu_derivative(int d, double level, int m, long window_R, long cutoff,
                                   std::size_t n, RngStream& rng) {
    if (m < 1 || m > 3) throw std::invalid_argument("mu_derivative: m in {1,2,3} at desk scale");
    StationaryPivotalLab lab(d, window_R);
    MuDerivativeEstimate out;
    out.m = m;
    out.cutoff = cutoff;
    if (m == 1) {
        PivotalEstimate e = lab.intensity(level, {Site::zero(d)}, n, rng);
        out.value = -e.value;
        out.se = e.se;
        out.diagonal = e;
        return out;
    }
    LatticeBox ball(d, cutoff);
    std::vector<std::vector<Site>> targets;
    std::vector<int> idx(static_cast<std::size_t>(m - 1), 0);
    const auto nb = ball.num_sites();
    for (;;) {
        std::vector<Site> y = {Site::zero(d)};
        for (int v : idx) y.push_back(ball.site_at(static_cast<std::size_t>(v)));
        targets.push_back(y);
        int k = m - 2;
        while (k >= 0 && idx[static_cast<std::size_t>(k)] == static_cast<int>(nb) - 1) {
            idx[static_cast<std::size_t>(k)] = 0;
            --k;
        }
        if (k < 0) break;
        idx[static_cast<std::size_t>(k)] += 1;
    }
    auto ests = lab.intensity_batch(level, targets, n, rng);
    double total = 0.0, var = 0.0, shell_max = 0.0;
    long shell_count = 0;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        total += ests[k].value;
        var += ests[k].se * ests[k].se;
        bool on_shell = false;
        bool all_zero = true;
        for (const auto& s : targets[k]) {
            if (s.norm_inf() == cutoff) on_shell = true;
            if (s.norm_inf() != 0) all_zero = false;
        }
        if (on_shell) {
            shell_max = std::max(shell_max, std::abs(ests[k].value));
            ++shell_count;
        }
        if (all_zero) out.diagonal = ests[k];
    }
    double sign = (m % 2) ? -1.0 : 1.0;
    out.value = sign * total;
    out.se = std::sqrt(var);  // common-field estimates are positively correlated; conservative-ish
    out.shell_tail_bound = shell_max * double(shell_count);
    return out;
}

void IntensityTable::set(std::vector<int> tuple, double value) {
    if (static_cast<int>(tuple.size()) != m_) throw std::invalid_argument("IntensityTable: order");
    std::sort(tuple.begin(), tuple.end());
    entries_[tuple] = value;
}

double IntensityTable::get(std::vector<int> tuple) const {
    std::sort(tuple.begin(), tuple.end());
    auto it = entries_.find(tuple);
    return it == entries_.end() ? 0.0 : it->second;
}

namespace {

double perm_small(const Eigen::MatrixXd& A) {
    const int k = static_cast<int>(A.rows());
    if (k == 0) return 1.0;
    double total = 0.0;
    for (unsigned s = 1; s < (1u << k); ++s) {
        int bits = __builtin_popcount(s);
        double prod = 1.0;
        for (int i = 0; i < k; ++i) {
            double r = 0.0;
            for (int j = 0; j < k; ++j)
                if (s & (1u << j)) r += A(i, j);
            prod *= r;
        }
        total += ((k - bits) % 2 ? -1.0 : 1.0) * prod;
    }
    return total;
}

double mult_factorial(const std::vector<int>& sorted_tuple) {
    double denom = 1.0;
    std::size_t i = 0;
    while (i < sorted_tuple.size()) {
        std::size_t j = i;
        double c = 0.0;
        while (j < sorted_tuple.size() && sorted_tuple[j] == sorted_tuple[i]) {
            c += 1.0;
            denom *= c;
            ++j;
        }
        i = j;
    }
    return denom;
}

}  // namespace

ChaosComponentEvaluator::ChaosComponentEvaluator(const Eigen::MatrixXd& K,
                                                 const IntensityTable& table)
    : K_(K), m_(table.order()) {
    for (const auto& [tuple, p] : table.entries()) {
        tuples_.push_back(tuple);
        raw_.push_back(p);
        weights_.push_back(p / mult_factorial(tuple));
        wick_.push_back(wick_polynomial(K_, tuple));
    }
}

double ChaosComponentEvaluator::eval(const Eigen::VectorXd& field) const {
    double total = 0.0;
    for (std::size_t i = 0; i < tuples_.size(); ++i)
        total += weights_[i] * wick_[i].eval(field);
    return total;
}

double ChaosComponentEvaluator::variance() const {
    // permutation-collapsed diagram formula over the sorted support:
    // sum_{x,y} P(x) P(y) perm(K[x_i, y_j]) / (mult_x! mult_y!)
    double total = 0.0;
    for (std::size_t a = 0; a < tuples_.size(); ++a)
        for (std::size_t b = 0; b < tuples_.size(); ++b) {
            Eigen::MatrixXd M(m_, m_);
            for (int i = 0; i < m_; ++i)
                for (int j = 0; j < m_; ++j)
                    M(i, j) = K_(tuples_[a][static_cast<std::size_t>(i)],
                                 tuples_[b][static_cast<std::size_t>(j)]);
            total += raw_[a] * raw_[b] * perm_small(M) /
                     (mult_factorial(tuples_[a]) * mult_factorial(tuples_[b]));
        }
    return total;
}

SmoothedFunctionalOracle::SmoothedFunctionalOracle(const CovarianceModel& model,
                                                   const SiteGraph& graph,
                                                   const LevelSetFunctional& xi, double eps)
    : n_(graph.n) {
    if (n_ > 12) throw std::invalid_argument("SmoothedFunctionalOracle: |D| <= 12 required");
    Eigen::VectorXd diag, load;
    if (model.kind() == CovarianceModel::Kind::Iid) {
        diag = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_));
        load = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    } else if (model.has_factor()) {
        diag = model.factor_diag();
        load = model.factor_load();
    } else {
        Eigen::MatrixXd K = model.covariance(graph.coords);
        if (K.rows() == 1) {
            diag = K.diagonal();
            load = Eigen::VectorXd::Zero(1);
        } else if (K.rows() == 2) {
            double c = K(0, 1);
            diag.resize(2);
            load.resize(2);
            if (c == 0.0) {
                load.setZero();
                diag = K.diagonal();
            } else {
                double l0 = std::sqrt(std::abs(c)) * std::pow(K(0, 0) / K(1, 1), 0.25);
                double l1 = std::sqrt(std::abs(c)) * std::pow(K(1, 1) / K(0, 0), 0.25);
                load << (c > 0 ? l0 : -l0), l1;
                diag << K(0, 0) - l0 * l0, K(1, 1) - l1 * l1;
            }
        } else {
            throw std::invalid_argument(
                "SmoothedFunctionalOracle: needs a one-factor, i.i.d., or 2-site model");
        }
    }
    load_ = load;
    sd_.resize(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
        double v = diag[static_cast<Eigen::Index>(i)] + eps * eps;
        if (v <= 0) throw std::invalid_argument("SmoothedFunctionalOracle: degenerate diagonal");
        sd_[static_cast<Eigen::Index>(i)] = std::sqrt(v);
    }

    xi_values_.resize(std::size_t(1) << n_);
    std::vector<std::uint8_t> mask(n_);
    for (std::size_t cfg = 0; cfg < xi_values_.size(); ++cfg) {
        for (std::size_t i = 0; i < n_; ++i) mask[i] = (cfg >> i) & 1;
        xi_values_[cfg] = xi.value(graph, mask.data());
    }

    std::vector<double> x01, w01;
    gauss_legendre_01(kOrthantNodes, x01, w01);
    for (int i = 0; i < kOrthantNodes; ++i) {
        double u = -8.5 + 17.0 * x01[static_cast<std::size_t>(i)];
        qnodes_.push_back(u);
        qweights_.push_back(17.0 * w01[static_cast<std::size_t>(i)] * std::exp(-0.5 * u * u) /
                            std::sqrt(2.0 * M_PI));
    }
}

double SmoothedFunctionalOracle::mean(const Eigen::VectorXd& nu) const {
    double total = 0.0;
    for (std::size_t cfg = 0; cfg < xi_values_.size(); ++cfg) {
        double xv = xi_values_[cfg];
        if (xv == 0.0) continue;
        double prob = 0.0;
        for (std::size_t q = 0; q < qnodes_.size(); ++q) {
            double u = qnodes_[q];
            double p = 1.0;
            for (std::size_t i = 0; i < n_; ++i) {
                double arg = (load_[static_cast<Eigen::Index>(i)] * u -
                              nu[static_cast<Eigen::Index>(i)]) /
                             sd_[static_cast<Eigen::Index>(i)];
                p *= ((cfg >> i) & 1) ? 0.5 * std::erfc(-arg / std::sqrt(2.0))
                                      : 0.5 * std::erfc(arg / std::sqrt(2.0));
            }
            prob += qweights_[q] * p;
        }
        total += xv * prob;
    }
    return total;
}

double SmoothedFunctionalOracle::mean_level(double level) const {
    return mean(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_), level));
}

double SmoothedFunctionalOracle::derivative(std::size_t y, const Eigen::VectorXd& nu) const {
    double total = 0.0;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
    for (std::size_t cfg = 0; cfg < xi_values_.size(); ++cfg) {
        double xv = xi_values_[cfg];
        if (xv == 0.0) continue;
        double acc = 0.0;
        for (std::size_t q = 0; q < qnodes_.size(); ++q) {
            double u = qnodes_[q];
            double p = 1.0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (i == y) continue;
                double arg = (load_[static_cast<Eigen::Index>(i)] * u -
                              nu[static_cast<Eigen::Index>(i)]) /
                             sd_[static_cast<Eigen::Index>(i)];
                p *= ((cfg >> i) & 1) ? 0.5 * std::erfc(-arg / std::sqrt(2.0))
                                      : 0.5 * std::erfc(arg / std::sqrt(2.0));
            }
            double argy = (load_[static_cast<Eigen::Index>(y)] * u -
                           nu[static_cast<Eigen::Index>(y)]) /
                          sd_[static_cast<Eigen::Index>(y)];
            double dens = inv_sqrt2pi * std::exp(-0.5 * argy * argy) /
                          sd_[static_cast<Eigen::Index>(y)];
            double sgn = ((cfg >> y) & 1) ? -1.0 : 1.0;
            acc += qweights_[q] * p * sgn * dens;
        }
        total += xv * acc;
    }
    return total;
}

double SmoothedFunctionalOracle::mixed_difference(const std::vector<std::size_t>& ys,
                                                  const Eigen::VectorXd& nu, double step) const {
    const std::size_t m = ys.size();
    double total = 0.0;
    for (std::size_t s = 0; s < (std::size_t(1) << m); ++s) {
        Eigen::VectorXd v = nu;
        int minus = 0;
        for (std::size_t i = 0; i < m; ++i) {
            if ((s >> i) & 1) {
                v[static_cast<Eigen::Index>(ys[i])] += step;
            } else {
                v[static_cast<Eigen::Index>(ys[i])] -= step;
                ++minus;
            }
        }
        total += ((minus % 2) ? -1.0 : 1.0) * mean(v);
    }
    return total / std::pow(2.0 * step, double(m));
}

}  // namespace gff
