#include "gfflab/gaussian.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <set>
#include <stdexcept>

namespace gff {

namespace {
std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}
}  // namespace

ExactSampler::ExactSampler(const CovarianceModel& model, std::vector<Site> sites)
    : sites_(std::move(sites)) {
    if (sites_.size() > 20000)
        throw std::invalid_argument("ExactSampler: site count exceeds dense factorization budget");
    K_ = model.covariance(sites_);
    Eigen::LLT<Eigen::MatrixXd> llt(K_);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("ExactSampler: covariance not SPD (factorization failed)");
    chol_ = llt.matrixL();
}

Eigen::VectorXd ExactSampler::sample(RngStream& rng) const {
    Eigen::VectorXd z(static_cast<Eigen::Index>(sites_.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return chol_ * z;
}

long torus_side_for(long window_R, long margin) { return margin * (2 * window_R + 1); }

struct TorusGffSampler::Impl {
    fftw_plan plan = nullptr;
    fftw_complex* in = nullptr;
    fftw_complex* out = nullptr;
    std::vector<double> sigma;  // sqrt(1/(1-phi)) per mode, 0 at k=0
    std::vector<std::size_t> window_map;
    std::size_t ntot = 0;
    ~Impl() {
        std::lock_guard<std::mutex> lk(fftw_planner_mutex());
        if (plan) fftw_destroy_plan(plan);
        if (in) fftw_free(in);
        if (out) fftw_free(out);
    }
};

TorusGffSampler::TorusGffSampler(int d, long L, long window_R)
    : d_(d), L_(L), window_(d, window_R), impl_(new Impl) {
    if (d < 3) throw std::invalid_argument("TorusGffSampler: d >= 3 required");
    if (L < 4 * (2 * window_R + 1))
        throw std::invalid_argument("TorusGffSampler: margin factor below 4");
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(L);
    impl_->ntot = n;
    {
        std::lock_guard<std::mutex> lk(fftw_planner_mutex());
        impl_->in = fftw_alloc_complex(n);
        impl_->out = fftw_alloc_complex(n);
        std::vector<int> dims(static_cast<std::size_t>(d), static_cast<int>(L));
        impl_->plan = fftw_plan_dft(d, dims.data(), impl_->in, impl_->out, FFTW_BACKWARD,
                                    FFTW_ESTIMATE);
    }
    impl_->sigma.resize(n);
    std::vector<double> cos_tab(static_cast<std::size_t>(L));
    for (long k = 0; k < L; ++k)
        cos_tab[static_cast<std::size_t>(k)] = std::cos(2.0 * M_PI * double(k) / double(L));
    for (std::size_t idx = 0; idx < n; ++idx) {
        std::size_t rem = idx;
        double phi = 0.0;
        for (int i = 0; i < d; ++i) {
            phi += cos_tab[rem % static_cast<std::size_t>(L)];
            rem /= static_cast<std::size_t>(L);
        }
        phi /= d;
        impl_->sigma[idx] = (idx == 0) ? 0.0 : std::sqrt(1.0 / (1.0 - phi));
    }
    // window sites mapped to torus indices (coords mod L)
    impl_->window_map.reserve(window_.num_sites());
    for (std::size_t w = 0; w < window_.num_sites(); ++w) {
        Site s = window_.site_at(w);
        std::size_t idx = 0;
        for (int i = 0; i < d; ++i) {
            long c = ((s.c[i] % L) + L) % L;
            idx = idx * static_cast<std::size_t>(L) + static_cast<std::size_t>(c);
        }
        impl_->window_map.push_back(idx);
    }
}

TorusGffSampler::~TorusGffSampler() = default;

Eigen::VectorXd TorusGffSampler::sample(RngStream& rng) {
    const std::size_t n = impl_->ntot;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (std::size_t idx = 0; idx < n; ++idx) {
        double a = rng.normal();
        double b = rng.normal();
        double s = impl_->sigma[idx] * inv_sqrt2;
        impl_->in[idx][0] = s * a;
        impl_->in[idx][1] = s * b;
    }
    fftw_execute(impl_->plan);
    const double scale = std::sqrt(2.0) / std::pow(double(L_), 0.5 * d_);
    Eigen::VectorXd f(static_cast<Eigen::Index>(impl_->window_map.size()));
    for (std::size_t w = 0; w < impl_->window_map.size(); ++w)
        f[static_cast<Eigen::Index>(w)] = scale * impl_->out[impl_->window_map[w]][0];
    return f;
}

ConditionalModel::ConditionalModel(const CovarianceModel& model, std::vector<Site> sites,
                                   std::vector<std::pair<Site, double>> pins)
    : sites_(std::move(sites)) {
    if (pins.empty()) throw std::invalid_argument("ConditionalModel: no pins");
    {
        std::set<std::vector<long>> seen;
        for (auto& [s, v] : pins)
            if (!seen.emplace(s.c.begin(), s.c.begin() + s.d).second)
                throw std::invalid_argument("ConditionalModel: duplicate pinned site");
    }
    pin_vals_.resize(static_cast<Eigen::Index>(pins.size()));
    for (std::size_t p = 0; p < pins.size(); ++p) {
        int pos = -1;
        for (std::size_t i = 0; i < sites_.size(); ++i)
            if (sites_[i] == pins[p].first) {
                pos = static_cast<int>(i);
                break;
            }
        if (pos < 0) throw std::invalid_argument("ConditionalModel: pinned site not in site list");
        pin_pos_.push_back(pos);
        pin_vals_[static_cast<Eigen::Index>(p)] = pins[p].second;
    }
    for (std::size_t i = 0; i < sites_.size(); ++i)
        if (std::find(pin_pos_.begin(), pin_pos_.end(), static_cast<int>(i)) == pin_pos_.end())
            free_pos_.push_back(static_cast<int>(i));

    K_ = model.covariance(sites_);
    const auto m = static_cast<Eigen::Index>(pin_pos_.size());
    const auto n = static_cast<Eigen::Index>(sites_.size());
    Kpp_.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            Kpp_(i, j) = K_(pin_pos_[static_cast<std::size_t>(i)], pin_pos_[static_cast<std::size_t>(j)]);
    Eigen::MatrixXd Knp(n, m);
    for (Eigen::Index j = 0; j < m; ++j) Knp.col(j) = K_.col(pin_pos_[static_cast<std::size_t>(j)]);
    Eigen::LLT<Eigen::MatrixXd> llt(Kpp_);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("ConditionalModel: degenerate pin covariance");
    kriging_ = llt.solve(Knp.transpose()).transpose();  // n x m
    cond_mean_ = kriging_ * pin_vals_;
}

void ConditionalModel::apply(Eigen::VectorXd& field) const {
    const auto m = static_cast<Eigen::Index>(pin_pos_.size());
    Eigen::VectorXd delta(m);
    for (Eigen::Index j = 0; j < m; ++j)
        delta[j] = pin_vals_[j] - field[pin_pos_[static_cast<std::size_t>(j)]];
    field += kriging_ * delta;
    for (Eigen::Index j = 0; j < m; ++j)
        field[pin_pos_[static_cast<std::size_t>(j)]] = pin_vals_[j];  // exact pin
}

Eigen::MatrixXd ConditionalModel::conditional_covariance() const {
    const auto nf = static_cast<Eigen::Index>(free_pos_.size());
    const auto m = static_cast<Eigen::Index>(pin_pos_.size());
    Eigen::MatrixXd Kfp(nf, m), Kff(nf, nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
        for (Eigen::Index j = 0; j < m; ++j)
            Kfp(i, j) = K_(free_pos_[static_cast<std::size_t>(i)], pin_pos_[static_cast<std::size_t>(j)]);
        for (Eigen::Index j = 0; j < nf; ++j)
            Kff(i, j) = K_(free_pos_[static_cast<std::size_t>(i)], free_pos_[static_cast<std::size_t>(j)]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Kpp_);
    return Kff - Kfp * llt.solve(Kfp.transpose());
}

double ConditionalModel::pin_density() const { return gaussian_density(Kpp_, pin_vals_); }

void ConditionalModel::prepare_hermite_data() const {
    if (hermite_ready_) return;
    const auto nf = static_cast<Eigen::Index>(free_pos_.size());
    const auto m = static_cast<Eigen::Index>(pin_pos_.size());
    Eigen::MatrixXd Kpr(m, nf), Krr(nf, nf);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < nf; ++j)
            Kpr(i, j) = K_(pin_pos_[static_cast<std::size_t>(i)], free_pos_[static_cast<std::size_t>(j)]);
    for (Eigen::Index i = 0; i < nf; ++i)
        for (Eigen::Index j = 0; j < nf; ++j)
            Krr(i, j) = K_(free_pos_[static_cast<std::size_t>(i)], free_pos_[static_cast<std::size_t>(j)]);
    Eigen::LLT<Eigen::MatrixXd> llt(Krr);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("ConditionalModel: degenerate free-site covariance");
    regression_rest_ = llt.solve(Kpr.transpose()).transpose();  // m x nf
    pinned_rest_cov_ = Kpp_ - regression_rest_ * Kpr.transpose();
    hermite_ready_ = true;
}

const Eigen::MatrixXd& ConditionalModel::pinned_given_rest_cov() const {
    prepare_hermite_data();
    return pinned_rest_cov_;
}

const Eigen::MatrixXd& ConditionalModel::regression_to_rest() const {
    prepare_hermite_data();
    return regression_rest_;
}

Eigen::VectorXd interpolate(const Eigen::VectorXd& f, const Eigen::VectorXd& f_tilde, double t) {
    if (f.size() != f_tilde.size()) throw std::invalid_argument("interpolate: size mismatch");
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("interpolate: t outside [0,1]");
    return t * f + std::sqrt(1.0 - t * t) * f_tilde;
}

Eigen::MatrixXd coupled_covariance(const CovarianceModel& model, const std::vector<Site>& I,
                                   const std::vector<Site>& J, double t) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("coupled_covariance: t outside [0,1]");
    if (t == 1.0) {
        for (const auto& a : I)
            for (const auto& b : J)
                if (a == b)
                    throw std::invalid_argument(
                        "coupled_covariance: degenerate at t = 1 with overlapping sites");
    }
    const auto ni = static_cast<Eigen::Index>(I.size());
    const auto nj = static_cast<Eigen::Index>(J.size());
    Eigen::MatrixXd C(ni + nj, ni + nj);
    for (Eigen::Index a = 0; a < ni; ++a)
        for (Eigen::Index b = 0; b < ni; ++b)
            C(a, b) = model.entry(I[static_cast<std::size_t>(a)], I[static_cast<std::size_t>(b)]);
    for (Eigen::Index a = 0; a < nj; ++a)
        for (Eigen::Index b = 0; b < nj; ++b)
            C(ni + a, ni + b) = model.entry(J[static_cast<std::size_t>(a)], J[static_cast<std::size_t>(b)]);
    for (Eigen::Index a = 0; a < ni; ++a)
        for (Eigen::Index b = 0; b < nj; ++b) {
            double v = t * model.entry(I[static_cast<std::size_t>(a)], J[static_cast<std::size_t>(b)]);
            C(a, ni + b) = v;
            C(ni + b, a) = v;
        }
    return C;
}

double gaussian_log_density(const Eigen::MatrixXd& K, const Eigen::VectorXd& x) {
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw std::runtime_error("gaussian_density: K not SPD");
    const auto n = K.rows();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    double quad = x.dot(llt.solve(x));
    return -0.5 * (n * std::log(2.0 * M_PI) + logdet + quad);
}

double gaussian_density(const Eigen::MatrixXd& K, const Eigen::VectorXd& x) {
    return std::exp(gaussian_log_density(K, x));
}

}  // namespace gff
