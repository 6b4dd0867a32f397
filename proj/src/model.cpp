#include "gfflab/model.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "gfflab/green.hpp"

namespace gff {

CovarianceModel CovarianceModel::gff(int d) {
    if (d < 3) throw std::invalid_argument("CovarianceModel::gff: d >= 3 required");
    CovarianceModel m;
    m.kind_ = Kind::Gff;
    m.d_ = d;
    return m;
}

CovarianceModel CovarianceModel::iid(int d) {
    CovarianceModel m;
    m.kind_ = Kind::Iid;
    m.d_ = d;
    return m;
}

CovarianceModel CovarianceModel::explicit_spd(std::vector<Site> sites, Eigen::MatrixXd K) {
    if (K.rows() != K.cols() || static_cast<std::size_t>(K.rows()) != sites.size())
        throw std::invalid_argument("explicit_spd: shape mismatch");
    if (!K.isApprox(K.transpose(), 1e-12)) throw std::invalid_argument("explicit_spd: not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("explicit_spd: matrix not SPD");
    CovarianceModel m;
    m.kind_ = Kind::Explicit;
    m.d_ = sites.empty() ? 1 : sites[0].d;
    m.sites_ = std::move(sites);
    m.K_ = std::move(K);
    return m;
}

CovarianceModel CovarianceModel::one_factor(std::vector<Site> sites, Eigen::VectorXd diag,
                                            Eigen::VectorXd load) {
    if (diag.size() != load.size() || static_cast<std::size_t>(diag.size()) != sites.size())
        throw std::invalid_argument("one_factor: shape mismatch");
    if (diag.minCoeff() <= 0) throw std::invalid_argument("one_factor: diagonal must be positive");
    Eigen::MatrixXd K = diag.asDiagonal();
    K += load * load.transpose();
    CovarianceModel m = explicit_spd(std::move(sites), std::move(K));
    m.factor_diag_ = std::move(diag);
    m.factor_load_ = std::move(load);
    return m;
}

std::size_t CovarianceModel::explicit_index(const Site& s) const {
    for (std::size_t i = 0; i < sites_.size(); ++i)
        if (sites_[i] == s) return i;
    throw std::invalid_argument("CovarianceModel: site not in explicit site list");
}

double CovarianceModel::entry(const Site& a, const Site& b) const {
    switch (kind_) {
        case Kind::Gff:
            return walk_green(d_, a - b);
        case Kind::Iid:
            return (a == b) ? 1.0 : 0.0;
        case Kind::Explicit:
            return K_(static_cast<Eigen::Index>(explicit_index(a)),
                      static_cast<Eigen::Index>(explicit_index(b)));
    }
    return 0.0;
}

Eigen::MatrixXd CovarianceModel::covariance(const std::vector<Site>& sites) const {
    const auto n = static_cast<Eigen::Index>(sites.size());
    {
        std::set<std::vector<long>> seen;
        for (const auto& s : sites)
            if (!seen.emplace(s.c.begin(), s.c.begin() + s.d).second)
                throw std::invalid_argument("covariance: duplicate sites");
    }
    Eigen::MatrixXd K(n, n);
    if (kind_ == Kind::Gff) {
        long m = 0;
        for (const auto& s : sites)
            for (int i = 0; i < d_; ++i) m = std::max(m, std::abs(s.c[i]));
        m *= 2;
        if (m <= 40) {
            auto table = green_offset_table(d_, m);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = i; j < n; ++j) {
                    double v = table[offset_table_index(
                        d_, m, sites[static_cast<std::size_t>(i)] - sites[static_cast<std::size_t>(j)])];
                    K(i, j) = v;
                    K(j, i) = v;
                }
            return K;
        }
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            double v = entry(sites[static_cast<std::size_t>(i)], sites[static_cast<std::size_t>(j)]);
            K(i, j) = v;
            K(j, i) = v;
        }
    return K;
}

double CovarianceModel::kappa2() const {
    switch (kind_) {
        case Kind::Gff:
            // min over the torus of 1/(1 - phi) is attained at theta = (pi,...,pi)
            return 0.5;
        case Kind::Iid:
            return 1.0;
        case Kind::Explicit: {
            if (kappa2_ < 0) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K_, Eigen::EigenvaluesOnly);
                kappa2_ = es.eigenvalues().minCoeff();
            }
            return kappa2_;
        }
    }
    return 0.0;
}

}  // namespace gff
