#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "gfflab/lattice.hpp"

namespace gff {

// A stationary positive covariance kernel on Z^d (the GFF Green's function),
// an i.i.d. unit field, or an explicit SPD matrix over a fixed site list.
class CovarianceModel {
  public:
    enum class Kind { Gff, Iid, Explicit };

    static CovarianceModel gff(int d);
    static CovarianceModel iid(int d);
    static CovarianceModel explicit_spd(std::vector<Site> sites, Eigen::MatrixXd K);
    // K = diag(v) + load load^T; kept in factored form so orthant
    // probabilities reduce to one-dimensional quadratures.
    static CovarianceModel one_factor(std::vector<Site> sites, Eigen::VectorXd diag,
                                      Eigen::VectorXd load);

    Kind kind() const { return kind_; }
    int dim() const { return d_; }

    double entry(const Site& a, const Site& b) const;
    Eigen::MatrixXd covariance(const std::vector<Site>& sites) const;

    // floor on the smallest eigenvalue of any restriction: the i.i.d.
    // component kappa^2 = min over the torus of (2 pi)^d x spectral density
    // (1/2 for the GFF, 1 for i.i.d.); smallest eigenvalue for explicit kinds.
    double kappa2() const;

    bool has_factor() const { return factor_diag_.has_value(); }
    const Eigen::VectorXd& factor_diag() const { return *factor_diag_; }
    const Eigen::VectorXd& factor_load() const { return *factor_load_; }
    const std::vector<Site>& fixed_sites() const { return sites_; }

  private:
    CovarianceModel() = default;
    Kind kind_ = Kind::Iid;
    int d_ = 1;
    std::vector<Site> sites_;  // explicit kinds only
    Eigen::MatrixXd K_;
    std::optional<Eigen::VectorXd> factor_diag_, factor_load_;
    mutable double kappa2_ = -1.0;
    std::size_t explicit_index(const Site& s) const;
};

}  // namespace gff
