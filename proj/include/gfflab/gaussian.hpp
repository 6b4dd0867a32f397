#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gfflab/lattice.hpp"
#include "gfflab/model.hpp"
#include "gfflab/rng.hpp"

namespace gff {

struct Provenance {
    std::string sampler;
    std::uint64_t seed = 0;
    std::uint64_t replicate = 0;
};

struct FieldSample {
    Eigen::VectorXd values;  // indexed like the sampler's site order
    Provenance prov;
};

// Exact N(0, K) over an explicit site list via dense Cholesky.
class ExactSampler {
  public:
    ExactSampler(const CovarianceModel& model, std::vector<Site> sites);
    const std::vector<Site>& sites() const { return sites_; }
    const Eigen::MatrixXd& covariance() const { return K_; }
    Eigen::VectorXd sample(RngStream& rng) const;

  private:
    std::vector<Site> sites_;
    Eigen::MatrixXd K_;
    Eigen::MatrixXd chol_;
};

// Stationary GFF approximation on a window of a side-L torus, sampled
// spectrally (one complex FFT per draw, zero mode removed). Covariance on the
// window matches G up to an O(L^{2-d}) torus bias; margin = L/(2R+1) >= 4
// is enforced.
class TorusGffSampler {
  public:
    TorusGffSampler(int d, long L, long window_R);
    ~TorusGffSampler();
    TorusGffSampler(const TorusGffSampler&) = delete;
    TorusGffSampler& operator=(const TorusGffSampler&) = delete;

    long torus_side() const { return L_; }
    const LatticeBox& window() const { return window_; }
    // field over the window in box index order
    Eigen::VectorXd sample(RngStream& rng);

  private:
    struct Impl;
    int d_;
    long L_;
    LatticeBox window_;
    std::unique_ptr<Impl> impl_;
};

// helper: default torus side for a window radius and margin factor
long torus_side_for(long window_R, long margin);

// Gaussian regression onto pinned values: f | f(pins) = values.
class ConditionalModel {
  public:
    ConditionalModel(const CovarianceModel& model, std::vector<Site> sites,
                     std::vector<std::pair<Site, double>> pins);

    const std::vector<Site>& sites() const { return sites_; }
    const std::vector<int>& pin_positions() const { return pin_pos_; }
    const Eigen::VectorXd& pin_values() const { return pin_vals_; }

    // kriging update: turns an unconditional sample over sites() into a
    // conditional one (pinned coordinates exactly at their pin values)
    void apply(Eigen::VectorXd& field) const;

    const Eigen::VectorXd& conditional_mean() const { return cond_mean_; }
    Eigen::MatrixXd conditional_covariance() const;  // Schur complement over free sites
    double pin_density() const;                      // phi_{f(pins)}(pin values)

    // data for the Remark-style Hermite factor at repeated points:
    // Cov(f(pins) | f(rest) = 0) and the regression matrix onto the rest
    const Eigen::MatrixXd& pinned_given_rest_cov() const;
    const Eigen::MatrixXd& regression_to_rest() const;

  private:
    std::vector<Site> sites_;
    std::vector<int> pin_pos_;
    std::vector<int> free_pos_;
    Eigen::VectorXd pin_vals_;
    Eigen::MatrixXd K_;
    Eigen::MatrixXd kriging_;  // K(:,p) K(p,p)^{-1}
    Eigen::MatrixXd Kpp_;
    Eigen::VectorXd cond_mean_;
    mutable Eigen::MatrixXd pinned_rest_cov_, regression_rest_;
    mutable bool hermite_ready_ = false;
    void prepare_hermite_data() const;
};

// f^t = t f + sqrt(1 - t^2) f_tilde; same marginal law as f.
Eigen::VectorXd interpolate(const Eigen::VectorXd& f, const Eigen::VectorXd& f_tilde, double t);

// Covariance of (X_I, X_J^t): block matrix [[K_II, t K_IJ], [t K_JI, K_JJ]].
Eigen::MatrixXd coupled_covariance(const CovarianceModel& model, const std::vector<Site>& I,
                                   const std::vector<Site>& J, double t);

// log density of N(0, K) at x
double gaussian_log_density(const Eigen::MatrixXd& K, const Eigen::VectorXd& x);
double gaussian_density(const Eigen::MatrixXd& K, const Eigen::VectorXd& x);

}  // namespace gff
