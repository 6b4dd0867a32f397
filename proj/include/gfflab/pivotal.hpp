#pragma once

#include <map>
#include <memory>
#include <string>

#include "gfflab/clusters.hpp"
#include "gfflab/gaussian.hpp"
#include "gfflab/wick.hpp"

namespace gff {

struct PivotalEstimate {
    std::string target;          // "P_R", "P_inf_proxy", "P_H", "P_trunc", "P_joint"
    std::vector<Site> points;
    std::vector<Site> points2;   // second tuple for joint intensities
    double level = 0.0;
    double value = 0.0;
    double se = 0.0;
    std::size_t budget = 0;
    long window_R = 0;
    std::string sampler = "exact";
    double t = 0.0;                  // joint interpolation parameter
    double flagged_fraction = 0.0;   // samples where the window could not certify stabilisation
    double sensitivity = 0.0;        // two-window diagnostic
};

// Monte Carlo pivotal intensities for a level-set functional on a fixed
// finite domain. The estimator samples the conditioned field by kriging an
// unconditional draw and multiplies by the exact pinned density; repeated
// points carry the low-dimensional Hermite factor of the conditional
// covariance (the Remark-2.4-style form, which avoids the whole-domain
// Hermite polynomial).
class PivotalLab {
  public:
    PivotalLab(const CovarianceModel& model, SiteGraph graph);

    const SiteGraph& graph() const { return graph_; }
    const Eigen::MatrixXd& covariance() const { return sampler_->covariance(); }

    PivotalEstimate intensity(const LevelSetFunctional& xi, double level,
                              const std::vector<Site>& y, std::size_t n, RngStream& rng) const;

    // shared-field batch: one conditioned evaluation per target per draw
    std::vector<PivotalEstimate> intensity_batch(const LevelSetFunctional& xi, double level,
                                                 const std::vector<std::vector<Site>>& targets,
                                                 std::size_t n, RngStream& rng) const;

    // m+m joint pivotal intensity at (x, y) for the coupled pair (f, f^t)
    PivotalEstimate joint_intensity(const LevelSetFunctional& xi, double level,
                                    const std::vector<Site>& x, const std::vector<Site>& y,
                                    double t, std::size_t n, RngStream& rng) const;

    // Var[sum_{m' >= m} Q_{m'}[Xi(f - l)]] by the iterated-interpolation
    // formula: the nested simplex integral collapses to
    // int_0^1 P^s (1-s)^{m-1}/(m-1)! ds, with the quadrature map s = 1-(1-u)^2
    // keeping nodes away from the (1-s)^{-m+1/2} endpoint.
    double tail_variance(const LevelSetFunctional& xi, double level, int m, int t_nodes,
                         std::size_t n_per_node, RngStream& rng) const;

  private:
    CovarianceModel model_;
    SiteGraph graph_;
    std::unique_ptr<ExactSampler> sampler_;

    struct Target;  // resolved tuple: pins, kriging, Hermite data
    Target resolve(const std::vector<Site>& y, double level) const;
    double sample_value(const Target& t, const LevelSetFunctional& xi,
                        const Eigen::VectorXd& unconditional, double level,
                        std::vector<std::uint8_t>& mask, bool* flagged) const;
};

// P_infty proxy: P_R on a centred window with a two-window sensitivity
// diagnostic; stabilisation failures are counted, not hidden.
class StationaryPivotalLab {
  public:
    StationaryPivotalLab(int d, long window_R, long diag_window_R = 0);
    long window_radius() const { return window_R_; }

    PivotalEstimate intensity(double level, const std::vector<Site>& y_offsets, std::size_t n,
                              RngStream& rng) const;
    std::vector<PivotalEstimate> intensity_batch(double level,
                                                 const std::vector<std::vector<Site>>& offsets,
                                                 std::size_t n, RngStream& rng) const;

    const PivotalLab& lab() const { return *main_; }

  private:
    int d_;
    long window_R_, diag_R_;
    std::unique_ptr<PivotalLab> main_, diag_;
};

// Half-space pivotal intensity at height k: the window is a box pushed
// against the hyperplane {x_1 = 0}, the point sits at (k, 0, ..., 0).
PivotalEstimate halfspace_pivotal_intensity(int d, double level, long k, long window_R,
                                            std::size_t n, RngStream& rng);

// Intensity of the diameter-truncated count N_{<= r}; returns exact 0 without
// sampling when diam_inf(y) > r + 2.
PivotalEstimate truncated_pivotal_intensity(int d, double level, const std::vector<Site>& y_offsets,
                                            long r, long window_R, std::size_t n, RngStream& rng);

// mu^{(m)}(l) = (-1)^m sum_{x_2..x_m} P_inf(0, x_2, ..., x_m), truncated at
// the given offset cutoff; the reported tail bound is the largest |P| seen on
// the cutoff shell times the shell count.
struct MuDerivativeEstimate {
    int m = 1;
    double value = 0.0;
    double se = 0.0;
    long cutoff = 0;
    double shell_tail_bound = 0.0;
    PivotalEstimate diagonal;  // the (0,...,0) term
};
MuDerivativeEstimate mu_derivative(int d, double level, int m, long window_R, long cutoff,
                                   std::size_t n, RngStream& rng);

// Permutation-invariant intensity table over tuples of graph site indices.
class IntensityTable {
  public:
    explicit IntensityTable(int m) : m_(m) {}
    int order() const { return m_; }
    void set(std::vector<int> tuple, double value);
    double get(std::vector<int> tuple) const;
    const std::map<std::vector<int>, double>& entries() const { return entries_; }

  private:
    int m_;
    std::map<std::vector<int>, double> entries_;  // sorted tuples
};

// Evaluates Q_m[Xi] = (1/m!) sum_x :f(x_1)...f(x_m): P(x) on single field
// realizations, plus the deterministic diagram-formula variance
// (1/m!) sum_{x,y} prod_i K(x_i, y_i) P(x) P(y).
class ChaosComponentEvaluator {
  public:
    ChaosComponentEvaluator(const Eigen::MatrixXd& K, const IntensityTable& table);
    double eval(const Eigen::VectorXd& field) const;
    double variance() const;

  private:
    Eigen::MatrixXd K_;
    int m_;
    std::vector<std::vector<int>> tuples_;
    std::vector<double> weights_;  // P(x) / prod(mult!)
    std::vector<double> raw_;      // P(x)
    std::vector<Poly> wick_;
};

// Deterministic oracle for E[Xi^eps(f - nu)] and its level-derivatives.
// Supported models: one-factor (diag + rank-1), i.i.d., or any 2-dimensional
// covariance -- exactly the cases where the orthant probabilities reduce to
// products of Gaussian CDFs under a single quadrature.
class SmoothedFunctionalOracle {
  public:
    SmoothedFunctionalOracle(const CovarianceModel& model, const SiteGraph& graph,
                             const LevelSetFunctional& xi, double eps);

    double mean(const Eigen::VectorXd& nu) const;
    double mean_level(double level) const;
    // exact d/d nu(y) of mean
    double derivative(std::size_t y, const Eigen::VectorXd& nu) const;
    // central finite difference of order |ys| in the listed coordinates
    double mixed_difference(const std::vector<std::size_t>& ys, const Eigen::VectorXd& nu,
                            double step) const;

  private:
    std::size_t n_;
    std::vector<double> xi_values_;  // per config bitmask
    Eigen::VectorXd load_, sd_;      // W = load U + sd .* xi, with Var inflated by eps^2
    std::vector<double> qnodes_, qweights_;
};

}  // namespace gff
