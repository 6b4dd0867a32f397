#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <vector>

#include "gfflab/rng.hpp"

namespace gff {

// exponent vector; alpha~ is the componentwise max(alpha_i - 1, 0)
struct MultiIndex {
    std::vector<int> exp;
    MultiIndex() = default;
    explicit MultiIndex(std::vector<int> e) : exp(std::move(e)) {}
    static MultiIndex of_tuple(const std::vector<int>& coords, int dim);
    int order() const;
    MultiIndex reduced() const;  // max(alpha_i - 1, 0)
    bool operator<(const MultiIndex& o) const { return exp < o.exp; }
    bool is_zero() const { return order() == 0; }
};

// sparse polynomial in n variables with deterministic term order
class Poly {
  public:
    explicit Poly(int nvars = 0) : nvars_(nvars) {}
    static Poly constant(int nvars, double c);
    static Poly variable(int nvars, int i);

    int nvars() const { return nvars_; }
    const std::map<std::vector<int>, double>& terms() const { return terms_; }
    void add_term(const std::vector<int>& mono, double c);

    Poly operator+(const Poly& o) const;
    Poly operator-(const Poly& o) const;
    Poly operator*(const Poly& o) const;
    Poly scaled(double c) const;
    Poly derivative(int i) const;
    double eval(const Eigen::VectorXd& x) const;
    int degree() const;

  private:
    int nvars_;
    std::map<std::vector<int>, double> terms_;
};

// probabilists' Hermite polynomial H_n(x), three-term recurrence
double hermite_univariate(int n, double x);

// H^alpha_K(x) = (-1)^{|alpha|} d^alpha phi_K(x) / phi_K(x) as a polynomial,
// built by the recurrence H^{a+e_i} = (K^{-1} x)_i H^a - d_i H^a.
Poly hermite_multivariate_poly(const Eigen::MatrixXd& cov, const MultiIndex& alpha);
double hermite_multivariate(const Eigen::MatrixXd& cov, const MultiIndex& alpha,
                            const Eigen::VectorXd& x);

// Wick product :X_{i_1} ... X_{i_n}: as a polynomial in the coordinates
// (repeats allowed; indices are 0-based into cov).
Poly wick_polynomial(const Eigen::MatrixXd& cov, const std::vector<int>& indices);

// Complete Feynman diagrams on row-grouped vertices with no intra-row edges.
struct DiagramSet {
    std::vector<std::vector<std::pair<int, int>>> diagrams;  // vertex index pairs
    std::vector<int> row_of;                                 // vertex -> row
    bool odd_total = false;
};
DiagramSet enumerate_diagrams(const std::vector<int>& row_sizes);

// E[ prod_i :X_{rows[i]}: ] via the diagram formula; the two-row case runs
// as a permanent (Ryser) instead of explicit enumeration.
double wick_moment(const Eigen::MatrixXd& cov, const std::vector<std::vector<int>>& rows);

// Chaos projection of a functional of a small Gaussian vector.
struct ChaosProjection {
    int dim = 0;
    int max_order = 0;
    double mean = 0.0;
    double total_variance = 0.0;                        // direct MC Var (black-box path)
    std::vector<std::vector<std::vector<int>>> basis;   // [m][b] = sorted index tuple
    std::vector<Eigen::VectorXd> coeffs;                // per order, in the Wick monomial basis
    std::vector<double> order_variance;                 // Var[Q_m]
    std::vector<double> gram_condition;
};

// black-box path: regression of MC samples onto the (non-orthogonal within an
// order) Wick monomial basis, Gram matrices computed exactly by wick_moment
ChaosProjection chaos_project_blackbox(const Eigen::MatrixXd& cov,
                                       const std::function<double(const Eigen::VectorXd&)>& F,
                                       int max_order, std::size_t n, RngStream& rng);

// smooth-oracle path: expected mixed derivatives E[d^alpha Phi] supplied
// directly (keyed by multi-index)
ChaosProjection chaos_project_smooth(const Eigen::MatrixXd& cov,
                                     const std::function<double(const MultiIndex&)>& dmean,
                                     int max_order);

// E[ H^{aI,aJ}_{(X_I,Y_J)}(x, Y_J) H^{aI',aJ'}_{(X_I,Y_J)}(x, Y_J) | X_I = x ]
// via the explicit matrix sum (rows/columns of theta constrained); cov is the
// joint covariance of (X_I, Y_J) with the I block first.
double conditional_hermite_moment(const Eigen::MatrixXd& cov, int nI, const MultiIndex& aI,
                                  const MultiIndex& aJ, const MultiIndex& aI2,
                                  const MultiIndex& aJ2, const Eigen::VectorXd& x);

// sorted index tuples of length m over {0..dim-1}
std::vector<std::vector<int>> multisets_of_order(int dim, int m);

}  // namespace gff
