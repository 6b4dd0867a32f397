#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <vector>

#include "gfflab/lattice.hpp"

namespace gff {

// {f > level} as a bitmask; the complement bitmask is {f < level} (ties have
// probability zero, masks use strict >).
struct ExcursionSet {
    std::vector<std::uint8_t> above;
    double level = 0.0;
};

ExcursionSet make_excursion(const Eigen::VectorXd& field, double level);

struct ComponentInfo {
    long size = 0;
    long diam_inf = 0;            // d_inf diameter via bounding box
    long min_norm = 0;            // min / max of |x|_inf over the component
    long max_norm = 0;
    bool touches_boundary = false;  // touches the inner boundary of the domain
};

// Component labels for E and for its complement, canonical label = component
// index ordered by minimum site index.
struct ClusterLabeling {
    std::vector<std::int32_t> comp_pos, comp_neg;  // -1 where the site is in the other set
    std::vector<ComponentInfo> pos, neg;
};

ClusterLabeling label_clusters(const SiteGraph& g, const std::uint8_t* mask);
inline ClusterLabeling label_clusters(const SiteGraph& g, const ExcursionSet& ex) {
    return label_clusters(g, ex.above.data());
}

struct ClusterCounts {
    long n_plus = 0, n_minus = 0;
    long n() const { return n_plus + n_minus; }
};

// components disjoint from the inner boundary of the domain
ClusterCounts count_clusters(const ClusterLabeling& lab);
// split of the counted components by d_inf diameter <= r / > r
std::pair<long, long> count_truncated(const ClusterLabeling& lab, long r);

// Level-set functionals Xi: subsets of D -> R. The cluster count comes in the
// boundary-excluding flavour of the box functional and a free variant used on
// small site lists (where every site is boundary and the box count is 0).
class LevelSetFunctional {
  public:
    virtual ~LevelSetFunctional() = default;
    virtual double value(const SiteGraph& g, const std::uint8_t* mask) const = 0;
    virtual long max_single_derivative(const SiteGraph& g) const = 0;  // bound on |d_y Xi|
};

class ClusterCountFunctional : public LevelSetFunctional {
  public:
    ClusterCountFunctional(bool exclude_boundary = true, long diam_min = 0,
                           long diam_max = std::numeric_limits<long>::max())
        : exclude_boundary_(exclude_boundary), diam_min_(diam_min), diam_max_(diam_max) {}
    double value(const SiteGraph& g, const std::uint8_t* mask) const override;
    long max_single_derivative(const SiteGraph& g) const override { return 2 * g.d; }

    static ClusterCountFunctional standard() { return ClusterCountFunctional(true); }
    static ClusterCountFunctional free_count() { return ClusterCountFunctional(false); }
    static ClusterCountFunctional truncated(long r) { return ClusterCountFunctional(true, 0, r); }
    static ClusterCountFunctional above(long r) {
        return ClusterCountFunctional(true, r + 1, std::numeric_limits<long>::max());
    }

  private:
    bool exclude_boundary_;
    long diam_min_, diam_max_;
};

// d_{y_1}...d_{y_m} Xi(E) for distinct sites (inclusion-exclusion over the
// subsets of ybar placed into the configuration; order-independent).
double iterated_derivative(const LevelSetFunctional& xi, const SiteGraph& g,
                           const std::vector<std::uint8_t>& mask,
                           const std::vector<std::int32_t>& ybar);

// spec operation: the standard cluster count on a box
long discrete_derivative(const LatticeBox& box, const std::vector<std::uint8_t>& mask,
                         const std::vector<Site>& ybar);

// Truncated arm event: some component of E \ pins is window-bounded (does not
// touch the window's inner boundary) and joins a neighbour of the origin (or
// of a pin) to the ring origin + partial Lambda_R.
bool arm_event(const LatticeBox& window, const std::vector<std::uint8_t>& mask, const Site& origin,
               long R, const std::vector<Site>& pins = {});

// Two distinct components of (E cap (origin + Lambda_R)) \ {origin}, each
// joining a neighbour of the origin to the ring.
bool two_arm_event(const LatticeBox& window, const std::vector<std::uint8_t>& mask,
                   const Site& origin, long R);

enum class DensityMode { Count, InverseSize };

// Cluster-density estimators over the counting box Lambda_{R_count} inside a
// (possibly larger) labeled window.
double density_estimator(const ClusterLabeling& lab, const SiteGraph& window_graph, long R_count,
                         DensityMode mode);

}  // namespace gff
