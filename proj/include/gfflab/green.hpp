#pragma once

#include <utility>
#include <vector>

#include "gfflab/lattice.hpp"

namespace gff {

// Green's function G(x) of simple random walk on Z^d, d >= 3, evaluated by
// deterministic quadrature of the representation
//   G(x) = int_0^infty prod_i e^{-s/d} I_{x_i}(s/d) ds
// with an analytic tail. Values are cached by (d, sorted |coords|); the cache
// is guarded by a lock so concurrent reads are safe.
//
// Relative accuracy is ~1e-11 for |x_i| <= 96; tol is checked against that.
double walk_green(int d, const Site& x, double tol = 1e-9);

// (c_d, alpha): G(x) ~ c_d |x|^{2-d}, alpha = d-2.
std::pair<double, int> green_asymptotic(int d);

// Two-term large-|x| approximation c_d |x|^{2-d} used beyond a switch radius.
double walk_green_asymptotic_value(int d, const Site& x);

// Spectral density (2 pi)^{-d} / (1 - phi(theta)), phi = (1/d) sum cos theta_i.
// theta = 0 is a pole.
double spectral_density(int d, const std::vector<double>& theta);

// Dense table of G over offsets u in [-m, m]^d, flat row-major. Shares the
// quadrature node tables across all offsets, so this is the fast path for
// covariance assembly and lattice kernel sums.
std::vector<double> green_offset_table(int d, long m);
std::size_t offset_table_index(int d, long m, const Site& u);

}  // namespace gff
