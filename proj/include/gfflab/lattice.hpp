#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gff {

constexpr int kMaxDim = 6;

// A lattice point. Fixed-capacity so tuples of sites can live in flat arrays.
struct Site {
    std::array<long, kMaxDim> c{};
    int d = 0;

    Site() = default;
    Site(std::initializer_list<long> xs) {
        d = static_cast<int>(xs.size());
        int i = 0;
        for (long x : xs) c[i++] = x;
    }
    static Site zero(int dim) {
        Site s;
        s.d = dim;
        return s;
    }
    long operator[](int i) const { return c[i]; }
    long& operator[](int i) { return c[i]; }
    bool operator==(const Site& o) const {
        if (d != o.d) return false;
        for (int i = 0; i < d; ++i)
            if (c[i] != o.c[i]) return false;
        return true;
    }
    Site operator+(const Site& o) const {
        Site r = *this;
        for (int i = 0; i < d; ++i) r.c[i] += o.c[i];
        return r;
    }
    Site operator-(const Site& o) const {
        Site r = *this;
        for (int i = 0; i < d; ++i) r.c[i] -= o.c[i];
        return r;
    }
    Site operator-() const {
        Site r = *this;
        for (int i = 0; i < d; ++i) r.c[i] = -r.c[i];
        return r;
    }
    long norm_inf() const {
        long m = 0;
        for (int i = 0; i < d; ++i) m = std::max(m, std::abs(c[i]));
        return m;
    }
    double norm2() const;
    long norm1() const {
        long m = 0;
        for (int i = 0; i < d; ++i) m += std::abs(c[i]);
        return m;
    }
};

long dist_inf(const Site& a, const Site& b);
double dist_2(const Site& a, const Site& b);

// The box Lambda_R = [-R,R]^d (shifted by an optional origin offset), with a
// dense row-major site index that everything downstream keys on.
class LatticeBox {
  public:
    LatticeBox(int d, long R, Site origin = Site());

    int dim() const { return d_; }
    long radius() const { return R_; }
    long side() const { return side_; }
    const Site& origin() const { return origin_; }
    std::size_t num_sites() const { return nsites_; }

    std::size_t index_of(const Site& s) const;
    Site site_at(std::size_t idx) const;
    bool contains(const Site& s) const;

    // in-box nearest neighbours, axis order, - before +
    std::vector<std::size_t> neighbors(std::size_t idx) const;
    std::vector<std::size_t> neighbors(const Site& s) const;
    int max_degree() const { return 2 * d_; }

    // d_inf distance from the site to the inner boundary: R - |x - origin|_inf
    long dist_to_boundary(std::size_t idx) const;
    long centered_norm_inf(std::size_t idx) const;

    bool on_inner_boundary(std::size_t idx) const { return dist_to_boundary(idx) == 0; }
    std::vector<std::size_t> inner_boundary() const;

    // Union of the closed i-dimensional boundary faces F_R^i: sites with at
    // least d-i coordinates at distance R from the centre. F^{d-1} = inner
    // boundary, and F^i nests inside F^{i+1}.
    std::vector<std::size_t> boundary_faces(int i) const;
    long dist_to_face_set(std::size_t idx, int i) const;

    std::vector<Site> all_sites() const;

  private:
    int d_;
    long R_;
    Site origin_;
    long side_;
    std::size_t nsites_;
};

LatticeBox make_box(int d, long R);

// Adjacency view used by the cluster machinery: works for boxes and for
// arbitrary finite site lists (the paper's general D subset of Z^d).
struct SiteGraph {
    int d = 0;
    std::size_t n = 0;
    std::vector<std::int32_t> nbr_flat;    // packed neighbour lists
    std::vector<std::int32_t> nbr_start;   // n+1 offsets
    std::vector<std::uint8_t> boundary;    // 1 if the site is in the inner boundary of D
    std::vector<Site> coords;

    std::size_t degree(std::size_t i) const {
        return static_cast<std::size_t>(nbr_start[i + 1] - nbr_start[i]);
    }
    const std::int32_t* nbr_begin(std::size_t i) const { return nbr_flat.data() + nbr_start[i]; }
    const std::int32_t* nbr_end(std::size_t i) const { return nbr_flat.data() + nbr_start[i + 1]; }
};

SiteGraph graph_of_box(const LatticeBox& box);
// Graph of an explicit site list; boundary flags mark sites with a Z^d
// neighbour outside the list (so D = its own boundary for small scattered sets).
SiteGraph graph_of_sites(const std::vector<Site>& sites);

}  // namespace gff
