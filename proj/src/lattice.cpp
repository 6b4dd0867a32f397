#include "gfflab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace gff {

double Site::norm2() const {
    double s = 0;
    for (int i = 0; i < d; ++i) s += double(c[i]) * double(c[i]);
    return std::sqrt(s);
}

long dist_inf(const Site& a, const Site& b) { return (a - b).norm_inf(); }
double dist_2(const Site& a, const Site& b) { return (a - b).norm2(); }

LatticeBox::LatticeBox(int d, long R, Site origin) : d_(d), R_(R), origin_(origin) {
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("LatticeBox: dimension out of range");
    if (R < 1) throw std::invalid_argument("LatticeBox: R must be >= 1");
    side_ = 2 * R + 1;
    if (origin_.d == 0) origin_ = Site::zero(d);
    if (origin_.d != d) throw std::invalid_argument("LatticeBox: origin dimension mismatch");
    // capacity check for the dense index
    std::size_t n = 1;
    for (int i = 0; i < d; ++i) {
        if (n > std::numeric_limits<std::size_t>::max() / static_cast<std::size_t>(side_))
            throw std::overflow_error("LatticeBox: site index overflow");
        n *= static_cast<std::size_t>(side_);
    }
    if (n > (std::size_t(1) << 40)) throw std::overflow_error("LatticeBox: box too large to index");
    nsites_ = n;
}

LatticeBox make_box(int d, long R) { return LatticeBox(d, R); }

std::size_t LatticeBox::index_of(const Site& s) const {
    std::size_t idx = 0;
    for (int i = 0; i < d_; ++i) {
        long v = s.c[i] - origin_.c[i] + R_;
        idx = idx * static_cast<std::size_t>(side_) + static_cast<std::size_t>(v);
    }
    return idx;
}

Site LatticeBox::site_at(std::size_t idx) const {
    Site s = Site::zero(d_);
    for (int i = d_ - 1; i >= 0; --i) {
        s.c[i] = static_cast<long>(idx % static_cast<std::size_t>(side_)) - R_ + origin_.c[i];
        idx /= static_cast<std::size_t>(side_);
    }
    return s;
}

bool LatticeBox::contains(const Site& s) const {
    if (s.d != d_) return false;
    for (int i = 0; i < d_; ++i)
        if (std::abs(s.c[i] - origin_.c[i]) > R_) return false;
    return true;
}

std::vector<std::size_t> LatticeBox::neighbors(const Site& s) const {
    if (!contains(s)) throw std::invalid_argument("neighbors: site outside box");
    std::vector<std::size_t> out;
    out.reserve(2 * d_);
    for (int i = 0; i < d_; ++i) {
        for (long step : {-1L, +1L}) {
            Site t = s;
            t.c[i] += step;
            if (contains(t)) out.push_back(index_of(t));
        }
    }
    return out;
}

std::vector<std::size_t> LatticeBox::neighbors(std::size_t idx) const { return neighbors(site_at(idx)); }

long LatticeBox::centered_norm_inf(std::size_t idx) const {
    return (site_at(idx) - origin_).norm_inf();
}

long LatticeBox::dist_to_boundary(std::size_t idx) const { return R_ - centered_norm_inf(idx); }

std::vector<std::size_t> LatticeBox::inner_boundary() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nsites_; ++i)
        if (on_inner_boundary(i)) out.push_back(i);
    return out;
}

std::vector<std::size_t> LatticeBox::boundary_faces(int i) const {
    if (i < 0 || i >= d_) throw std::invalid_argument("boundary_faces: face dimension out of range");
    std::vector<std::size_t> out;
    for (std::size_t idx = 0; idx < nsites_; ++idx) {
        Site s = site_at(idx);
        int at_extreme = 0;
        for (int j = 0; j < d_; ++j)
            if (std::abs(s.c[j] - origin_.c[j]) == R_) ++at_extreme;
        if (at_extreme >= d_ - i) out.push_back(idx);
    }
    return out;
}

long LatticeBox::dist_to_face_set(std::size_t idx, int i) const {
    if (i < 0 || i >= d_) throw std::invalid_argument("dist_to_face_set: out of range");
    // distance in d_inf to the closed face union F_R^i; a site reaches F^i by
    // pushing its d-i largest |coordinates| out to R
    Site s = site_at(idx);
    std::vector<long> gaps(static_cast<std::size_t>(d_));
    for (int j = 0; j < d_; ++j) gaps[static_cast<std::size_t>(j)] = R_ - std::abs(s.c[j] - origin_.c[j]);
    std::sort(gaps.begin(), gaps.end());
    return gaps[static_cast<std::size_t>(d_ - i - 1)];  // (d-i)-th smallest gap
}

std::vector<Site> LatticeBox::all_sites() const {
    std::vector<Site> out;
    out.reserve(nsites_);
    for (std::size_t i = 0; i < nsites_; ++i) out.push_back(site_at(i));
    return out;
}

SiteGraph graph_of_box(const LatticeBox& box) {
    SiteGraph g;
    g.d = box.dim();
    g.n = box.num_sites();
    g.coords = box.all_sites();
    g.boundary.resize(g.n);
    g.nbr_start.resize(g.n + 1, 0);
    std::vector<std::vector<std::int32_t>> nbrs(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j : box.neighbors(i)) nbrs[i].push_back(static_cast<std::int32_t>(j));
        g.boundary[i] = box.on_inner_boundary(i) ? 1 : 0;
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < g.n; ++i) {
        g.nbr_start[i] = static_cast<std::int32_t>(total);
        total += nbrs[i].size();
    }
    g.nbr_start[g.n] = static_cast<std::int32_t>(total);
    g.nbr_flat.reserve(total);
    for (auto& v : nbrs) g.nbr_flat.insert(g.nbr_flat.end(), v.begin(), v.end());
    return g;
}

SiteGraph graph_of_sites(const std::vector<Site>& sites) {
    SiteGraph g;
    if (sites.empty()) return g;
    g.d = sites[0].d;
    g.n = sites.size();
    g.coords = sites;
    g.boundary.assign(g.n, 0);
    std::map<std::vector<long>, std::int32_t> index;
    for (std::size_t i = 0; i < g.n; ++i) {
        std::vector<long> key(sites[i].c.begin(), sites[i].c.begin() + g.d);
        if (!index.emplace(key, static_cast<std::int32_t>(i)).second)
            throw std::invalid_argument("graph_of_sites: duplicate site");
    }
    std::vector<std::vector<std::int32_t>> nbrs(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        for (int ax = 0; ax < g.d; ++ax) {
            for (long step : {-1L, +1L}) {
                Site t = sites[i];
                t.c[ax] += step;
                std::vector<long> key(t.c.begin(), t.c.begin() + g.d);
                auto it = index.find(key);
                if (it != index.end())
                    nbrs[i].push_back(it->second);
                else
                    g.boundary[i] = 1;  // has a Z^d neighbour outside D
            }
        }
    }
    g.nbr_start.resize(g.n + 1, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < g.n; ++i) {
        g.nbr_start[i] = static_cast<std::int32_t>(total);
        total += nbrs[i].size();
    }
    g.nbr_start[g.n] = static_cast<std::int32_t>(total);
    for (auto& v : nbrs) g.nbr_flat.insert(g.nbr_flat.end(), v.begin(), v.end());
    return g;
}

}  // namespace gff
