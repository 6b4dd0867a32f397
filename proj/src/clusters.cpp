#include "gfflab/clusters.hpp"

#include <algorithm>
#include <stdexcept>

namespace gff {

ExcursionSet make_excursion(const Eigen::VectorXd& field, double level) {
    ExcursionSet ex;
    ex.level = level;
    ex.above.resize(static_cast<std::size_t>(field.size()));
    for (Eigen::Index i = 0; i < field.size(); ++i)
        ex.above[static_cast<std::size_t>(i)] = field[i] > level ? 1 : 0;
    return ex;
}

namespace {

struct UnionFind {
    std::vector<std::int32_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<std::int32_t>(i);
    }
    std::int32_t find(std::int32_t x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    }
    // smaller index stays root, so roots are canonical minimum-site labels
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b)
            parent[static_cast<std::size_t>(b)] = a;
        else
            parent[static_cast<std::size_t>(a)] = b;
    }
};

void label_one_sign(const SiteGraph& g, const std::uint8_t* mask, std::uint8_t v,
                    std::vector<std::int32_t>& comp, std::vector<ComponentInfo>& infos) {
    const std::size_t n = g.n;
    UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] != v) continue;
        for (const std::int32_t* p = g.nbr_begin(i); p != g.nbr_end(i); ++p) {
            std::size_t j = static_cast<std::size_t>(*p);
            if (j < i && mask[j] == v) uf.unite(static_cast<std::int32_t>(i), *p);
        }
    }
    comp.assign(n, -1);
    infos.clear();
    std::vector<std::int32_t> root_to_id(n, -1);
    std::vector<std::array<long, kMaxDim>> lo, hi;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] != v) continue;
        std::int32_t r = uf.find(static_cast<std::int32_t>(i));
        std::int32_t id = root_to_id[static_cast<std::size_t>(r)];
        const Site& s = g.coords[i];
        if (id < 0) {
            id = static_cast<std::int32_t>(infos.size());
            root_to_id[static_cast<std::size_t>(r)] = id;
            infos.push_back(ComponentInfo{});
            ComponentInfo& ci = infos.back();
            ci.min_norm = ci.max_norm = s.norm_inf();
            std::array<long, kMaxDim> l{}, h{};
            for (int a = 0; a < g.d; ++a) l[static_cast<std::size_t>(a)] = h[static_cast<std::size_t>(a)] = s.c[a];
            lo.push_back(l);
            hi.push_back(h);
        }
        ComponentInfo& ci = infos[static_cast<std::size_t>(id)];
        ci.size += 1;
        long nm = s.norm_inf();
        ci.min_norm = std::min(ci.min_norm, nm);
        ci.max_norm = std::max(ci.max_norm, nm);
        for (int a = 0; a < g.d; ++a) {
            lo[static_cast<std::size_t>(id)][static_cast<std::size_t>(a)] =
                std::min(lo[static_cast<std::size_t>(id)][static_cast<std::size_t>(a)], s.c[a]);
            hi[static_cast<std::size_t>(id)][static_cast<std::size_t>(a)] =
                std::max(hi[static_cast<std::size_t>(id)][static_cast<std::size_t>(a)], s.c[a]);
        }
        if (g.boundary[i]) ci.touches_boundary = true;
        comp[i] = id;
    }
    for (std::size_t id = 0; id < infos.size(); ++id) {
        long dm = 0;
        for (int a = 0; a < g.d; ++a)
            dm = std::max(dm, hi[id][static_cast<std::size_t>(a)] - lo[id][static_cast<std::size_t>(a)]);
        infos[id].diam_inf = dm;
    }
}

}  // namespace

ClusterLabeling label_clusters(const SiteGraph& g, const std::uint8_t* mask) {
    ClusterLabeling lab;
    label_one_sign(g, mask, 1, lab.comp_pos, lab.pos);
    label_one_sign(g, mask, 0, lab.comp_neg, lab.neg);
    return lab;
}

ClusterCounts count_clusters(const ClusterLabeling& lab) {
    ClusterCounts c;
    for (const auto& ci : lab.pos)
        if (!ci.touches_boundary) ++c.n_plus;
    for (const auto& ci : lab.neg)
        if (!ci.touches_boundary) ++c.n_minus;
    return c;
}

std::pair<long, long> count_truncated(const ClusterLabeling& lab, long r) {
    if (r < 0) throw std::invalid_argument("count_truncated: r >= 0 required");
    long le = 0, gt = 0;
    auto tally = [&](const std::vector<ComponentInfo>& infos) {
        for (const auto& ci : infos) {
            if (ci.touches_boundary) continue;
            (ci.diam_inf <= r ? le : gt) += 1;
        }
    };
    tally(lab.pos);
    tally(lab.neg);
    return {le, gt};
}

double ClusterCountFunctional::value(const SiteGraph& g, const std::uint8_t* mask) const {
    ClusterLabeling lab = label_clusters(g, mask);
    long count = 0;
    auto tally = [&](const std::vector<ComponentInfo>& infos) {
        for (const auto& ci : infos) {
            if (exclude_boundary_ && ci.touches_boundary) continue;
            if (ci.diam_inf < diam_min_ || ci.diam_inf > diam_max_) continue;
            ++count;
        }
    };
    tally(lab.pos);
    tally(lab.neg);
    return static_cast<double>(count);
}

double iterated_derivative(const LevelSetFunctional& xi, const SiteGraph& g,
                           const std::vector<std::uint8_t>& mask,
                           const std::vector<std::int32_t>& ybar) {
    const std::size_t m = ybar.size();
    if (m == 0) return xi.value(g, mask.data());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            if (ybar[i] == ybar[j])
                throw std::invalid_argument("iterated_derivative: repeated sites");
    std::vector<std::uint8_t> work = mask;
    double total = 0.0;
    for (std::size_t s = 0; s < (std::size_t(1) << m); ++s) {
        int bits = 0;
        for (std::size_t i = 0; i < m; ++i) {
            bool in = (s >> i) & 1;
            work[static_cast<std::size_t>(ybar[i])] = in ? 1 : 0;
            bits += in;
        }
        double sign = ((m - static_cast<std::size_t>(bits)) % 2 == 0) ? 1.0 : -1.0;
        total += sign * xi.value(g, work.data());
    }
    return total;
}

long discrete_derivative(const LatticeBox& box, const std::vector<std::uint8_t>& mask,
                         const std::vector<Site>& ybar) {
    SiteGraph g = graph_of_box(box);
    std::vector<std::int32_t> idx;
    for (const auto& y : ybar) {
        if (!box.contains(y)) throw std::invalid_argument("discrete_derivative: site outside box");
        idx.push_back(static_cast<std::int32_t>(box.index_of(y)));
    }
    ClusterCountFunctional xi = ClusterCountFunctional::standard();
    double v = iterated_derivative(xi, g, mask, idx);
    return static_cast<long>(v);
}

namespace {

// BFS the component of `start` within allowed sites; reports ring contact and
// window-boundary contact.
struct ArmScan {
    bool reaches_ring = false;
    bool touches_window_edge = false;
};

ArmScan scan_component(const LatticeBox& window, const std::vector<std::uint8_t>& allowed,
                       std::vector<std::uint8_t>& visited, std::size_t start, const Site& origin,
                       long R) {
    ArmScan out;
    std::vector<std::size_t> stack{start};
    visited[start] = 1;
    while (!stack.empty()) {
        std::size_t cur = stack.back();
        stack.pop_back();
        Site s = window.site_at(cur);
        if (dist_inf(s, origin) == R) out.reaches_ring = true;
        if (window.on_inner_boundary(cur)) out.touches_window_edge = true;
        for (std::size_t nb : window.neighbors(cur)) {
            if (!allowed[nb] || visited[nb]) continue;
            visited[nb] = 1;
            stack.push_back(nb);
        }
    }
    return out;
}

}  // namespace

bool arm_event(const LatticeBox& window, const std::vector<std::uint8_t>& mask, const Site& origin,
               long R, const std::vector<Site>& pins) {
    if (R < 1) throw std::invalid_argument("arm_event: R >= 1 required");
    if (dist_inf(origin, window.origin()) + R >= window.radius())
        throw std::invalid_argument("arm_event: window too small to certify boundedness");
    std::vector<std::uint8_t> allowed = mask;
    std::vector<Site> anchors = pins;
    anchors.push_back(origin);
    for (const auto& p : pins) {
        if (!window.contains(p)) throw std::invalid_argument("arm_event: pin outside window");
        allowed[window.index_of(p)] = 0;  // E \ pins
    }
    std::vector<std::uint8_t> visited(window.num_sites(), 0);
    for (const auto& a : anchors) {
        for (std::size_t nb : window.neighbors(a)) {
            if (!allowed[nb] || visited[nb]) continue;
            ArmScan r = scan_component(window, allowed, visited, nb, origin, R);
            if (r.reaches_ring && !r.touches_window_edge) return true;
        }
    }
    return false;
}

bool two_arm_event(const LatticeBox& window, const std::vector<std::uint8_t>& mask,
                   const Site& origin, long R) {
    if (R < 1) throw std::invalid_argument("two_arm_event: R >= 1 required");
    if (dist_inf(origin, window.origin()) + R >= window.radius())
        throw std::invalid_argument("two_arm_event: window too small");
    // restrict to E cap (origin + Lambda_R) minus the origin itself
    std::vector<std::uint8_t> allowed(window.num_sites(), 0);
    for (std::size_t i = 0; i < window.num_sites(); ++i)
        allowed[i] = mask[i] && dist_inf(window.site_at(i), origin) <= R;
    allowed[window.index_of(origin)] = 0;
    std::vector<std::uint8_t> visited(window.num_sites(), 0);
    int arms = 0;
    for (std::size_t nb : window.neighbors(origin)) {
        if (!allowed[nb] || visited[nb]) continue;
        ArmScan r = scan_component(window, allowed, visited, nb, origin, R);
        if (r.reaches_ring && ++arms >= 2) return true;
    }
    return false;
}

double density_estimator(const ClusterLabeling& lab, const SiteGraph& window_graph, long R_count,
                         DensityMode mode) {
    const int d = window_graph.d;
    double vol = std::pow(static_cast<double>(2 * R_count + 1), d);
    if (mode == DensityMode::Count) {
        long n = 0;
        for (const auto& ci : lab.pos)
            if (ci.max_norm < R_count) ++n;
        for (const auto& ci : lab.neg)
            if (ci.max_norm < R_count) ++n;
        return static_cast<double>(n) / vol;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < window_graph.n; ++i) {
        if (window_graph.coords[i].norm_inf() > R_count) continue;
        std::int32_t cp = lab.comp_pos[i];
        const ComponentInfo& ci = cp >= 0 ? lab.pos[static_cast<std::size_t>(cp)]
                                          : lab.neg[static_cast<std::size_t>(lab.comp_neg[i])];
        if (!ci.touches_boundary) acc += 1.0 / static_cast<double>(ci.size);
    }
    return acc / vol;
}

}  // namespace gff
