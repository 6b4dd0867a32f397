#include "gfflab/wick.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gff {

MultiIndex MultiIndex::of_tuple(const std::vector<int>& coords, int dim) {
    MultiIndex a;
    a.exp.assign(static_cast<std::size_t>(dim), 0);
    for (int c : coords) {
        if (c < 0 || c >= dim) throw std::invalid_argument("MultiIndex: coordinate out of range");
        a.exp[static_cast<std::size_t>(c)] += 1;
    }
    return a;
}

int MultiIndex::order() const {
    int s = 0;
    for (int e : exp) s += e;
    return s;
}

MultiIndex MultiIndex::reduced() const {
    MultiIndex r = *this;
    for (int& e : r.exp) e = std::max(e - 1, 0);
    return r;
}

Poly Poly::constant(int nvars, double c) {
    Poly p(nvars);
    if (c != 0.0) p.terms_[std::vector<int>(static_cast<std::size_t>(nvars), 0)] = c;
    return p;
}

Poly Poly::variable(int nvars, int i) {
    Poly p(nvars);
    std::vector<int> mono(static_cast<std::size_t>(nvars), 0);
    mono[static_cast<std::size_t>(i)] = 1;
    p.terms_[mono] = 1.0;
    return p;
}

void Poly::add_term(const std::vector<int>& mono, double c) {
    if (c == 0.0) return;
    auto it = terms_.find(mono);
    if (it == terms_.end())
        terms_[mono] = c;
    else {
        it->second += c;
        if (it->second == 0.0) terms_.erase(it);
    }
}

Poly Poly::operator+(const Poly& o) const {
    Poly r = *this;
    for (const auto& [m, c] : o.terms_) r.add_term(m, c);
    return r;
}

Poly Poly::operator-(const Poly& o) const {
    Poly r = *this;
    for (const auto& [m, c] : o.terms_) r.add_term(m, -c);
    return r;
}

Poly Poly::operator*(const Poly& o) const {
    Poly r(nvars_);
    std::vector<int> mono(static_cast<std::size_t>(nvars_));
    for (const auto& [m1, c1] : terms_)
        for (const auto& [m2, c2] : o.terms_) {
            for (std::size_t i = 0; i < mono.size(); ++i) mono[i] = m1[i] + m2[i];
            r.add_term(mono, c1 * c2);
        }
    return r;
}

Poly Poly::scaled(double c) const {
    Poly r(nvars_);
    if (c == 0.0) return r;
    for (const auto& [m, v] : terms_) r.add_term(m, v * c);
    return r;
}

Poly Poly::derivative(int i) const {
    Poly r(nvars_);
    for (const auto& [m, c] : terms_) {
        int e = m[static_cast<std::size_t>(i)];
        if (e == 0) continue;
        std::vector<int> mono = m;
        mono[static_cast<std::size_t>(i)] -= 1;
        r.add_term(mono, c * e);
    }
    return r;
}

double Poly::eval(const Eigen::VectorXd& x) const {
    double total = 0.0;
    for (const auto& [m, c] : terms_) {
        double t = c;
        for (std::size_t i = 0; i < m.size(); ++i)
            for (int k = 0; k < m[i]; ++k) t *= x[static_cast<Eigen::Index>(i)];
        total += t;
    }
    return total;
}

int Poly::degree() const {
    int d = 0;
    for (const auto& [m, c] : terms_) {
        int s = 0;
        for (int e : m) s += e;
        d = std::max(d, s);
    }
    return d;
}

double hermite_univariate(int n, double x) {
    if (n < 0) throw std::invalid_argument("hermite_univariate: n >= 0");
    double hm1 = 0.0, h = 1.0;  // H_{-1}, H_0
    for (int k = 0; k < n; ++k) {
        double next = x * h - k * hm1;
        hm1 = h;
        h = next;
    }
    return h;
}

Poly hermite_multivariate_poly(const Eigen::MatrixXd& cov, const MultiIndex& alpha) {
    const int n = static_cast<int>(cov.rows());
    if (static_cast<int>(alpha.exp.size()) != n)
        throw std::invalid_argument("hermite_multivariate_poly: index dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("hermite_multivariate_poly: singular covariance");
    Eigen::MatrixXd M = llt.solve(Eigen::MatrixXd::Identity(n, n));
    // precompute the linear forms (M x)_i
    std::vector<Poly> mx;
    for (int i = 0; i < n; ++i) {
        Poly p(n);
        for (int j = 0; j < n; ++j) {
            std::vector<int> mono(static_cast<std::size_t>(n), 0);
            mono[static_cast<std::size_t>(j)] = 1;
            p.add_term(mono, M(i, j));
        }
        mx.push_back(p);
    }
    Poly h = Poly::constant(n, 1.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < alpha.exp[static_cast<std::size_t>(i)]; ++k)
            h = mx[static_cast<std::size_t>(i)] * h - h.derivative(i);
    return h;
}

double hermite_multivariate(const Eigen::MatrixXd& cov, const MultiIndex& alpha,
                            const Eigen::VectorXd& x) {
    return hermite_multivariate_poly(cov, alpha).eval(x);
}

namespace {

Poly wick_recursive(const Eigen::MatrixXd& cov, std::vector<int> idx,
                    std::map<std::vector<int>, Poly>& memo) {
    const int n = static_cast<int>(cov.rows());
    if (idx.empty()) return Poly::constant(n, 1.0);
    std::sort(idx.begin(), idx.end());
    auto it = memo.find(idx);
    if (it != memo.end()) return it->second;
    int last = idx.back();
    std::vector<int> rest(idx.begin(), idx.end() - 1);
    Poly p = Poly::variable(n, last) * wick_recursive(cov, rest, memo);
    for (std::size_t j = 0; j < rest.size(); ++j) {
        std::vector<int> drop = rest;
        drop.erase(drop.begin() + static_cast<std::ptrdiff_t>(j));
        p = p - wick_recursive(cov, drop, memo).scaled(cov(last, rest[j]));
    }
    memo.emplace(idx, p);
    return p;
}

}  // namespace

Poly wick_polynomial(const Eigen::MatrixXd& cov, const std::vector<int>& indices) {
    for (int i : indices)
        if (i < 0 || i >= cov.rows()) throw std::invalid_argument("wick_polynomial: index range");
    std::map<std::vector<int>, Poly> memo;
    return wick_recursive(cov, indices, memo);
}

namespace {

void match_recursive(const std::vector<int>& row_of, std::vector<int>& partner,
                     std::vector<std::pair<int, int>>& current,
                     std::vector<std::vector<std::pair<int, int>>>& out) {
    int first = -1;
    for (std::size_t v = 0; v < partner.size(); ++v)
        if (partner[v] < 0) {
            first = static_cast<int>(v);
            break;
        }
    if (first < 0) {
        out.push_back(current);
        return;
    }
    for (std::size_t w = static_cast<std::size_t>(first) + 1; w < partner.size(); ++w) {
        if (partner[w] >= 0) continue;
        if (row_of[w] == row_of[static_cast<std::size_t>(first)]) continue;  // no intra-row edge
        partner[static_cast<std::size_t>(first)] = static_cast<int>(w);
        partner[w] = first;
        current.emplace_back(first, static_cast<int>(w));
        match_recursive(row_of, partner, current, out);
        current.pop_back();
        partner[static_cast<std::size_t>(first)] = -1;
        partner[w] = -1;
    }
}

// Ryser's permanent, O(2^k k)
double permanent(const Eigen::MatrixXd& A) {
    const int k = static_cast<int>(A.rows());
    if (k == 0) return 1.0;
    double total = 0.0;
    std::vector<double> rowsum(static_cast<std::size_t>(k));
    for (unsigned s = 1; s < (1u << k); ++s) {
        int bits = __builtin_popcount(s);
        double prod = 1.0;
        for (int i = 0; i < k; ++i) {
            double r = 0.0;
            for (int j = 0; j < k; ++j)
                if (s & (1u << j)) r += A(i, j);
            prod *= r;
        }
        total += ((k - bits) % 2 ? -1.0 : 1.0) * prod;
    }
    return total;
}

}  // namespace

DiagramSet enumerate_diagrams(const std::vector<int>& row_sizes) {
    DiagramSet ds;
    int total = 0;
    for (int r : row_sizes) total += r;
    for (std::size_t r = 0; r < row_sizes.size(); ++r)
        for (int j = 0; j < row_sizes[r]; ++j) ds.row_of.push_back(static_cast<int>(r));
    if (total % 2) {
        ds.odd_total = true;
        return ds;
    }
    std::vector<int> partner(static_cast<std::size_t>(total), -1);
    std::vector<std::pair<int, int>> current;
    match_recursive(ds.row_of, partner, current, ds.diagrams);
    return ds;
}

double wick_moment(const Eigen::MatrixXd& cov, const std::vector<std::vector<int>>& rows) {
    if (rows.empty()) throw std::invalid_argument("wick_moment: no rows");
    for (const auto& r : rows)
        for (int i : r)
            if (i < 0 || i >= cov.rows()) throw std::invalid_argument("wick_moment: index range");
    if (rows.size() == 1) return rows[0].empty() ? 1.0 : 0.0;
    if (rows.size() == 2) {
        // E[:X_1..X_k::Y_1..Y_l:] = 0 unless k = l; else permanent of the
        // cross-covariance matrix
        if (rows[0].size() != rows[1].size()) return 0.0;
        const int k = static_cast<int>(rows[0].size());
        Eigen::MatrixXd A(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                A(i, j) = cov(rows[0][static_cast<std::size_t>(i)], rows[1][static_cast<std::size_t>(j)]);
        return permanent(A);
    }
    std::vector<int> sizes;
    std::vector<int> flat;
    for (const auto& r : rows) {
        sizes.push_back(static_cast<int>(r.size()));
        flat.insert(flat.end(), r.begin(), r.end());
    }
    DiagramSet ds = enumerate_diagrams(sizes);
    if (ds.odd_total) return 0.0;
    double total = 0.0;
    for (const auto& diagram : ds.diagrams) {
        double v = 1.0;
        for (auto [a, b] : diagram)
            v *= cov(flat[static_cast<std::size_t>(a)], flat[static_cast<std::size_t>(b)]);
        total += v;
    }
    return total;
}

std::vector<std::vector<int>> multisets_of_order(int dim, int m) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int lo) {
        if (static_cast<int>(cur.size()) == m) {
            out.push_back(cur);
            return;
        }
        for (int i = lo; i < dim; ++i) {
            cur.push_back(i);
            rec(i);
            cur.pop_back();
        }
    };
    rec(0);
    return out;
}

namespace {

double multiset_repeat_factor(const std::vector<int>& tuple) {
    // number of distinct orderings m! / prod(mult!)
    double mfact = 1.0;
    for (std::size_t i = 1; i <= tuple.size(); ++i) mfact *= double(i);
    double denom = 1.0;
    std::size_t i = 0;
    while (i < tuple.size()) {
        std::size_t j = i;
        double f = 1.0, c = 0.0;
        while (j < tuple.size() && tuple[j] == tuple[i]) {
            c += 1.0;
            f *= c;
            ++j;
        }
        denom *= f;
        i = j;
    }
    return mfact / denom;
}

void finish_projection(ChaosProjection& proj, const Eigen::MatrixXd& cov,
                       const std::vector<Eigen::VectorXd>& rhs) {
    for (int m = 1; m <= proj.max_order; ++m) {
        const auto& basis = proj.basis[static_cast<std::size_t>(m - 1)];
        const auto nb = static_cast<Eigen::Index>(basis.size());
        Eigen::MatrixXd G(nb, nb);
        for (Eigen::Index a = 0; a < nb; ++a)
            for (Eigen::Index b = a; b < nb; ++b) {
                double v = wick_moment(cov, {basis[static_cast<std::size_t>(a)],
                                             basis[static_cast<std::size_t>(b)]});
                G(a, b) = v;
                G(b, a) = v;
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
        double cond = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
        proj.gram_condition.push_back(cond);
        if (es.eigenvalues().minCoeff() <= 0 || cond > 1e12)
            throw std::runtime_error("chaos_project: ill-conditioned Gram matrix");
        Eigen::VectorXd c = G.ldlt().solve(rhs[static_cast<std::size_t>(m - 1)]);
        proj.coeffs.push_back(c);
        proj.order_variance.push_back(c.dot(G * c));
    }
}

}  // namespace

ChaosProjection chaos_project_blackbox(const Eigen::MatrixXd& cov,
                                       const std::function<double(const Eigen::VectorXd&)>& F,
                                       int max_order, std::size_t n, RngStream& rng) {
    const int dim = static_cast<int>(cov.rows());
    if (dim > 8 || max_order > 8)
        throw std::invalid_argument("chaos_project: black-box path capped at dimension 8, order 8");
    ChaosProjection proj;
    proj.dim = dim;
    proj.max_order = max_order;
    std::vector<std::vector<Poly>> wick_polys;
    for (int m = 1; m <= max_order; ++m) {
        proj.basis.push_back(multisets_of_order(dim, m));
        std::vector<Poly> polys;
        for (const auto& tuple : proj.basis.back()) polys.push_back(wick_polynomial(cov, tuple));
        wick_polys.push_back(std::move(polys));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    Eigen::MatrixXd L = llt.matrixL();
    std::vector<Eigen::VectorXd> rhs;
    for (int m = 1; m <= max_order; ++m)
        rhs.emplace_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(proj.basis[static_cast<std::size_t>(m - 1)].size())));
    double sum = 0.0, sum2 = 0.0;
    Eigen::VectorXd z(dim), f(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) z[j] = rng.normal();
        f = L * z;
        double y = F(f);
        sum += y;
        sum2 += y * y;
        for (int m = 1; m <= max_order; ++m) {
            auto& r = rhs[static_cast<std::size_t>(m - 1)];
            const auto& polys = wick_polys[static_cast<std::size_t>(m - 1)];
            for (Eigen::Index b = 0; b < r.size(); ++b)
                r[b] += y * polys[static_cast<std::size_t>(b)].eval(f);
        }
    }
    proj.mean = sum / double(n);
    proj.total_variance = sum2 / double(n) - proj.mean * proj.mean;
    for (auto& r : rhs) r /= double(n);
    finish_projection(proj, cov, rhs);
    return proj;
}

ChaosProjection chaos_project_smooth(const Eigen::MatrixXd& cov,
                                     const std::function<double(const MultiIndex&)>& dmean,
                                     int max_order) {
    const int dim = static_cast<int>(cov.rows());
    ChaosProjection proj;
    proj.dim = dim;
    proj.max_order = max_order;
    std::vector<Eigen::VectorXd> rhs;
    for (int m = 1; m <= max_order; ++m) {
        proj.basis.push_back(multisets_of_order(dim, m));
        const auto& basis = proj.basis.back();
        // Q_m = (1/m!) sum over ordered tuples E[d_x Phi] :f(x):, collapsed to
        // multisets: coefficient = E[d^alpha Phi] / prod(mult!)
        Eigen::VectorXd c(static_cast<Eigen::Index>(basis.size()));
        for (std::size_t b = 0; b < basis.size(); ++b) {
            MultiIndex alpha = MultiIndex::of_tuple(basis[b], dim);
            double mult = multiset_repeat_factor(basis[b]);
            double mfact = 1.0;
            for (std::size_t i = 1; i <= basis[b].size(); ++i) mfact *= double(i);
            c[static_cast<Eigen::Index>(b)] = dmean(alpha) * mult / mfact;
        }
        // rhs = G c so that finish_projection recovers exactly these coeffs
        const auto nb = static_cast<Eigen::Index>(basis.size());
        Eigen::MatrixXd G(nb, nb);
        for (Eigen::Index a = 0; a < nb; ++a)
            for (Eigen::Index b2 = a; b2 < nb; ++b2) {
                double v = wick_moment(cov, {basis[static_cast<std::size_t>(a)],
                                             basis[static_cast<std::size_t>(b2)]});
                G(a, b2) = v;
                G(b2, a) = v;
            }
        rhs.push_back(G * c);
    }
    finish_projection(proj, cov, rhs);
    return proj;
}

namespace {

// all matrices of non-negative integers with prescribed row and column sums
void theta_recursive(const std::vector<int>& rowsum, const std::vector<int>& colsum,
                     std::vector<int>& colleft, std::vector<std::vector<int>>& mat, std::size_t r,
                     const std::function<void(const std::vector<std::vector<int>>&)>& emit) {
    if (r == rowsum.size()) {
        for (int c : colleft)
            if (c != 0) return;
        emit(mat);
        return;
    }
    const std::size_t ncols = colsum.size();
    std::function<void(std::size_t, int)> fill = [&](std::size_t c, int left) {
        if (c == ncols) {
            if (left == 0) theta_recursive(rowsum, colsum, colleft, mat, r + 1, emit);
            return;
        }
        int cap = std::min(left, colleft[c]);
        for (int v = 0; v <= cap; ++v) {
            mat[r][c] = v;
            colleft[c] -= v;
            fill(c + 1, left - v);
            colleft[c] += v;
        }
        mat[r][c] = 0;
    };
    fill(0, rowsum[static_cast<std::size_t>(r)]);
}

double mi_factorial(const std::vector<int>& e) {
    double f = 1.0;
    for (int v : e)
        for (int k = 2; k <= v; ++k) f *= double(k);
    return f;
}

}  // namespace

double conditional_hermite_moment(const Eigen::MatrixXd& cov, int nI, const MultiIndex& aI,
                                  const MultiIndex& aJ, const MultiIndex& aI2,
                                  const MultiIndex& aJ2, const Eigen::VectorXd& x) {
    const int n = static_cast<int>(cov.rows());
    const int nJ = n - nI;
    if (static_cast<int>(aI.exp.size()) != nI || static_cast<int>(aJ.exp.size()) != nJ ||
        static_cast<int>(aI2.exp.size()) != nI || static_cast<int>(aJ2.exp.size()) != nJ)
        throw std::invalid_argument("conditional_hermite_moment: index shapes");
    Eigen::MatrixXd Minv = cov.llt().solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd KI = cov.topLeftCorner(nI, nI);

    // enumerate hat_aI <= aI and hat_aI2 <= aI2
    std::vector<std::vector<int>> subs1, subs2;
    std::function<void(std::size_t, std::vector<int>&, const std::vector<int>&,
                       std::vector<std::vector<int>>&)>
        enum_sub = [&](std::size_t i, std::vector<int>& cur, const std::vector<int>& cap,
                       std::vector<std::vector<int>>& out) {
            if (i == cap.size()) {
                out.push_back(cur);
                return;
            }
            for (int v = 0; v <= cap[i]; ++v) {
                cur.push_back(v);
                enum_sub(i + 1, cur, cap, out);
                cur.pop_back();
            }
        };
    std::vector<int> tmp;
    enum_sub(0, tmp, aI.exp, subs1);
    enum_sub(0, tmp, aI2.exp, subs2);

    double total = 0.0;
    for (const auto& h1 : subs1)
        for (const auto& h2 : subs2) {
            std::vector<int> rowsum = h1, colsum = h2;
            rowsum.insert(rowsum.end(), aJ.exp.begin(), aJ.exp.end());
            colsum.insert(colsum.end(), aJ2.exp.begin(), aJ2.exp.end());
            int o1 = 0, o2 = 0;
            for (int v : rowsum) o1 += v;
            for (int v : colsum) o2 += v;
            if (o1 != o2) continue;
            // bar_alpha = aI - h1 + aI2 - h2, Hermite in the X_I marginal
            MultiIndex bar;
            bar.exp.resize(static_cast<std::size_t>(nI));
            for (int i = 0; i < nI; ++i)
                bar.exp[static_cast<std::size_t>(i)] = aI.exp[static_cast<std::size_t>(i)] -
                                                       h1[static_cast<std::size_t>(i)] +
                                                       aI2.exp[static_cast<std::size_t>(i)] -
                                                       h2[static_cast<std::size_t>(i)];
            double hval = hermite_multivariate(KI, bar, x);
            double pref = mi_factorial(aI.exp) * mi_factorial(aJ.exp) * mi_factorial(aI2.exp) *
                          mi_factorial(aJ2.exp);
            std::vector<int> d1(static_cast<std::size_t>(nI)), d2(static_cast<std::size_t>(nI));
            for (int i = 0; i < nI; ++i) {
                d1[static_cast<std::size_t>(i)] =
                    aI.exp[static_cast<std::size_t>(i)] - h1[static_cast<std::size_t>(i)];
                d2[static_cast<std::size_t>(i)] =
                    aI2.exp[static_cast<std::size_t>(i)] - h2[static_cast<std::size_t>(i)];
            }
            pref /= mi_factorial(d1) * mi_factorial(d2);

            double theta_sum = 0.0;
            std::vector<std::vector<int>> mat(rowsum.size(),
                                              std::vector<int>(colsum.size(), 0));
            std::vector<int> colleft = colsum;
            theta_recursive(rowsum, colsum, colleft, mat, 0,
                            [&](const std::vector<std::vector<int>>& th) {
                                double term = 1.0;
                                for (std::size_t r = 0; r < th.size(); ++r)
                                    for (std::size_t c = 0; c < th[r].size(); ++c) {
                                        int t = th[r][c];
                                        if (t == 0) continue;
                                        double fac = 1.0;
                                        for (int k = 2; k <= t; ++k) fac *= double(k);
                                        term *= std::pow(Minv(static_cast<Eigen::Index>(r),
                                                              static_cast<Eigen::Index>(c)),
                                                         t) /
                                                fac;
                                    }
                                theta_sum += term;
                            });
            total += pref * theta_sum * hval;
        }
    return total;
}

}  // namespace gff
