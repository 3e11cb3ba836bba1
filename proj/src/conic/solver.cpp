#include "dsagen/conic.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dsagen::conic {

int ConeDims::rows() const {
    int m = l;
    for (int q : soc) m += q;
    return m;
}

std::string to_string(Status status) {
    switch (status) {
        case Status::Optimal: return "optimal";
        case Status::Inaccurate: return "optimal (reduced accuracy)";
        case Status::PrimalInfeasible: return "primal infeasible";
        case Status::DualInfeasible: return "dual infeasible";
        case Status::MaxIterations: return "iteration limit";
        case Status::NumericalFailure: return "numerical failure";
    }
    return "?";
}

namespace {

using Eigen::VectorXd;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConeLayout {
    int l = 0;
    std::vector<int> size;
    std::vector<int> start;
    int m = 0;

    explicit ConeLayout(const ConeDims& d) : l(d.l), size(d.soc) {
        int off = l;
        for (int q : size) {
            start.push_back(off);
            off += q;
        }
        m = off;
    }
    int n_soc() const { return static_cast<int>(size.size()); }
};

// Lorentz form u'Ju with J = diag(1, -1, ..., -1).
double jdot(const double* u, const double* v, int q) {
    double r = u[0] * v[0];
    for (int i = 1; i < q; ++i) r -= u[i] * v[i];
    return r;
}

// Nesterov-Todd scaling point: W z = W^{-1} s = lambda.
struct Scaling {
    VectorXd w;                   // orthant part
    std::vector<double> eta;      // per cone
    std::vector<VectorXd> wbar;   // W^2 = eta^2 (2 wbar wbar' - J)
    std::vector<VectorXd> v;      // W = eta (2 v v' - J)
    VectorXd lambda;
};

bool compute_scaling(const ConeLayout& K, const VectorXd& s, const VectorXd& z, Scaling& sc) {
    sc.w.resize(K.l);
    sc.lambda.resize(K.m);
    for (int i = 0; i < K.l; ++i) {
        if (!(s[i] > 0.0) || !(z[i] > 0.0)) return false;
        sc.w[i] = std::sqrt(s[i] / z[i]);
        sc.lambda[i] = std::sqrt(s[i] * z[i]);
    }
    sc.eta.resize(K.n_soc());
    sc.wbar.resize(K.n_soc());
    sc.v.resize(K.n_soc());
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        const double sres = jdot(&s[o], &s[o], q);
        const double zres = jdot(&z[o], &z[o], q);
        if (!(sres > 0.0) || !(zres > 0.0) || s[o] <= 0.0 || z[o] <= 0.0) return false;
        const double sn = std::sqrt(sres), zn = std::sqrt(zres);
        VectorXd sb = s.segment(o, q) / sn;
        VectorXd zb = z.segment(o, q) / zn;
        const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
        VectorXd wb(q);
        wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
        wb.tail(q - 1) = (sb.tail(q - 1) - zb.tail(q - 1)) / (2.0 * gamma);
        sc.eta[k] = std::sqrt(sn / zn);
        sc.wbar[k] = wb;
        VectorXd vv = wb;
        vv[0] += 1.0;
        vv /= std::sqrt(2.0 * (wb[0] + 1.0));
        sc.v[k] = vv;
        // lambda = W z
        const double vz = vv.dot(z.segment(o, q));
        VectorXd lam = 2.0 * vz * vv;
        lam[0] -= z[o];
        lam.tail(q - 1) += z.segment(o + 1, q - 1);
        sc.lambda.segment(o, q) = sc.eta[k] * lam;
    }
    return true;
}

VectorXd apply_w(const ConeLayout& K, const Scaling& sc, const VectorXd& u) {
    VectorXd r(K.m);
    r.head(K.l) = sc.w.cwiseProduct(u.head(K.l));
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        const auto& v = sc.v[k];
        const double vu = v.dot(u.segment(o, q));
        VectorXd t = 2.0 * vu * v;
        t[0] -= u[o];
        t.tail(q - 1) += u.segment(o + 1, q - 1);
        r.segment(o, q) = sc.eta[k] * t;
    }
    return r;
}

VectorXd apply_winv(const ConeLayout& K, const Scaling& sc, const VectorXd& u) {
    VectorXd r(K.m);
    r.head(K.l) = u.head(K.l).cwiseQuotient(sc.w);
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        VectorXd jv = sc.v[k];
        jv.tail(q - 1) *= -1.0;
        const double vju = jdot(sc.v[k].data(), &u[o], q);
        VectorXd t = 2.0 * vju * jv;
        t[0] -= u[o];
        t.tail(q - 1) += u.segment(o + 1, q - 1);
        r.segment(o, q) = t / sc.eta[k];
    }
    return r;
}

VectorXd apply_w2(const ConeLayout& K, const Scaling& sc, const VectorXd& u) {
    VectorXd r(K.m);
    r.head(K.l) = sc.w.cwiseAbs2().cwiseProduct(u.head(K.l));
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        const auto& wb = sc.wbar[k];
        const double wu = wb.dot(u.segment(o, q));
        VectorXd t = 2.0 * wu * wb;
        t[0] -= u[o];
        t.tail(q - 1) += u.segment(o + 1, q - 1);
        r.segment(o, q) = sc.eta[k] * sc.eta[k] * t;
    }
    return r;
}

// Jordan product u o v.
VectorXd jprod(const ConeLayout& K, const VectorXd& u, const VectorXd& v) {
    VectorXd r(K.m);
    r.head(K.l) = u.head(K.l).cwiseProduct(v.head(K.l));
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        r[o] = u.segment(o, q).dot(v.segment(o, q));
        r.segment(o + 1, q - 1) = u[o] * v.segment(o + 1, q - 1) + v[o] * u.segment(o + 1, q - 1);
    }
    return r;
}

// Solves lambda o x = r.
VectorXd jdiv(const ConeLayout& K, const VectorXd& lambda, const VectorXd& r) {
    VectorXd x(K.m);
    x.head(K.l) = r.head(K.l).cwiseQuotient(lambda.head(K.l));
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        const double l0 = lambda[o];
        const auto l1 = lambda.segment(o + 1, q - 1);
        const double det = l0 * l0 - l1.squaredNorm();
        const double x0 = (l0 * r[o] - l1.dot(r.segment(o + 1, q - 1))) / det;
        x[o] = x0;
        x.segment(o + 1, q - 1) = (r.segment(o + 1, q - 1) - x0 * l1) / l0;
    }
    return x;
}

VectorXd identity(const ConeLayout& K) {
    VectorXd e = VectorXd::Zero(K.m);
    e.head(K.l).setOnes();
    for (int k = 0; k < K.n_soc(); ++k) e[K.start[k]] = 1.0;
    return e;
}

// Largest alpha with u + alpha*du in the closed cone (capped at kInf).
double max_step(const ConeLayout& K, const VectorXd& u, const VectorXd& du) {
    double alpha = kInf;
    for (int i = 0; i < K.l; ++i) {
        if (du[i] < 0.0) alpha = std::min(alpha, -u[i] / du[i]);
    }
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        const double a = jdot(&du[o], &du[o], q);
        const double b = 2.0 * jdot(&u[o], &du[o], q);
        const double c = std::max(jdot(&u[o], &u[o], q), 0.0);
        double root = kInf;
        if (a == 0.0) {
            if (b < 0.0) root = -c / b;
        } else {
            const double disc = b * b - 4.0 * a * c;
            if (disc >= 0.0) {
                const double sq = std::sqrt(disc);
                const double qq = -0.5 * (b + (b >= 0.0 ? sq : -sq));
                double r1 = qq / a;
                double r2 = qq != 0.0 ? c / qq : kInf;
                if (r1 > r2) std::swap(r1, r2);
                if (r1 >= 0.0) root = r1;
                else if (r2 >= 0.0) root = r2;
            }
        }
        alpha = std::min(alpha, root);
        if (du[o] < 0.0) alpha = std::min(alpha, -u[o] / du[o]);
    }
    return alpha;
}

bool strictly_interior(const ConeLayout& K, const VectorXd& u) {
    for (int i = 0; i < K.l; ++i) {
        if (!(u[i] > 0.0)) return false;
    }
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        if (!(u[o] > 0.0) || !(jdot(&u[o], &u[o], q) > 0.0)) return false;
    }
    return true;
}

// Most negative "eigenvalue" of u with respect to the cone.
double min_eig(const ConeLayout& K, const VectorXd& u) {
    double r = kInf;
    for (int i = 0; i < K.l; ++i) r = std::min(r, u[i]);
    for (int k = 0; k < K.n_soc(); ++k) {
        const int q = K.size[k], o = K.start[k];
        r = std::min(r, u[o] - u.segment(o + 1, q - 1).norm());
    }
    return r;
}

// Reduced KKT operator [[0, A', G'], [A, 0, 0], [G, 0, -W^2]].
class KktSystem {
public:
    KktSystem(const SpMat& A, const SpMat& G, const ConeLayout& K, double reg, int refine)
        : A_(A), G_(G), K_(K), n_(static_cast<int>(A.cols())), p_(static_cast<int>(A.rows())),
          m_(static_cast<int>(G.rows())), reg_(reg), refine_(refine) {}

    /// Retries with stronger regularization when a pivot vanishes; refinement
    /// against the exact operator recovers the accuracy.
    bool factor(const Scaling* sc) {
        sc_ = sc;
        double reg = reg_;
        for (int attempt = 0; attempt < 4; ++attempt, reg *= 100.0) {
            if (factor_with(reg)) return true;
        }
        return false;
    }

    bool factor_with(double reg) {
        const Scaling* sc = sc_;
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(A_.nonZeros() + G_.nonZeros() + n_ + p_ + m_ * 4);
        for (int j = 0; j < n_; ++j) t.emplace_back(j, j, reg);
        for (int j = 0; j < A_.outerSize(); ++j) {
            for (SpMat::InnerIterator it(A_, j); it; ++it) t.emplace_back(n_ + it.row(), j, it.value());
        }
        for (int j = 0; j < G_.outerSize(); ++j) {
            for (SpMat::InnerIterator it(G_, j); it; ++it) t.emplace_back(n_ + p_ + it.row(), j, it.value());
        }
        for (int i = 0; i < p_; ++i) t.emplace_back(n_ + i, n_ + i, -reg);
        const int z0 = n_ + p_;
        for (int i = 0; i < K_.l; ++i) {
            const double w2 = sc ? sc->w[i] * sc->w[i] : 1.0;
            t.emplace_back(z0 + i, z0 + i, -w2 - reg);
        }
        for (int k = 0; k < K_.n_soc(); ++k) {
            const int q = K_.size[k], o = K_.start[k];
            for (int a = 0; a < q; ++a) {
                for (int b = 0; b <= a; ++b) {
                    double v;
                    if (sc) {
                        const auto& wb = sc->wbar[k];
                        double jab = a == b ? (a == 0 ? 1.0 : -1.0) : 0.0;
                        v = sc->eta[k] * sc->eta[k] * (2.0 * wb[a] * wb[b] - jab);
                    } else {
                        v = a == b ? 1.0 : 0.0;
                    }
                    t.emplace_back(z0 + o + a, z0 + o + b, -v - (a == b ? reg : 0.0));
                }
            }
        }
        const int N = n_ + p_ + m_;
        SpMat Kmat(N, N);
        Kmat.setFromTriplets(t.begin(), t.end());
        if (!analyzed_) {
            ldlt_.analyzePattern(Kmat);
            analyzed_ = true;
        }
        ldlt_.factorize(Kmat);
        if (ldlt_.info() != Eigen::Success) return false;
        const auto d = ldlt_.vectorD();
        return d.allFinite() && (d.array() != 0.0).all();
    }

    VectorXd multiply(const VectorXd& u) const {
        const VectorXd x = u.head(n_), y = u.segment(n_, p_), z = u.tail(m_);
        VectorXd r(n_ + p_ + m_);
        r.head(n_) = A_.transpose() * y + G_.transpose() * z;
        r.segment(n_, p_) = A_ * x;
        VectorXd w2z = sc_ ? apply_w2(K_, *sc_, z) : z;
        r.tail(m_) = G_ * x - w2z;
        return r;
    }

    VectorXd solve(const VectorXd& rhs) const {
        VectorXd u = ldlt_.solve(rhs);
        const double target = 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
        // Refinement can diverge on a badly conditioned factor; keep the best.
        VectorXd e = rhs - multiply(u);
        VectorXd best = u;
        double best_err = e.lpNorm<Eigen::Infinity>();
        for (int it = 0; it < refine_ && best_err > target; ++it) {
            u += ldlt_.solve(e);
            e = rhs - multiply(u);
            const double err = e.lpNorm<Eigen::Infinity>();
            if (!std::isfinite(err)) break;
            if (err < best_err) {
                best_err = err;
                best = u;
            }
        }
        u = best;
        return u;
    }

private:
    const SpMat& A_;
    const SpMat& G_;
    const ConeLayout& K_;
    int n_, p_, m_;
    double reg_;
    int refine_;
    const Scaling* sc_ = nullptr;
    bool analyzed_ = false;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

// Ruiz equilibration: A <- Ea A D, G <- Eg G D, uniform within each cone.
struct Equilibration {
    VectorXd D, Ea, Eg;
};

Equilibration equilibrate(Problem& P, const ConeLayout& K, int passes) {
    const int n = static_cast<int>(P.c.size());
    const int p = static_cast<int>(P.A.rows());
    const int m = static_cast<int>(P.G.rows());
    Equilibration eq{VectorXd::Ones(n), VectorXd::Ones(p), VectorXd::Ones(m)};
    for (int pass = 0; pass < passes; ++pass) {
        VectorXd col = VectorXd::Zero(n), ra = VectorXd::Zero(p), rg = VectorXd::Zero(m);
        for (int j = 0; j < n; ++j) {
            for (SpMat::InnerIterator it(P.A, j); it; ++it) {
                col[j] = std::max(col[j], std::abs(it.value()));
                ra[it.row()] = std::max(ra[it.row()], std::abs(it.value()));
            }
            for (SpMat::InnerIterator it(P.G, j); it; ++it) {
                col[j] = std::max(col[j], std::abs(it.value()));
                rg[it.row()] = std::max(rg[it.row()], std::abs(it.value()));
            }
        }
        for (int k = 0; k < K.n_soc(); ++k) {
            const double mx = rg.segment(K.start[k], K.size[k]).maxCoeff();
            rg.segment(K.start[k], K.size[k]).setConstant(mx);
        }
        auto inv_sqrt = [](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; };
        VectorXd dc = col.unaryExpr(inv_sqrt), da = ra.unaryExpr(inv_sqrt), dg = rg.unaryExpr(inv_sqrt);
        P.A = da.asDiagonal() * P.A * dc.asDiagonal();
        P.G = dg.asDiagonal() * P.G * dc.asDiagonal();
        eq.D = eq.D.cwiseProduct(dc);
        eq.Ea = eq.Ea.cwiseProduct(da);
        eq.Eg = eq.Eg.cwiseProduct(dg);
    }
    P.c = eq.D.cwiseProduct(P.c);
    P.b = eq.Ea.cwiseProduct(P.b);
    P.h = eq.Eg.cwiseProduct(P.h);
    return eq;
}

}  // namespace

Result solve(const Problem& original, const Settings& st) {
    const int n = static_cast<int>(original.c.size());
    const int p = static_cast<int>(original.A.rows());
    const int m = static_cast<int>(original.G.rows());
    Result res;
    if (original.A.cols() != n || original.G.cols() != n || original.b.size() != p || original.h.size() != m ||
        original.cones.rows() != m) {
        return res;
    }
    for (int q : original.cones.soc) {
        if (q < 1) return res;
    }

    const ConeLayout K(original.cones);
    Problem P = original;
    P.A.makeCompressed();
    P.G.makeCompressed();
    const Equilibration eq = equilibrate(P, K, st.equilibration_passes);
    const VectorXd e = identity(K);
    const double degree = static_cast<double>(original.cones.degree());

    // Metrics are evaluated on the unscaled problem.
    const double nb = std::max(1.0, original.b.norm());
    const double nh = std::max(1.0, original.h.norm());
    const double nc = std::max(1.0, original.c.norm());
    auto unscale = [&](const VectorXd& x, const VectorXd& y, const VectorXd& z, const VectorXd& s, Result& r) {
        r.x = eq.D.cwiseProduct(x);
        r.y = eq.Ea.cwiseProduct(y);
        r.z = eq.Eg.cwiseProduct(z);
        r.s = s.cwiseQuotient(eq.Eg);
    };

    KktSystem kkt(P.A, P.G, K, st.static_reg, st.refine_steps);

    // Initial point from two least-squares-type solves with W = I.
    if (!kkt.factor(nullptr)) return res;
    VectorXd rhs = VectorXd::Zero(n + p + m);
    rhs.segment(n, p) = P.b;
    rhs.tail(m) = P.h;
    VectorXd u = kkt.solve(rhs);
    VectorXd x = u.head(n);
    VectorXd s = -u.tail(m);
    rhs.setZero();
    rhs.head(n) = -P.c;
    u = kkt.solve(rhs);
    VectorXd y = u.segment(n, p);
    VectorXd z = u.tail(m);
    if (!x.allFinite() || !s.allFinite() || !y.allFinite() || !z.allFinite()) return res;
    {
        const double as = -min_eig(K, s);
        if (as >= -1e-8) s += (1.0 + as) * e;
        const double az = -min_eig(K, z);
        if (az >= -1e-8) z += (1.0 + az) * e;
    }
    double tau = 1.0, kappa = 1.0;

    Scaling sc;
    Status stall_status = Status::MaxIterations;
    Result best;
    double best_score = kInf;
    for (int iter = 0;; ++iter) {
        res.iterations = iter;

        // Residuals of the embedding.
        const VectorXd hrx = P.A.transpose() * y + P.G.transpose() * z;
        const VectorXd hry = -(P.A * x);
        const VectorXd hrz = s + P.G * x;
        const VectorXd rx = hrx + P.c * tau;
        const VectorXd ry = hry + P.b * tau;
        const VectorXd rz = hrz - P.h * tau;
        const double cx = P.c.dot(x), by = P.b.dot(y), hz = P.h.dot(z);
        const double rt = kappa + cx + by + hz;

        // Convergence tests in original units.
        Result cur;
        unscale(x / tau, y / tau, z / tau, s / tau, cur);
        cur.primal_residual = std::max((original.A * cur.x - original.b).norm() / nb,
                                       (original.G * cur.x + cur.s - original.h).norm() / nh);
        cur.dual_residual = (original.A.transpose() * cur.y + original.G.transpose() * cur.z + original.c).norm() / nc;
        cur.primal_objective = original.c.dot(cur.x);
        cur.dual_objective = -original.b.dot(cur.y) - original.h.dot(cur.z);
        cur.gap = cur.s.dot(cur.z);
        double relgap = kInf;
        if (cur.primal_objective < 0.0) relgap = cur.gap / -cur.primal_objective;
        else if (cur.dual_objective > 0.0) relgap = cur.gap / cur.dual_objective;
        const bool gap_ok = cur.gap < st.abstol || relgap < st.reltol;
        cur.iterations = iter;
        if (st.verbose) {
            std::fprintf(stderr, "%3d  pres %.2e  dres %.2e  gap %.2e  pobj %+.9e  dobj %+.9e\n", iter,
                         cur.primal_residual, cur.dual_residual, cur.gap, cur.primal_objective, cur.dual_objective);
        }
        if (cur.primal_residual < st.feastol && cur.dual_residual < st.feastol && gap_ok) {
            cur.status = Status::Optimal;
            return cur;
        }

        // Certificates (scale-free ratios).
        {
            Result ray;
            unscale(x, y, z, s, ray);
            const double byhz = original.b.dot(ray.y) + original.h.dot(ray.z);
            if (byhz < 0.0) {
                const double r = (original.A.transpose() * ray.y + original.G.transpose() * ray.z).norm() / -byhz;
                if (r < st.feastol) {
                    ray.status = Status::PrimalInfeasible;
                    ray.iterations = iter;
                    return ray;
                }
            }
            const double cxo = original.c.dot(ray.x);
            if (cxo < 0.0) {
                const double r = std::max((original.A * ray.x).norm(), (original.G * ray.x + ray.s).norm()) / -cxo;
                if (r < st.feastol) {
                    ray.status = Status::DualInfeasible;
                    ray.iterations = iter;
                    return ray;
                }
            }
        }

        // Late iterations can lose accuracy once the scaling degenerates, so a
        // failed solve reports the best iterate seen.
        const double objgap =
            std::abs(cur.primal_objective - cur.dual_objective) / std::max(1.0, std::abs(cur.primal_objective));
        const double score =
            std::max({cur.primal_residual, cur.dual_residual, std::min({cur.gap, relgap, objgap})});
        if (score < best_score) {
            best_score = score;
            best = cur;
        }
        auto fallback = [&](Status failure) {
            const bool loose = best_score < st.inaccurate_tol;
            best.status = loose ? Status::Inaccurate : failure;
            return best;
        };
        if (iter >= st.max_iter) return fallback(stall_status);
        if (!compute_scaling(K, s, z, sc)) {
            if (st.verbose) std::fprintf(stderr, "     scaling failed\n");
            return fallback(Status::NumericalFailure);
        }
        if (!kkt.factor(&sc)) {
            if (st.verbose) std::fprintf(stderr, "     factorization failed\n");
            return fallback(Status::NumericalFailure);
        }

        // Direction for the tau-coupling column.
        rhs.head(n) = -P.c;
        rhs.segment(n, p) = P.b;
        rhs.tail(m) = P.h;
        const VectorXd u1 = kkt.solve(rhs);
        const double denom_base =
            P.c.dot(u1.head(n)) + P.b.dot(u1.segment(n, p)) + P.h.dot(u1.tail(m)) - kappa / tau;

        struct Dir {
            VectorXd dx, dy, dz, ds;
            double dtau = 0.0, dkappa = 0.0;
        };
        auto direction = [&](double d, const VectorXd& rs, double rst) {
            const VectorXd wl = apply_w(K, sc, jdiv(K, sc.lambda, rs));
            rhs.head(n) = -d * rx;
            rhs.segment(n, p) = d * ry;
            rhs.tail(m) = -d * rz + wl;
            const VectorXd u0 = kkt.solve(rhs);
            Dir D;
            D.dtau = (-d * rt + rst / tau - P.c.dot(u0.head(n)) - P.b.dot(u0.segment(n, p)) -
                      P.h.dot(u0.tail(m))) /
                     denom_base;
            const VectorXd du = u0 + D.dtau * u1;
            D.dx = du.head(n);
            D.dy = du.segment(n, p);
            D.dz = du.tail(m);
            D.ds = -wl - apply_w2(K, sc, D.dz);
            D.dkappa = -(rst + kappa * D.dtau) / tau;
            return D;
        };
        auto step_length = [&](const Dir& D) {
            double a = std::min(max_step(K, s, D.ds), max_step(K, z, D.dz));
            if (D.dtau < 0.0) a = std::min(a, -tau / D.dtau);
            if (D.dkappa < 0.0) a = std::min(a, -kappa / D.dkappa);
            return a;
        };

        const VectorXd ll = jprod(K, sc.lambda, sc.lambda);
        const double mu = (s.dot(z) + tau * kappa) / (degree + 1.0);

        // Predictor.
        const Dir aff = direction(1.0, ll, kappa * tau);
        const double a_aff = std::min(1.0, step_length(aff));
        const double sigma = std::clamp(std::pow(1.0 - a_aff, 3), 1e-4, 1.0);

        // Corrector.
        const VectorXd corr = jprod(K, apply_winv(K, sc, aff.ds), apply_w(K, sc, aff.dz));
        const VectorXd rs = ll + corr - sigma * mu * e;
        const double rst = kappa * tau + aff.dkappa * aff.dtau - sigma * mu;
        const Dir D = direction(1.0 - sigma, rs, rst);
        if (!D.dx.allFinite() || !std::isfinite(D.dtau)) {
            if (st.verbose) std::fprintf(stderr, "     non-finite direction\n");
            return fallback(Status::NumericalFailure);
        }
        double alpha = std::min(1.0, st.step_fraction * step_length(D));
        if (st.verbose) std::fprintf(stderr, "     step %.2e  affine %.2e  sigma %.2e\n", alpha, a_aff, sigma);
        if (alpha < 1e-10) return fallback(Status::NumericalFailure);

        // Rounding can land an iterate on the cone boundary; back off until
        // both s and z stay strictly interior.
        double alpha_safe = alpha;
        for (int back = 0; back < 20; ++back) {
            if (strictly_interior(K, s + alpha_safe * D.ds) && strictly_interior(K, z + alpha_safe * D.dz)) break;
            alpha_safe *= 0.8;
        }
        alpha = alpha_safe;

        x += alpha * D.dx;
        y += alpha * D.dy;
        z += alpha * D.dz;
        s += alpha * D.ds;
        tau += alpha * D.dtau;
        kappa += alpha * D.dkappa;
    }
}

}  // namespace dsagen::conic
