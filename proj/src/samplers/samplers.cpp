#include "dsagen/samplers.hpp"

#include "dsagen/error.hpp"
#include "dsagen/util.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <random>

namespace dsagen::samplers {

namespace {

BenchmarkResult evaluate_all(const walker::Context& ctx, const dataset::SecuritySpec& spec,
                             const std::vector<Eigen::VectorXd>& xs, dataset::Source source, std::uint64_t seed,
                             int workers) {
    const int n = static_cast<int>(xs.size());
    std::vector<walker::Paired> paired(n);
    parallel_for(n, workers,
                 [&](int i) { paired[i] = walker::pair_with_feasible(ctx, {xs[i]}, false, derive_seed(seed, i)); });
    BenchmarkResult out;
    out.drawn = n;
    std::vector<dataset::RawResult> rows;
    for (int i = 0; i < n; ++i) {
        const auto& p = paired[i];
        if (!p.sample.feasible) ++out.infeasible;
        if (p.dropped) {
            ++out.dropped;
            continue;
        }
        rows.push_back(walker::to_raw(p.sample, source, derive_seed(seed, i)));
        if (p.counterpart) {
            rows.push_back(walker::to_raw(*p.counterpart, dataset::Source::Projection, derive_seed(seed, i)));
        }
    }
    out.data = dataset::make_dataset(ctx.model.layout().names(), rows, spec);
    return out;
}

}  // namespace

std::vector<Eigen::VectorXd> lhc_sample(const netmodel::Box& box, int n, std::uint64_t seed) {
    if (n < 1) throw invalid_error("lhc_sample needs n >= 1");
    const Eigen::Index dim = box.lower.size();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Eigen::VectorXd> out(n, Eigen::VectorXd(dim));
    std::vector<int> perm(n);
    for (Eigen::Index c = 0; c < dim; ++c) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const double lo = box.lower[c], width = box.upper[c] - box.lower[c];
        for (int i = 0; i < n; ++i) {
            const double t = std::min((perm[i] + u(rng)) / n, std::nextafter(1.0, 0.0));
            out[i][c] = std::min(lo + t * width, box.upper[c]);
        }
    }
    return out;
}

BenchmarkResult lhc_benchmark(const walker::Context& ctx, const dataset::SecuritySpec& spec, int n,
                              std::uint64_t seed, int workers) {
    spec.validate();
    return evaluate_all(ctx, spec, lhc_sample(ctx.bounds.box, n, seed), dataset::Source::LHC,
                        derive_seed(seed, 0x1C), workers);
}

void MvnSpec::validate() const {
    if (!(s > 0.0 && s <= 1.0)) throw config_error("MVN scale must satisfy 0 < s <= 1");
    if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) throw invalid_error("MVN covariance shape mismatch");
    if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw invalid_error("MVN covariance is not symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff())) {
        throw invalid_error("MVN covariance is not positive semidefinite");
    }
}

MvnSpec fit_mvn(const std::vector<Eigen::VectorXd>& points, double s) {
    if (points.empty()) throw data_error("insufficient HIC seeds for MVN fit (0 points)");
    const Eigen::Index dim = points.front().size();
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < dim + 1) {
        throw data_error("insufficient HIC seeds for MVN fit (" + std::to_string(n) + " points, need " +
                         std::to_string(dim + 1) + ")");
    }
    Eigen::MatrixXd X(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) X.row(i) = points[i].transpose();
    MvnSpec m;
    m.mu = X.colwise().mean().transpose();
    const Eigen::MatrixXd centered = X.rowwise() - m.mu.transpose();
    m.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
    m.sigma = 0.5 * (m.sigma + m.sigma.transpose());
    m.sigma.diagonal().array() += 1e-8;
    m.s = s;
    m.validate();
    return m;
}

MvnDraws mvn_sample(const MvnSpec& mvn, const netmodel::Box& box, int n, std::uint64_t seed, int max_tries) {
    mvn.validate();
    if (n < 0 || max_tries < 1) throw invalid_error("mvn_sample needs n >= 0 and max_tries >= 1");
    const Eigen::Index dim = mvn.mu.size();
    if (box.lower.size() != dim) throw invalid_error("MVN dimension does not match the box");

    // Pinned coordinates are conditioned out of the normal.
    std::vector<Eigen::Index> free;
    for (Eigen::Index c = 0; c < dim; ++c) {
        if (box.upper[c] > box.lower[c]) free.push_back(c);
    }
    const auto k = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd cov(k, k);
    Eigen::VectorXd mu(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        mu[i] = mvn.mu[free[i]];
        for (Eigen::Index j = 0; j < k; ++j) cov(i, j) = mvn.s * mvn.sigma(free[i], free[j]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    if (ldlt.info() != Eigen::Success) throw numerical_error("MVN covariance factorization failed");
    // cov = P^T L D L^T P, so P^T L sqrt(D) z has covariance cov.
    const Eigen::VectorXd sd = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd L = ldlt.matrixL();
    const Eigen::MatrixXd factor = ldlt.transpositionsP().transpose() * (L * sd.asDiagonal());

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    MvnDraws out;
    out.points.reserve(n);
    Eigen::VectorXd z(k), x(dim);
    for (int i = 0; i < n; ++i) {
        bool inside = false;
        for (int t = 0; t < max_tries && !inside; ++t) {
            for (Eigen::Index j = 0; j < k; ++j) z[j] = normal(rng);
            const Eigen::VectorXd y = mu + factor * z;
            x = box.lower;
            for (Eigen::Index j = 0; j < k; ++j) x[free[j]] = y[j];
            inside = box.contains(x);
            if (!inside) ++out.rejected;
        }
        if (!inside) {
            x = box.clamp(x);
            ++out.clamped;
        }
        out.points.push_back(x);
    }
    return out;
}

ImportanceResult importance_benchmark(const walker::Context& ctx, const dataset::SecuritySpec& spec,
                                      const ImportanceConfig& cfg, std::uint64_t seed, int workers) {
    spec.validate();
    if (cfg.n < 1 || cfg.n_init < 1) throw config_error("importance sampling needs n >= 1 and n_init >= 1");
    ImportanceResult r;
    r.initial = lhc_benchmark(ctx, spec, cfg.n_init, derive_seed(seed, 0), workers);
    std::vector<Eigen::VectorXd> hic;
    for (const auto& row : r.initial.data.rows) {
        if (row.feasible && row.in_hic) hic.push_back(row.x);
    }
    r.seeds = static_cast<int>(hic.size());
    r.fit = fit_mvn(hic, cfg.s);
    r.draws = mvn_sample(r.fit, ctx.bounds.box, cfg.n, derive_seed(seed, 1));
    r.result = evaluate_all(ctx, spec, r.draws.points, dataset::Source::Importance, derive_seed(seed, 2), workers);
    return r;
}

}  // namespace dsagen::samplers
