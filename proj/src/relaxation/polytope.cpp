#include "dsagen/relaxation.hpp"

#include "dsagen/error.hpp"
#include "dsagen/util.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace dsagen::relaxation {

namespace {

// Coordinates with a nonzero box width; the rest are pinned at the lower bound.
std::vector<int> active_dims(const netmodel::Box& box) {
    std::vector<int> out;
    for (int k = 0; k < box.lower.size(); ++k) {
        if (box.upper[k] - box.lower[k] > 0.0) out.push_back(k);
    }
    return out;
}

}  // namespace

std::optional<Hyperplane> make_hyperplane(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x_star,
                                          double min_radius) {
    if (x_hat.size() != x_star.size()) throw invalid_error("hyperplane points differ in dimension");
    Hyperplane h;
    h.normal = x_star - x_hat;
    if (!(h.normal.norm() > min_radius)) return std::nullopt;
    h.offset = h.normal.dot(x_star);
    return h;
}

Polytope Polytope::from_box(const netmodel::Box& box) {
    const int n = static_cast<int>(box.lower.size());
    if (box.upper.size() != n) throw invalid_error("box bounds differ in dimension");
    if (((box.upper - box.lower).array() < 0.0).any()) throw invalid_error("box lower bound exceeds upper bound");
    Polytope P;
    P.A.resize(2 * n, n);
    P.A << Eigen::MatrixXd::Identity(n, n), -Eigen::MatrixXd::Identity(n, n);
    P.b.resize(2 * n);
    P.b << box.upper, -box.lower;
    P.volume_history = {1.0};
    P.box = box;
    return P;
}

bool Polytope::contains(const Eigen::VectorXd& x, double tol) const {
    if (x.size() != dimension()) throw invalid_error("point dimension does not match the polytope");
    return ((A * x - b).array() <= tol).all();
}

void Polytope::add_cut(const Hyperplane& h, double margin) {
    if (h.normal.size() != dimension()) throw invalid_error("hyperplane dimension does not match the polytope");
    A.conservativeResize(rows() + 1, Eigen::NoChange);
    b.conservativeResize(b.size() + 1);
    A.row(rows() - 1) = -h.normal.transpose();
    b[b.size() - 1] = -h.offset + margin * h.normal.norm();
}

ChebyshevBall chebyshev_center(const Polytope& P) {
    const std::vector<int> act = active_dims(P.box);
    const Eigen::VectorXd width = P.box.upper - P.box.lower;
    const Eigen::VectorXd slack0 = P.b - P.A * P.box.lower;

    conic::Model M;
    std::vector<conic::Var> u;
    for (std::size_t i = 0; i < act.size(); ++i) u.push_back(M.add_var());
    const conic::Var r = M.add_var(0.0, 1.0);
    for (int i = 0; i < P.rows(); ++i) {
        conic::LinExpr row;
        double norm2 = 0.0;
        for (std::size_t j = 0; j < act.size(); ++j) {
            const double a = P.A(i, act[j]) * width[act[j]];
            if (a == 0.0) continue;
            row += a * conic::LinExpr(u[j]);
            norm2 += a * a;
        }
        if (norm2 == 0.0) {
            if (slack0[i] < -1e-12) throw invalid_error("empty polytope");
            continue;
        }
        M.add_le(row + std::sqrt(norm2) * conic::LinExpr(r) - slack0[i]);
    }
    M.minimize(-1.0 * conic::LinExpr(r));
    const conic::ModelSolution s = M.solve();
    if (s.status == conic::Status::PrimalInfeasible || (s.solved() && s[r] <= 0.0)) {
        throw invalid_error("empty polytope");
    }
    if (!s.solved()) throw numerical_error("Chebyshev center solve failed: " + conic::to_string(s.status));
    ChebyshevBall ball;
    ball.center = P.box.lower;
    for (std::size_t j = 0; j < act.size(); ++j) ball.center[act[j]] += width[act[j]] * s[u[j]];
    ball.radius = s[r];
    return ball;
}

std::vector<Eigen::VectorXd> hit_and_run(const Polytope& P, int n, std::uint64_t seed, const HitAndRunOptions& opt) {
    if (n < 0 || opt.burn_in < 0 || opt.thinning < 1) throw invalid_error("invalid hit-and-run settings");
    std::vector<Eigen::VectorXd> out;
    if (n == 0) return out;
    const std::vector<int> act = active_dims(P.box);
    Eigen::VectorXd x = chebyshev_center(P).center;
    if (act.empty()) {
        out.assign(n, x);
        return out;
    }
    const Eigen::VectorXd width = P.box.upper - P.box.lower;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Eigen::VectorXd slack = P.b - P.A * x;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(P.dimension());
    const long total = opt.burn_in + static_cast<long>(n) * opt.thinning;
    out.reserve(n);
    for (long step = 1; step <= total; ++step) {
        Eigen::VectorXd dir(static_cast<Eigen::Index>(act.size()));
        for (auto& v : dir) v = normal(rng);
        dir.normalize();
        for (std::size_t j = 0; j < act.size(); ++j) d[act[j]] = width[act[j]] * dir[j];
        const Eigen::VectorXd ad = P.A * d;
        double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
        for (int i = 0; i < P.rows(); ++i) {
            const double s = std::max(slack[i], 0.0);
            if (ad[i] > 1e-14) hi = std::min(hi, s / ad[i]);
            else if (ad[i] < -1e-14) lo = std::max(lo, s / ad[i]);
        }
        if (!std::isfinite(lo) || !std::isfinite(hi)) throw numerical_error("unbounded hit-and-run chord");
        const double t = lo + (hi - lo) * unit(rng);
        x += t * d;
        slack -= t * ad;
        if (step % 64 == 0) slack = P.b - P.A * x;
        if (step > opt.burn_in && (step - opt.burn_in) % opt.thinning == 0) out.push_back(x);
    }
    return out;
}

double estimate_volume_ratio(const Polytope& P, const Hyperplane& cut, const std::vector<Eigen::VectorXd>& samples,
                             double margin) {
    if (samples.size() < 100) throw data_error("insufficient samples for volume estimate");
    if (cut.normal.size() != P.dimension()) throw invalid_error("hyperplane dimension does not match the polytope");
    const double slack = margin * cut.normal.norm();
    std::size_t kept = 0;
    for (const auto& x : samples) kept += cut.normal.dot(x) - cut.offset >= -slack;
    return static_cast<double>(kept) / static_cast<double>(samples.size());
}

std::string to_string(StopReason r) {
    return r == StopReason::VolumeStalled ? "volume-stalled" : "iteration-limit";
}

HyperplaneRun separating_hyperplanes(const Polytope& start, const Projector& project, const HyperplaneConfig& cfg) {
    if (cfg.N1 < 0 || cfg.eta < 1 || !(cfg.tau >= 0.0 && cfg.tau < 1.0)) {
        throw config_error("invalid hyperplane loop settings");
    }
    HyperplaneRun run;
    run.polytope = start;
    Polytope& P = run.polytope;
    if (P.volume_history.empty()) P.volume_history = {1.0};
    double V = P.volume_history.back();
    int streak = 0;

    for (int k = 0; k < cfg.N1; ++k) {
        std::vector<Eigen::VectorXd> pts = hit_and_run(P, cfg.volume_samples + 1, derive_seed(cfg.seed, k), cfg.hit_and_run);
        OperatingPoint x_hat{pts.back()};
        pts.pop_back();
        run.iterations = k + 1;

        const double V_prev = V;
        const std::optional<Projection> proj = project(x_hat);
        if (!proj) {
            ++run.failures;
            if (run.iterations >= 5 && run.failures > cfg.max_failure_share * run.iterations) {
                throw numerical_error("relaxation projection failed in " + std::to_string(run.failures) + " of " +
                                      std::to_string(run.iterations) + " iterations");
            }
        } else if (const auto h = make_hyperplane(x_hat.x, proj->x_star.x, cfg.min_radius)) {
            const double ratio = estimate_volume_ratio(P, *h, pts, cfg.cut_margin);
            if (ratio > 0.0) {
                P.add_cut(*h, cfg.cut_margin);
                V *= ratio;
            } else {
                ++run.degenerate_cuts;
            }
        }
        P.volume_history.push_back(V);

        streak = V > (1.0 - cfg.tau) * V_prev ? streak + 1 : 0;
        if (streak >= cfg.eta) {
            run.stop = StopReason::VolumeStalled;
            run.stop_iteration = k + 1;
            break;
        }
    }
    return run;
}

HyperplaneRun separating_hyperplanes(const NetworkModel& model, const TightenedBounds& bounds,
                                     const HyperplaneConfig& cfg) {
    const Projector project = [&](const OperatingPoint& x) -> std::optional<Projection> {
        try {
            return closest_qc_projection(model, bounds, x, cfg.solve);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Numerical) return std::nullopt;
            throw;
        }
    };
    return separating_hyperplanes(Polytope::from_box(bounds.box), project, cfg);
}

void save_polytope(const Polytope& P, const std::string& stem, std::uint64_t layout_hash,
                   const std::vector<std::string>& names) {
    if (static_cast<int>(names.size()) != P.dimension()) throw invalid_error("names do not match the polytope");
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto open = [](const std::string& path) {
        std::ofstream f(path);
        if (!f) throw config_error("cannot write " + path);
        return f;
    };
    {
        std::ofstream f = open(stem + "_A.csv");
        for (int i = 0; i < P.rows(); ++i) {
            for (int j = 0; j < P.dimension(); ++j) f << (j ? "," : "") << num(P.A(i, j));
            f << '\n';
        }
    }
    {
        std::ofstream f = open(stem + "_b.csv");
        for (int i = 0; i < P.rows(); ++i) f << num(P.b[i]) << '\n';
    }
    nlohmann::json j;
    j["dimension"] = P.dimension();
    j["layout_hash"] = layout_hash;
    j["names"] = names;
    j["volume_history"] = P.volume_history;
    j["box"]["lower"] = std::vector<double>(P.box.lower.begin(), P.box.lower.end());
    j["box"]["upper"] = std::vector<double>(P.box.upper.begin(), P.box.upper.end());
    std::ofstream f = open(stem + ".json");
    f << j.dump(2) << '\n';
}

Polytope load_polytope(const std::string& stem, std::uint64_t expected_hash) {
    auto read = [](const std::string& path) {
        std::ifstream f(path);
        if (!f) throw config_error("cannot read " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read(stem + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(stem + ".json: " + e.what());
    }
    Polytope P;
    int dim = 0;
    try {
        if (j.at("layout_hash").get<std::uint64_t>() != expected_hash) {
            throw config_error("polytope was built for a different input layout");
        }
        dim = j.at("dimension").get<int>();
        P.volume_history = j.at("volume_history").get<std::vector<double>>();
        const auto lo = j.at("box").at("lower").get<std::vector<double>>();
        const auto hi = j.at("box").at("upper").get<std::vector<double>>();
        if (static_cast<int>(lo.size()) != dim || static_cast<int>(hi.size()) != dim) {
            throw parse_error(stem + ".json: box does not match dimension");
        }
        P.box.lower = Eigen::Map<const Eigen::VectorXd>(lo.data(), dim);
        P.box.upper = Eigen::Map<const Eigen::VectorXd>(hi.data(), dim);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(stem + ".json: " + e.what());
    }

    auto parse_rows = [&](const std::string& path, int cols) {
        std::vector<std::vector<double>> rows;
        std::istringstream in(read(path));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<double> row;
            std::istringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) {
                try {
                    std::size_t used = 0;
                    row.push_back(std::stod(cell, &used));
                    if (used != cell.size()) throw std::invalid_argument(cell);
                } catch (const std::exception&) {
                    throw parse_error(path + ": bad number '" + cell + "'");
                }
            }
            if (static_cast<int>(row.size()) != cols) throw parse_error(path + ": wrong column count");
            rows.push_back(std::move(row));
        }
        return rows;
    };
    const auto a = parse_rows(stem + "_A.csv", dim);
    const auto b = parse_rows(stem + "_b.csv", 1);
    if (a.size() != b.size() || static_cast<int>(a.size()) < 2 * dim) {
        throw parse_error(stem + ": inconsistent polytope files");
    }
    P.A.resize(static_cast<Eigen::Index>(a.size()), dim);
    P.b.resize(static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (int k = 0; k < dim; ++k) P.A(static_cast<Eigen::Index>(i), k) = a[i][k];
        P.b[static_cast<Eigen::Index>(i)] = b[i][0];
    }
    return P;
}

}  // namespace dsagen::relaxation
