#include "dsagen/conic.hpp"

#include "dsagen/error.hpp"

#include <cmath>

namespace dsagen::conic {

LinExpr& LinExpr::operator+=(const LinExpr& o) {
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    constant_ += o.constant_;
    return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
    for (const auto& [i, a] : o.terms_) terms_.emplace_back(i, -a);
    constant_ -= o.constant_;
    return *this;
}

LinExpr& LinExpr::operator*=(double k) {
    for (auto& t : terms_) t.second *= k;
    constant_ *= k;
    return *this;
}

double LinExpr::value(const Eigen::VectorXd& x) const {
    double v = constant_;
    for (const auto& [i, a] : terms_) v += a * x[i];
    return v;
}

LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
LinExpr operator-(LinExpr a) { return a *= -1.0; }
LinExpr operator*(double k, LinExpr a) { return a *= k; }
LinExpr operator*(LinExpr a, double k) { return a *= k; }

Var Model::add_var(double lb, double ub) {
    if (lb > ub) throw invalid_error("variable lower bound exceeds upper bound");
    lb_.push_back(lb);
    ub_.push_back(ub);
    return Var{static_cast<int>(lb_.size()) - 1};
}

void Model::set_bounds(Var v, double lb, double ub) {
    if (lb > ub) throw invalid_error("variable lower bound exceeds upper bound");
    lb_.at(v.index) = lb;
    ub_.at(v.index) = ub;
}

void Model::add_eq(const LinExpr& e) { eqs_.push_back(e); }
void Model::add_le(const LinExpr& e) { les_.push_back(e); }

void Model::add_soc(const std::vector<LinExpr>& e) {
    if (e.empty()) throw invalid_error("empty cone");
    socs_.push_back(e);
}

void Model::add_rsoc(const LinExpr& u, const LinExpr& v, const std::vector<LinExpr>& w) {
    // ||w||^2 <= u v, u, v >= 0  <=>  ||(2w, u - v)|| <= u + v
    std::vector<LinExpr> cone{u + v, u - v};
    for (const auto& wi : w) cone.push_back(2.0 * wi);
    socs_.push_back(std::move(cone));
}

Problem Model::build() const {
    const int n = n_vars();
    Problem P;
    P.c = Eigen::VectorXd::Zero(n);
    for (const auto& [i, a] : objective_.terms()) P.c[i] += a;

    std::vector<Eigen::Triplet<double>> ta, tg;
    std::vector<double> b, h;

    auto eq_row = [&](const LinExpr& e) {
        const int r = static_cast<int>(b.size());
        for (const auto& [i, a] : e.terms()) ta.emplace_back(r, i, a);
        b.push_back(-e.constant());
    };
    auto le_row = [&](const LinExpr& e) {
        const int r = static_cast<int>(h.size());
        for (const auto& [i, a] : e.terms()) tg.emplace_back(r, i, a);
        h.push_back(-e.constant());
    };

    for (int j = 0; j < n; ++j) {
        if (lb_[j] == ub_[j]) {
            eq_row(LinExpr(Var{j}) - lb_[j]);
            continue;
        }
        if (std::isfinite(lb_[j])) le_row(lb_[j] - LinExpr(Var{j}));
        if (std::isfinite(ub_[j])) le_row(LinExpr(Var{j}) - ub_[j]);
    }
    for (const auto& e : eqs_) eq_row(e);
    for (const auto& e : les_) le_row(e);
    P.cones.l = static_cast<int>(h.size());
    for (const auto& cone : socs_) {
        // s = h - G x holds the cone members.
        for (const auto& e : cone) {
            const int r = static_cast<int>(h.size());
            for (const auto& [i, a] : e.terms()) tg.emplace_back(r, i, -a);
            h.push_back(e.constant());
        }
        P.cones.soc.push_back(static_cast<int>(cone.size()));
    }

    P.A.resize(static_cast<int>(b.size()), n);
    P.A.setFromTriplets(ta.begin(), ta.end());
    P.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    P.G.resize(static_cast<int>(h.size()), n);
    P.G.setFromTriplets(tg.begin(), tg.end());
    P.h = Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
    P.A.prune(0.0);
    P.G.prune(0.0);
    return P;
}

ModelSolution Model::solve(const Settings& settings) const {
    const Result r = conic::solve(build(), settings);
    ModelSolution out;
    out.status = r.status;
    out.iterations = r.iterations;
    out.x = r.x;
    if (r.solved()) out.objective = r.primal_objective + objective_.constant();
    return out;
}

}  // namespace dsagen::conic
