#include "dsagen/walker.hpp"

#include "dsagen/error.hpp"
#include "dsagen/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace dsagen::walker {

namespace {

constexpr std::uint64_t kWalkStream = 0x57A1C;

/// PG coordinates as integer multiples of the MW grid.
std::vector<long long> grid_key(const NetworkModel& model, const OperatingPoint& op, double disc) {
    const int n = model.layout().n_pg();
    std::vector<long long> key(n);
    for (int c = 0; c < n; ++c) key[c] = std::llround(op.x[c] * model.base_mva() / disc);
    return key;
}

double grid_value(const NetworkModel& model, long long k, double disc) {
    return static_cast<double>(k) * disc / model.base_mva();
}

bool within(const netmodel::Box& box, int c, double v) {
    constexpr double kTol = 1e-12;
    return v >= box.lower[c] - kTol && v <= box.upper[c] + kTol;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

std::optional<Eigen::VectorXd> sensitivities(const Context& ctx, const OperatingPoint& op, const DWConfig& cfg) {
    const int n = ctx.model.layout().n_pg();
    Eigen::VectorXd s(n);
    try {
        for (int c = 0; c < n; ++c) {
            s[c] = smallsignal::damping_sensitivity(ctx.model, ctx.dynamics, op, c, cfg.sensitivity_step).value;
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Numerical) return std::nullopt;
        throw;
    }
    return s;
}

}  // namespace

Evaluation evaluate(const Context& ctx, const OperatingPoint& op) {
    Evaluation e;
    e.op = op;
    const auto st = powerflow::solve_pf(ctx.model, op, false, ctx.pf);
    e.converged = st.converged;
    if (!st.converged) return e;
    e.feasible = powerflow::check_feasibility(ctx.model, st, ctx.pf).feasible;
    try {
        e.zeta = smallsignal::zeta_min(ctx.model, ctx.dynamics, st);
    } catch (const Error& err) {
        if (err.kind() != ErrorKind::Numerical) throw;
    }
    return e;
}

dataset::RawResult to_raw(const Evaluation& e, dataset::Source source, std::uint64_t seed) {
    return {e.op.x, e.converged, e.feasible, e.zeta, source, seed};
}

Paired pair_with_feasible(const Context& ctx, const OperatingPoint& op, bool try_q_limits, std::uint64_t seed) {
    Paired p;
    p.sample = evaluate(ctx, op);
    if (p.sample.feasible) return p;

    if (try_q_limits) {
        const auto st = powerflow::solve_pf(ctx.model, op, true, ctx.pf);
        if (st.converged && powerflow::check_feasibility(ctx.model, st, ctx.pf).feasible) {
            Evaluation e = evaluate(ctx, powerflow::realized_setpoints(ctx.model, op, st));
            if (e.feasible) {
                p.counterpart = std::move(e);
                return p;
            }
        }
    }
    acproj::Options opt = ctx.projection;
    opt.seed = seed;
    try {
        const auto r = acproj::project_to_ac(ctx.model, ctx.bounds, {ctx.bounds.box.clamp(op.x)}, opt);
        if (r.status == acproj::Status::LocalOptimal) {
            Evaluation e = evaluate(ctx, r.x_star);
            if (e.feasible) {
                p.counterpart = std::move(e);
                return p;
            }
        }
    } catch (const Error& err) {
        if (err.kind() != ErrorKind::Numerical) throw;
    }
    p.dropped = true;
    return p;
}

InitResult init_points(const Context& ctx, const relaxation::Polytope& polytope, int n2, std::uint64_t seed,
                       int workers) {
    if (n2 < 1) throw invalid_error("init_points needs N2 >= 1");
    const auto samples = relaxation::hit_and_run(polytope, n2, seed);
    std::vector<Paired> paired(n2);
    parallel_for(n2, workers,
                 [&](int i) { paired[i] = pair_with_feasible(ctx, {samples[i]}, true, derive_seed(seed, i)); });
    InitResult out;
    for (int i = 0; i < n2; ++i) {
        Paired& p = paired[i];
        if (p.dropped) {
            ++out.dropped;
            continue;
        }
        if (!p.counterpart) {
            out.feasible.push_back(std::move(p.sample));
            out.feasible_seed.push_back(derive_seed(seed, i));
            continue;
        }
        out.infeasible.push_back(std::move(p.sample));
        out.pair_of_infeasible.push_back(static_cast<int>(out.feasible.size()));
        out.feasible.push_back(std::move(*p.counterpart));
        out.feasible_seed.push_back(derive_seed(seed, i));
    }
    return out;
}

void DWConfig::validate() const {
    const auto& e = epsilons;
    if (!(e[0] >= e[1] && e[1] >= e[2] && e[2] >= e[3] && e[3] > 0.0)) {
        throw config_error("epsilons must be non-increasing and positive");
    }
    const auto& d = distances;
    if (!(d[0] > d[1] && d[1] > d[2] && d[2] > 0.0)) throw config_error("distances must be strictly decreasing and positive");
    if (kappa_max < 0 || kappa_hic < 0) throw config_error("kappa_max and kappa_hic must be non-negative");
    if (!(discretization_mw > 0.0)) throw config_error("discretization_mw must be positive");
    if (!(sensitivity_step > 0.0)) throw config_error("sensitivity step must be positive");
}

double distance(double zeta, const SecuritySpec& spec) { return std::abs(zeta - spec.gamma); }

double step_size(double d, double p_max_mw, const DWConfig& cfg) {
    int tier = 3;
    if (d > cfg.distances[0]) tier = 0;
    else if (d > cfg.distances[1]) tier = 1;
    else if (d > cfg.distances[2]) tier = 2;
    return cfg.epsilons[tier] * p_max_mw;
}

StepResult dw_step(const Context& ctx, const Evaluation& current, const SecuritySpec& spec, const DWConfig& cfg) {
    StepResult r;
    if (!current.zeta) {
        r.status = StepStatus::Diverged;
        return r;
    }
    const auto sens = sensitivities(ctx, current.op, cfg);
    if (!sens) {
        r.status = StepStatus::Diverged;
        return r;
    }
    const double z = *current.zeta;
    r.gradient = sign_of(z - spec.gamma) * *sens;
    const double norm = r.gradient.lpNorm<Eigen::Infinity>();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        r.status = StepStatus::FlatGradient;
        return r;
    }
    const double d = distance(z, spec);
    const auto& lay = ctx.model.layout();
    const auto& box = ctx.bounds.box;
    r.next = current.op;
    for (int c = 0; c < lay.n_pg(); ++c) {
        const auto& gen = ctx.model.generators()[lay.pg_generator(c)];
        const double alpha = step_size(d, gen.p_max, cfg) / ctx.model.base_mva();
        const int k = lay.pg_offset() + c;
        r.next.x[k] = std::clamp(r.next.x[k] - alpha * r.gradient[c] / norm, box.lower[k], box.upper[k]);
    }
    if (r.next.x == current.op.x) r.status = StepStatus::FlatGradient;
    return r;
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::EnteredHic: return "entered-HIC-and-scanned";
        case Termination::StepBudget: return "step-budget";
        case Termination::PfDivergence: return "pf-divergence";
        case Termination::FlatGradient: return "flat-gradient";
    }
    return "?";
}

Termination parse_termination(const std::string& s) {
    for (Termination t : {Termination::EnteredHic, Termination::StepBudget, Termination::PfDivergence,
                          Termination::FlatGradient}) {
        if (to_string(t) == s) return t;
    }
    throw parse_error("unknown walk termination '" + s + "'");
}

OperatingPoint snap(const NetworkModel& model, const netmodel::Box& box, const OperatingPoint& op, double disc) {
    OperatingPoint out = op;
    const double base = model.base_mva();
    for (int c = 0; c < model.layout().n_pg(); ++c) {
        const long long lo = static_cast<long long>(std::ceil(box.lower[c] * base / disc - 1e-9));
        const long long hi = static_cast<long long>(std::floor(box.upper[c] * base / disc + 1e-9));
        if (lo > hi) {
            out.x[c] = std::clamp(op.x[c], box.lower[c], box.upper[c]);
            continue;
        }
        const long long k = std::clamp(std::llround(op.x[c] * base / disc), lo, hi);
        out.x[c] = grid_value(model, k, disc);
    }
    return out;
}

WalkTrace directed_walk(const Context& ctx, const Evaluation& start, const SecuritySpec& spec, const DWConfig& cfg) {
    WalkTrace t;
    Evaluation cur = start;
    if (!cur.zeta) {
        t.reason = Termination::PfDivergence;
        return t;
    }
    for (int k = 0;; ++k) {
        const double z = *cur.zeta;
        t.steps.push_back({cur.op, z, distance(z, spec)});
        if (spec.in_hic(z)) break;
        if (k == cfg.kappa_max) {
            t.reason = Termination::StepBudget;
            return t;
        }
        const StepResult s = dw_step(ctx, cur, spec, cfg);
        if (s.status != StepStatus::Moved) {
            t.reason = s.status == StepStatus::FlatGradient ? Termination::FlatGradient : Termination::PfDivergence;
            return t;
        }
        cur = evaluate(ctx, s.next);
        if (!cur.zeta) {
            t.reason = Termination::PfDivergence;
            return t;
        }
    }

    // Inside the band: store the snapped point, its axis neighbors, then scan
    // one coordinate at the minimal step.
    t.reason = Termination::EnteredHic;
    const NetworkModel& model = ctx.model;
    const double disc = cfg.discretization_mw;
    const auto& box = ctx.bounds.box;
    std::map<std::vector<long long>, bool> seen;
    auto store = [&](const Evaluation& e) {
        auto key = grid_key(model, e.op, disc);
        if (seen.count(key)) return;
        seen[key] = true;
        t.hic.push_back({e.op, *e.zeta, distance(*e.zeta, spec)});
    };
    auto member = [&](const Evaluation& e) { return e.zeta && spec.in_hic(*e.zeta); };

    const OperatingPoint center = snap(model, box, cur.op, disc);
    const Evaluation ec = evaluate(ctx, center);
    if (member(ec)) store(ec);
    const auto ck = grid_key(model, center, disc);
    const int n = model.layout().n_pg();
    for (int c = 0; c < n; ++c) {
        for (int dir : {-1, 1}) {
            OperatingPoint p = center;
            p.x[c] = grid_value(model, ck[c] + dir, disc);
            if (!within(box, c, p.x[c])) continue;
            const Evaluation e = evaluate(ctx, p);
            if (member(e)) store(e);
        }
    }
    if (!ec.zeta) return t;
    const auto sens = sensitivities(ctx, center, cfg);
    if (!sens) return t;
    Eigen::Index cstar = 0;
    sens->cwiseAbs().maxCoeff(&cstar);
    const int dir = -sign_of(sign_of(*ec.zeta - spec.gamma) * (*sens)[cstar]);
    if (dir == 0) return t;
    const auto& gen = model.generators()[model.layout().pg_generator(static_cast<int>(cstar))];
    const long long units = std::max(1LL, std::llround(cfg.epsilons[3] * gen.p_max / disc));
    for (int k = 1; k <= cfg.kappa_hic; ++k) {
        OperatingPoint p = center;
        auto key = ck;
        key[cstar] += dir * units * k;
        p.x[cstar] = grid_value(model, key[cstar], disc);
        if (!within(box, static_cast<int>(cstar), p.x[cstar])) break;
        if (seen.count(key)) break;
        const Evaluation e = evaluate(ctx, p);
        if (!member(e)) break;
        store(e);
    }
    return t;
}

FinalizeResult finalize(const Context& ctx, const std::vector<std::pair<Eigen::VectorXd, std::uint64_t>>& points,
                        int workers) {
    const int n = static_cast<int>(points.size());
    std::vector<Paired> paired(n);
    parallel_for(n, workers, [&](int i) { paired[i] = pair_with_feasible(ctx, {points[i].first}, false, points[i].second); });
    FinalizeResult out;
    for (int i = 0; i < n; ++i) {
        if (paired[i].dropped) {
            ++out.dropped;
            continue;
        }
        out.rows.push_back(to_raw(paired[i].sample, dataset::Source::DW, points[i].second));
        if (paired[i].counterpart) {
            out.rows.push_back(to_raw(*paired[i].counterpart, dataset::Source::Projection, points[i].second));
        }
    }
    return out;
}

GenerateResult generate(const Context& ctx, const relaxation::Polytope& polytope, const GenerateConfig& cfg,
                        const WalkCheckpoint* checkpoint) {
    cfg.spec.validate();
    cfg.dw.validate();
    GenerateResult res;
    const InitResult init = init_points(ctx, polytope, cfg.n2, cfg.seed, cfg.workers);
    res.init_feasible = static_cast<int>(init.feasible.size());
    res.init_infeasible = static_cast<int>(init.infeasible.size());
    res.init_dropped = init.dropped;

    const int walks = res.init_feasible;
    res.walks = walks;
    std::vector<WalkTrace> traces(walks);
    std::vector<char> resumed(walks, 0);
    parallel_for(walks, cfg.workers, [&](int j) {
        if (checkpoint && checkpoint->load) {
            if (auto t = checkpoint->load(j)) {
                traces[j] = std::move(*t);
                resumed[j] = 1;
                return;
            }
        }
        traces[j] = directed_walk(ctx, init.feasible[j], cfg.spec, cfg.dw);
        if (checkpoint && checkpoint->save) checkpoint->save(j, traces[j]);
    });

    std::vector<std::pair<Eigen::VectorXd, std::uint64_t>> points;
    std::map<std::vector<double>, bool> unique;
    const std::uint64_t walk_base = derive_seed(cfg.seed, kWalkStream);
    for (int j = 0; j < walks; ++j) {
        res.walks_resumed += resumed[j];
        ++res.terminations[static_cast<int>(traces[j].reason)];
        const std::uint64_t ws = derive_seed(walk_base, j);
        for (std::size_t k = 0; k < traces[j].hic.size(); ++k) {
            const Eigen::VectorXd& x = traces[j].hic[k].op.x;
            std::vector<double> key(x.data(), x.data() + x.size());
            if (!unique.emplace(std::move(key), true).second) continue;
            points.emplace_back(x, derive_seed(ws, k));
        }
    }
    res.hic_points = static_cast<int>(points.size());
    FinalizeResult fin = finalize(ctx, points, cfg.workers);
    res.final_dropped = fin.dropped;
    res.data = dataset::make_dataset(ctx.model.layout().names(), fin.rows, cfg.spec);
    return res;
}

AuditResult audit(const Context& ctx, const dataset::Dataset& d, const SecuritySpec& spec, int n, std::uint64_t seed) {
    std::vector<std::size_t> idx(d.rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(n, 0))));
    std::sort(idx.begin(), idx.end());
    AuditResult out;
    for (std::size_t i : idx) {
        const auto& row = d.rows[i];
        const Evaluation e = evaluate(ctx, {row.x});
        const auto l = dataset::label(to_raw(e, row.source, row.seed), spec, row.id);
        ++out.checked;
        if (l.converged != row.converged || l.feasible != row.feasible || l.stable != row.stable ||
            l.secure != row.secure || l.in_hic != row.in_hic) {
            ++out.mismatches;
            out.mismatched_ids.push_back(row.id);
        }
    }
    return out;
}

}  // namespace dsagen::walker
