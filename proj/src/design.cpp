#include "survey/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "survey/error.hpp"

namespace survey {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t checked_n(int n, std::size_t N, const char* what) {
    if (n <= 0) throw DataError(std::string(what) + ": sample size must be positive");
    if (static_cast<std::size_t>(n) > N)
        throw DataError(std::string(what) + ": sample size " + std::to_string(n) +
                        " exceeds population size " + std::to_string(N));
    return static_cast<std::size_t>(n);
}

/// Certainty units split off before a πps scheme runs on the rest.
struct PipsPlan {
    std::vector<double> pi;  // full-frame target π
    std::vector<std::size_t> certain;
    std::vector<std::size_t> rest;
    int rest_n = 0;
};

PipsPlan plan_pips(const Frame& frame, int n) {
    PipsPlan plan;
    plan.pi = compute_pips(frame.mos(), n);
    for (std::size_t i = 0; i < plan.pi.size(); ++i) {
        if (plan.pi[i] >= 1.0) plan.certain.push_back(i);
        else if (plan.pi[i] > 0.0) plan.rest.push_back(i);
    }
    plan.rest_n = n - static_cast<int>(plan.certain.size());
    return plan;
}

std::vector<double> gather(std::span<const double> v, std::span<const std::size_t> idx) {
    std::vector<double> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
    return out;
}

std::vector<double> resolve_working(const RejectivePoisson& d, const Frame& frame,
                                    std::vector<std::size_t>* certain) {
    if (!d.working.empty()) {
        if (d.working.size() != frame.size())
            throw DataError("rejective: working π length differs from frame");
        if (certain) {
            certain->clear();
            for (std::size_t i = 0; i < d.working.size(); ++i)
                if (d.working[i] >= 1.0) certain->push_back(i);
        }
        return d.working;
    }
    // Monte Carlo loops resolve the same design repeatedly; the calibration
    // fixed point is the expensive part.
    struct Memo {
        std::vector<double> mos;
        int n = -1;
        bool calibrate = false;
        std::vector<double> working;
        std::vector<std::size_t> certain;
    };
    thread_local Memo memo;
    auto mos = frame.mos();
    if (memo.n == d.n && memo.calibrate == d.calibrate && memo.mos == mos) {
        if (certain) *certain = memo.certain;
        return memo.working;
    }
    auto plan = plan_pips(frame, d.n);
    std::vector<double> working(frame.size(), 0.0);
    for (auto i : plan.certain) working[i] = 1.0;
    if (plan.rest_n > 0) {
        auto target = gather(plan.pi, plan.rest);
        auto w = d.calibrate ? rejective_working_probs(target, plan.rest_n) : target;
        for (std::size_t k = 0; k < plan.rest.size(); ++k) working[plan.rest[k]] = w[k];
    }
    if (certain) *certain = plan.certain;
    memo = Memo{std::move(mos), d.n, d.calibrate, working, plan.certain};
    return working;
}

std::vector<double> brewer_p(const Frame& frame) {
    const auto pi = compute_pips(frame.mos(), 2);
    std::vector<double> p(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (pi[i] >= 1.0) throw DataError("n=2 πps methods need p_i < 1/2 (unit '" + frame[i].id + "')");
        p[i] = pi[i] / 2.0;
    }
    return p;
}

/// Positions of units within `sub` mapped to the parent frame.
Sample lift(Sample child, std::span<const std::size_t> to_parent) {
    for (auto& s : child.units) s.unit = to_parent[s.unit];
    return child;
}

std::map<std::string, int> cluster_index(const Frame& frame) {
    std::map<std::string, int> idx;
    const auto labels = frame.clusters();
    for (std::size_t c = 0; c < labels.size(); ++c) idx[labels[c]] = static_cast<int>(c);
    return idx;
}

std::vector<std::vector<std::size_t>> cluster_members(const Frame& frame) {
    const auto labels = frame.clusters();
    const auto idx = cluster_index(frame);
    std::vector<std::vector<std::size_t>> members(labels.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
        if (!frame[i].cluster) throw DataError("unit '" + frame[i].id + "' has no cluster label");
        members[idx.at(*frame[i].cluster)].push_back(i);
    }
    return members;
}

void sort_support(DesignDistribution& dist) {
    std::sort(dist.support.begin(), dist.support.end(),
              [](const Outcome& a, const Outcome& b) { return a.units < b.units; });
}

void add_outcome(std::map<std::vector<std::size_t>, double>& acc, std::vector<std::size_t> units, double p,
                 std::size_t cap) {
    std::sort(units.begin(), units.end());
    acc[std::move(units)] += p;
    if (acc.size() > cap) throw DataError("support too large: more than " + std::to_string(cap) + " samples");
}

DesignDistribution from_map(std::map<std::vector<std::size_t>, double> acc) {
    DesignDistribution dist;
    dist.support.reserve(acc.size());
    for (auto& [units, p] : acc)
        if (p > 0.0) dist.support.push_back(Outcome{units, p});
    return dist;
}

double log_binomial(std::size_t N, std::size_t n) {
    return std::lgamma(N + 1.0) - std::lgamma(n + 1.0) - std::lgamma(N - n + 1.0);
}

void check_cap_count(double log_count, std::size_t cap) {
    if (log_count > std::log(static_cast<double>(cap)) + 1e-9)
        throw DataError("support too large: exceeds cap of " + std::to_string(cap) + " samples");
}

/// Calls f(subset) for every n-subset of 0..N-1 in lexicographic order.
template <class F>
void for_each_subset(std::size_t N, std::size_t n, F&& f) {
    std::vector<std::size_t> c(n);
    std::iota(c.begin(), c.end(), 0);
    if (n == 0) {
        f(c);
        return;
    }
    while (true) {
        f(c);
        std::size_t k = n;
        while (k-- > 0) {
            if (c[k] < N - n + k) break;
            if (k == 0) return;
        }
        if (c[k] >= N - n + k) return;
        ++c[k];
        for (std::size_t j = k + 1; j < n; ++j) c[j] = c[j - 1] + 1;
    }
}

DesignDistribution enumerate_poisson(std::span<const double> pi, std::size_t cap) {
    const std::size_t N = pi.size();
    std::vector<std::size_t> certain, free;
    for (std::size_t i = 0; i < N; ++i) {
        if (!(pi[i] > 0.0 && pi[i] <= 1.0)) throw DataError("Poisson: π outside (0,1]");
        (pi[i] >= 1.0 ? certain : free).push_back(i);
    }
    check_cap_count(free.size() * std::log(2.0), cap);
    std::map<std::vector<std::size_t>, double> acc;
    const std::size_t count = std::size_t{1} << free.size();
    for (std::size_t mask = 0; mask < count; ++mask) {
        double p = 1.0;
        std::vector<std::size_t> units = certain;
        for (std::size_t k = 0; k < free.size(); ++k) {
            if (mask >> k & 1U) {
                p *= pi[free[k]];
                units.push_back(free[k]);
            } else {
                p *= 1.0 - pi[free[k]];
            }
        }
        add_outcome(acc, std::move(units), p, cap);
    }
    return from_map(std::move(acc));
}

DesignDistribution enumerate_systematic_pips(std::span<const double> pi) {
    const std::size_t N = pi.size();
    std::vector<double> upper(N);
    std::partial_sum(pi.begin(), pi.end(), upper.begin());
    const long n = std::lround(upper.back());
    std::vector<double> cuts{0.0, 1.0};
    for (double u : upper) {
        const double r = u - std::floor(u);
        if (r > 1e-12 && r < 1.0 - 1e-12) cuts.push_back(r);
    }
    std::sort(cuts.begin(), cuts.end());
    std::map<std::vector<std::size_t>, double> acc;
    for (std::size_t m = 1; m < cuts.size(); ++m) {
        const double len = cuts[m] - cuts[m - 1];
        if (len <= 1e-15) continue;
        const double R = 0.5 * (cuts[m] + cuts[m - 1]);
        std::vector<std::size_t> units;
        for (long l = 0; l < n; ++l) {
            auto it = std::lower_bound(upper.begin(), upper.end(), R + static_cast<double>(l));
            units.push_back(std::min<std::size_t>(it - upper.begin(), N - 1));
        }
        add_outcome(acc, std::move(units), len, SIZE_MAX);
    }
    return from_map(std::move(acc));
}

DesignDistribution enumerate_chao(std::span<const double> x, std::size_t n, std::size_t cap) {
    const std::size_t N = x.size();
    std::map<std::vector<std::size_t>, double> states;
    std::vector<std::size_t> head(n);
    std::iota(head.begin(), head.end(), 0);
    states[head] = 1.0;
    double total = std::accumulate(x.begin(), x.begin() + n, 0.0);
    for (std::size_t k = n; k < N; ++k) {
        total += x[k];
        const double p = static_cast<double>(n) * x[k] / total;
        if (p > 1.0 + 1e-12) throw DataError("Chao: certainty unit in stream; extract it first");
        std::map<std::vector<std::size_t>, double> next;
        for (const auto& [set, prob] : states) {
            if (p < 1.0) next[set] += prob * (1.0 - p);
            if (p > 0.0) {
                for (std::size_t r = 0; r < n; ++r) {
                    auto s = set;
                    s[r] = k;
                    std::sort(s.begin(), s.end());
                    next[s] += prob * p / static_cast<double>(n);
                }
            }
            if (next.size() > cap) throw DataError("support too large for Chao enumeration");
        }
        states = std::move(next);
    }
    return from_map(std::move(states));
}

DesignDistribution enumerate_with_replacement(std::span<const double> p, std::size_t n, std::size_t cap) {
    const std::size_t N = p.size();
    check_cap_count(log_binomial(N + n - 1, n), cap);
    std::map<std::vector<std::size_t>, double> acc;
    std::vector<std::size_t> seq(n, 0);
    const double log_nfact = std::lgamma(n + 1.0);
    while (true) {
        double logp = log_nfact;
        bool zero = false;
        std::size_t run = 1;
        for (std::size_t k = 0; k < n; ++k) {
            if (p[seq[k]] <= 0.0) {
                zero = true;
                break;
            }
            logp += std::log(p[seq[k]]);
            if (k > 0 && seq[k] == seq[k - 1]) {
                ++run;
            } else {
                run = 1;
            }
            logp -= std::log(static_cast<double>(run));
        }
        if (!zero) add_outcome(acc, seq, std::exp(logp), cap);
        // next nondecreasing sequence
        std::size_t k = n;
        while (k > 0 && seq[k - 1] == N - 1) --k;
        if (k == 0) break;
        ++seq[k - 1];
        for (std::size_t j = k; j < n; ++j) seq[j] = seq[k - 1];
    }
    return from_map(std::move(acc));
}

DesignDistribution with_certain(DesignDistribution rest, std::span<const std::size_t> rest_idx,
                                std::span<const std::size_t> certain) {
    for (auto& o : rest.support) {
        for (auto& u : o.units) u = rest_idx[u];
        o.units.insert(o.units.end(), certain.begin(), certain.end());
        std::sort(o.units.begin(), o.units.end());
    }
    return rest;
}

/// Product of independent distributions over disjoint index sets.
DesignDistribution product(const std::vector<DesignDistribution>& parts, std::size_t cap) {
    std::vector<Outcome> acc{Outcome{{}, 1.0}};
    for (const auto& part : parts) {
        std::vector<Outcome> next;
        if (acc.size() * part.support.size() > cap)
            throw DataError("support too large: exceeds cap of " + std::to_string(cap) + " samples");
        next.reserve(acc.size() * part.support.size());
        for (const auto& a : acc)
            for (const auto& b : part.support) {
                Outcome o{a.units, a.prob * b.prob};
                o.units.insert(o.units.end(), b.units.begin(), b.units.end());
                next.push_back(std::move(o));
            }
        acc = std::move(next);
    }
    DesignDistribution dist;
    for (auto& o : acc) {
        std::sort(o.units.begin(), o.units.end());
        dist.support.push_back(std::move(o));
    }
    sort_support(dist);
    return dist;
}

DesignDistribution lift_dist(DesignDistribution d, std::span<const std::size_t> to_parent) {
    for (auto& o : d.support) {
        for (auto& u : o.units) u = to_parent[u];
        std::sort(o.units.begin(), o.units.end());
    }
    return d;
}

std::vector<double> joint_from_support(const DesignDistribution& dist, std::size_t N) {
    std::vector<double> joint(N * N, 0.0);
    for (const auto& o : dist.support) {
        std::vector<std::size_t> u = o.units;
        u.erase(std::unique(u.begin(), u.end()), u.end());
        for (auto i : u)
            for (auto j : u) joint[i * N + j] += o.prob;
    }
    return joint;
}

std::vector<double> first_from_support(const DesignDistribution& dist, std::size_t N) {
    std::vector<double> pi(N, 0.0);
    for (const auto& o : dist.support) {
        std::vector<std::size_t> u = o.units;
        u.erase(std::unique(u.begin(), u.end()), u.end());
        for (auto i : u) pi[i] += o.prob;
    }
    return pi;
}

/// Per-unit annotations: π (first stage), conditional π, stratum, psu, draws.
std::vector<Selection> annotate(const Design& design, const Frame& frame);

}  // namespace

std::string Design::name() const {
    return std::visit(overloaded{
                          [](const Srs&) { return std::string("srs"); },
                          [](const Srswr&) { return std::string("srswr"); },
                          [](const Bernoulli&) { return std::string("bernoulli"); },
                          [](const Poisson&) { return std::string("poisson"); },
                          [](const Systematic&) { return std::string("systematic"); },
                          [](const SystematicPips&) { return std::string("systematic_pips"); },
                          [](const Ppswr&) { return std::string("ppswr"); },
                          [](const Brewer2&) { return std::string("brewer2"); },
                          [](const Durbin2&) { return std::string("durbin2"); },
                          [](const Chao&) { return std::string("chao"); },
                          [](const RejectivePoisson&) { return std::string("rejective_poisson"); },
                          [](const Explicit&) { return std::string("explicit"); },
                          [](const Stratified&) { return std::string("stratified"); },
                          [](const OneStageCluster&) { return std::string("cluster"); },
                          [](const TwoStage&) { return std::string("two_stage"); },
                          [](const TwoPhase&) { return std::string("two_phase"); },
                      },
                      spec);
}

bool Design::with_replacement() const {
    return std::visit(overloaded{
                          [](const Srswr&) { return true; },
                          [](const Ppswr&) { return true; },
                          [](const Stratified& s) {
                              return std::any_of(s.strata.begin(), s.strata.end(),
                                                 [](const auto& h) { return h.design->with_replacement(); });
                          },
                          [](const OneStageCluster& c) { return c.psu->with_replacement(); },
                          [](const TwoStage& t) { return t.psu->with_replacement(); },
                          [](const TwoPhase& t) { return t.phase1->with_replacement(); },
                          [](const auto&) { return false; },
                      },
                      spec);
}

bool Design::fixed_size() const {
    return std::visit(overloaded{
                          [](const Bernoulli&) { return false; },
                          [](const Poisson&) { return false; },
                          [](const Systematic&) { return false; },
                          [](const Explicit& e) {
                              if (e.support.empty()) return true;
                              const auto n = e.support.front().units.size();
                              return std::all_of(e.support.begin(), e.support.end(),
                                                 [n](const Outcome& o) { return o.units.size() == n; });
                          },
                          [](const Stratified& s) {
                              return std::all_of(s.strata.begin(), s.strata.end(),
                                                 [](const auto& h) { return h.design->fixed_size(); });
                          },
                          [](const OneStageCluster&) { return false; },
                          [](const TwoStage&) { return false; },
                          [](const TwoPhase&) { return false; },
                          [](const auto&) { return true; },
                      },
                      spec);
}

namespace {

bool is_element_design(const Design& d) {
    return !std::holds_alternative<Stratified>(d.spec) && !std::holds_alternative<OneStageCluster>(d.spec) &&
           !std::holds_alternative<TwoStage>(d.spec) && !std::holds_alternative<TwoPhase>(d.spec);
}

void validate_at(const Design& design, const std::string& path) {
    std::visit(overloaded{
                   [&](const Stratified& s) {
                       if (s.strata.empty()) throw DataError(path + ": stratified design without strata");
                       std::set<std::string> seen;
                       for (const auto& h : s.strata) {
                           if (!seen.insert(h.label).second)
                               throw DataError(path + ": duplicate stratum '" + h.label + "'");
                           if (std::holds_alternative<TwoPhase>(h.design->spec))
                               throw DataError(path + "/" + h.label +
                                               ": two-phase design not allowed inside a stratum");
                           if (std::holds_alternative<Stratified>(h.design->spec))
                               throw DataError(path + "/" + h.label + ": nested stratification not supported");
                           validate_at(*h.design, path + "/" + h.label);
                       }
                   },
                   [&](const OneStageCluster& c) {
                       if (!is_element_design(*c.psu))
                           throw DataError(path + "/psu: PSU design must be a single-stage design");
                   },
                   [&](const TwoStage& t) {
                       if (!is_element_design(*t.psu))
                           throw DataError(path + "/psu: PSU design must be a single-stage design");
                       if (!is_element_design(*t.ssu))
                           throw DataError(path + "/ssu: SSU design must be a single-stage design (found " +
                                           t.ssu->name() + ")");
                       if (t.ssu->with_replacement())
                           throw DataError(path + "/ssu: with-replacement SSU designs not supported");
                   },
                   [&](const TwoPhase& t) {
                       if (std::holds_alternative<TwoPhase>(t.phase1->spec))
                           throw DataError(path + "/phase1: nested two-phase design");
                       if (t.phase1->with_replacement())
                           throw DataError(path + "/phase1: with-replacement phase-1 design not supported");
                       validate_at(*t.phase1, path + "/phase1");
                       if (const auto* r = std::get_if<StratifiedSrsRule>(&t.rule)) {
                           if (r->rates.size() != r->cuts.size() + 1)
                               throw DataError(path + "/rule: need one rate per group (cuts + 1)");
                           if (!std::is_sorted(r->cuts.begin(), r->cuts.end()))
                               throw DataError(path + "/rule: cut points must ascend");
                           for (double v : r->rates)
                               if (!(v > 0.0 && v <= 1.0)) throw DataError(path + "/rule: rates must be in (0,1]");
                       }
                       if (const auto* r = std::get_if<PoissonPpsRule>(&t.rule))
                           if (r->expected_size <= 0) throw DataError(path + "/rule: expected size must be positive");
                   },
                   [](const auto&) {},
               },
               design.spec);
}

}  // namespace

void validate_design(const Design& design) { validate_at(design, "design"); }

Frame cluster_frame(const Frame& frame) {
    const auto labels = frame.clusters();
    const auto members = cluster_members(frame);
    std::vector<Unit> units(labels.size());
    for (std::size_t c = 0; c < labels.size(); ++c) {
        units[c].id = labels[c];
        units[c].mos = 0.0;
        for (auto i : members[c]) units[c].mos += frame[i].mos;
        units[c].stratum = frame[members[c].front()].stratum;
    }
    return Frame(std::move(units));
}

// ---------------------------------------------------------------- drawing

Sample draw(const Design& design, const Frame& frame, RngStream& rng) {
    Sample s = std::visit(
        overloaded{
            [&](const Srs& d) { return select_srs(frame, d.n, d.method, rng); },
            [&](const Srswr& d) { return select_srswr(frame, d.n, rng); },
            [&](const Bernoulli& d) { return select_bernoulli(frame, d.pi, rng); },
            [&](const Poisson& d) {
                if (d.n > 0) {
                    const auto pi = compute_pips(frame.mos(), d.n);
                    return select_poisson(frame, pi, rng);
                }
                return select_poisson(frame, d.pi, rng);
            },
            [&](const Systematic& d) { return select_systematic(frame, d.n, rng); },
            [&](const SystematicPips& d) {
                const auto pi = compute_pips(frame.mos(), d.n);
                return select_pips(frame, pi, PipsMethod::systematic_pips, rng);
            },
            [&](const Ppswr& d) { return select_pps_wr(frame, frame.mos(), d.n, d.method, rng, d.lahiri_bound); },
            [&](const Brewer2&) {
                const auto p = brewer_p(frame);
                std::vector<double> pi(p.size());
                for (std::size_t i = 0; i < p.size(); ++i) pi[i] = 2.0 * p[i];
                return select_pips(frame, pi, PipsMethod::brewer2, rng);
            },
            [&](const Durbin2&) {
                const auto p = brewer_p(frame);
                std::vector<double> pi(p.size());
                for (std::size_t i = 0; i < p.size(); ++i) pi[i] = 2.0 * p[i];
                return select_pips(frame, pi, PipsMethod::durbin2, rng);
            },
            [&](const Chao& d) {
                auto plan = plan_pips(frame, d.n);
                Sample out;
                if (plan.rest_n > 0) {
                    const Frame sub = frame.subset(plan.rest);
                    const auto x = sub.mos();
                    ChaoSampler<std::size_t> sampler(plan.rest_n, rng);
                    for (std::size_t k = 0; k < x.size(); ++k) sampler.push(k, x[k]);
                    const auto pi = chao_pips(x, plan.rest_n);
                    for (auto k : sampler.items()) out.units.push_back(Selection{.unit = plan.rest[k], .pi = pi[k]});
                }
                for (auto i : plan.certain) out.units.push_back(Selection{.unit = i, .pi = 1.0});
                std::sort(out.units.begin(), out.units.end(),
                          [](const auto& a, const auto& b) { return a.unit < b.unit; });
                out.design_tag = "chao";
                return out;
            },
            [&](const RejectivePoisson& d) {
                std::vector<std::size_t> certain;
                const auto working = resolve_working(d, frame, &certain);
                std::vector<std::size_t> rest;
                for (std::size_t i = 0; i < frame.size(); ++i)
                    if (working[i] < 1.0 && working[i] > 0.0) rest.push_back(i);
                Sample out;
                out.design_tag = "rejective_poisson";
                out.flags.push_back("approximate_pi");
                const int rest_n = d.n - static_cast<int>(certain.size());
                if (rest_n > 0) {
                    const Frame sub = frame.subset(rest);
                    const auto w = gather(working, rest);
                    out = lift(select_rejective(sub, w, rest_n, rng), rest);
                }
                for (auto i : certain) out.units.push_back(Selection{.unit = i, .pi = 1.0});
                std::sort(out.units.begin(), out.units.end(),
                          [](const auto& a, const auto& b) { return a.unit < b.unit; });
                return out;
            },
            [&](const Explicit& d) {
                double u = rng.uniform(), acc = 0.0;
                const Outcome* chosen = &d.support.back();
                for (const auto& o : d.support) {
                    acc += o.prob;
                    if (u < acc) {
                        chosen = &o;
                        break;
                    }
                }
                return realize(design, frame, *chosen);
            },
            [&](const Stratified& d) { return select_stratified(frame, d.strata, rng); },
            [&](const OneStageCluster& d) { return select_two_stage(frame, *d.psu, nullptr, rng); },
            [&](const TwoStage& d) { return select_two_stage(frame, *d.psu, &*d.ssu, rng); },
            [&](const TwoPhase& d) { return select_two_phase(frame, *d.phase1, d.rule, rng); },
        },
        design.spec);
    if (s.design_tag.empty() || std::holds_alternative<Explicit>(design.spec)) s.design_tag = design.name();
    return s;
}

Sample select_stratified(const Frame& frame, const std::vector<StratumDesign>& strata, RngStream& rng) {
    std::map<std::string, std::size_t> position;
    for (std::size_t h = 0; h < strata.size(); ++h) position[strata[h].label] = h;
    for (std::size_t i = 0; i < frame.size(); ++i) {
        if (!frame[i].stratum) throw DataError("unit '" + frame[i].id + "' has no stratum label");
        if (!position.count(*frame[i].stratum))
            throw DataError("stratum '" + *frame[i].stratum + "' has no design");
    }
    const auto global_psu = cluster_index(frame);
    Sample out;
    out.design_tag = "stratified";
    for (std::size_t h = 0; h < strata.size(); ++h) {
        const auto members = frame.members_of_stratum(strata[h].label);
        if (members.empty()) throw DataError("stratum '" + strata[h].label + "' is empty");
        const Frame sub = frame.subset(members);
        Sample child = lift(draw(*strata[h].design, sub, rng), members);
        for (auto& s : child.units) {
            s.stratum = static_cast<int>(h);
            if (s.psu >= 0) s.psu = global_psu.at(*frame[s.unit].cluster);
        }
        out.with_replacement = out.with_replacement || child.with_replacement;
        out.draws += child.draws;
        out.units.insert(out.units.end(), child.units.begin(), child.units.end());
        for (auto& f : child.flags)
            if (std::find(out.flags.begin(), out.flags.end(), f) == out.flags.end()) out.flags.push_back(f);
    }
    std::sort(out.units.begin(), out.units.end(), [](const auto& a, const auto& b) { return a.unit < b.unit; });
    return out;
}

Sample select_two_stage(const Frame& frame, const Design& psu, const Design* ssu, RngStream& rng) {
    const Frame clusters = cluster_frame(frame);
    const auto members = cluster_members(frame);
    const Sample first = draw(psu, clusters, rng);
    Sample out;
    out.design_tag = ssu ? "two_stage" : "cluster";
    out.with_replacement = first.with_replacement;
    out.draws = first.draws;
    for (const auto& ps : first.units) {
        const auto& m = members[ps.unit];
        std::vector<std::pair<std::size_t, double>> picked;
        if (ssu) {
            const Frame sub = frame.subset(m);
            const Sample second = draw(*ssu, sub, rng);
            for (std::size_t k = 0; k < second.units.size(); ++k)
                picked.emplace_back(m[second.units[k].unit], second.overall_pi(k));
        } else {
            for (auto i : m) picked.emplace_back(i, 1.0);
        }
        for (const auto& [unit, cond] : picked) {
            Selection s;
            s.unit = unit;
            s.multiplicity = ps.multiplicity;
            s.pi = ps.pi;
            s.conditional_pi = cond;
            s.psu = static_cast<int>(ps.unit);
            s.draws = ps.draws;
            out.units.push_back(s);
        }
    }
    std::sort(out.units.begin(), out.units.end(), [](const auto& a, const auto& b) { return a.unit < b.unit; });
    return out;
}

namespace {

int phase2_group(const StratifiedSrsRule& r, double x) {
    return static_cast<int>(std::upper_bound(r.cuts.begin(), r.cuts.end(), x) - r.cuts.begin());
}

}  // namespace

Sample select_two_phase(const Frame& frame, const Design& phase1, const Phase2Rule& rule, RngStream& rng) {
    if (phase1.with_replacement()) throw DataError("two-phase: phase-1 design must be without replacement");
    auto first = std::make_shared<Sample>(draw(phase1, frame, rng));
    Sample out;
    out.design_tag = "two_phase";
    std::vector<double> pi2(first->units.size(), 1.0);
    std::vector<bool> take(first->units.size(), false);

    std::visit(overloaded{
                   [&](const KeepAll&) { std::fill(take.begin(), take.end(), true); },
                   [&](const StratifiedSrsRule& r) {
                       if (r.rates.size() != r.cuts.size() + 1)
                           throw DataError("two-phase rule: need one rate per group");
                       std::vector<std::vector<std::size_t>> groups(r.rates.size());
                       for (std::size_t k = 0; k < first->units.size(); ++k) {
                           const auto& u = frame[first->units[k].unit];
                           if (u.aux.size() <= r.x) throw DataError("two-phase rule: unit '" + u.id + "' lacks aux");
                           const int g = phase2_group(r, u.aux[r.x]);
                           first->units[k].group = g;
                           groups[g].push_back(k);
                       }
                       for (std::size_t g = 0; g < groups.size(); ++g) {
                           const auto n_g = static_cast<long>(groups[g].size());
                           if (n_g == 0) continue;
                           const long r_g = std::min(n_g, std::max(std::min(n_g, 2L), std::lround(r.rates[g] * n_g)));
                           // partial Fisher-Yates over the group
                           auto pool = groups[g];
                           for (long j = 0; j < r_g; ++j) {
                               const auto pick = j + static_cast<long>(rng.below(pool.size() - j));
                               std::swap(pool[j], pool[pick]);
                               take[pool[j]] = true;
                           }
                           for (auto k : groups[g]) pi2[k] = static_cast<double>(r_g) / static_cast<double>(n_g);
                       }
                   },
                   [&](const PoissonPpsRule& r) {
                       std::vector<double> x(first->units.size());
                       for (std::size_t k = 0; k < x.size(); ++k) {
                           const auto& u = frame[first->units[k].unit];
                           if (u.aux.size() <= r.x) throw DataError("two-phase rule: unit '" + u.id + "' lacks aux");
                           x[k] = u.aux[r.x];
                       }
                       const auto p = compute_pips(x, r.expected_size);
                       for (std::size_t k = 0; k < x.size(); ++k) {
                           if (!(p[k] > 0.0)) throw DataError("two-phase rule: zero phase-2 probability");
                           pi2[k] = p[k];
                           take[k] = rng.uniform() < p[k];
                       }
                   },
               },
               rule);

    for (std::size_t k = 0; k < first->units.size(); ++k) {
        if (!take[k]) continue;
        Selection s = first->units[k];
        s.pi = first->overall_pi(k);
        s.conditional_pi = pi2[k];
        out.units.push_back(s);
    }
    out.phase1 = std::move(first);
    return out;
}

// ---------------------------------------------------- inclusion probabilities

namespace {

std::vector<double> single_stage_pi(const Design& design, const Frame& frame) {
    const std::size_t N = frame.size();
    return std::visit(
        overloaded{
            [&](const Srs& d) {
                const auto n = checked_n(d.n, N, "srs");
                return std::vector<double>(N, static_cast<double>(n) / static_cast<double>(N));
            },
            [&](const Srswr& d) {
                if (d.n <= 0 || N == 0) throw DataError("srswr: invalid size");
                return std::vector<double>(N, 1.0 / static_cast<double>(N));
            },
            [&](const Bernoulli& d) {
                if (!(d.pi > 0.0 && d.pi <= 1.0)) throw DataError("bernoulli: π outside (0,1]");
                return std::vector<double>(N, d.pi);
            },
            [&](const Poisson& d) {
                if (d.n > 0) return compute_pips(frame.mos(), d.n);
                if (d.pi.size() != N) throw DataError("poisson: π length differs from frame");
                return d.pi;
            },
            [&](const Systematic& d) {
                const auto plan = systematic_plan(N, d.n);
                return std::vector<double>(N, 1.0 / static_cast<double>(plan.interval));
            },
            [&](const SystematicPips& d) { return compute_pips(frame.mos(), d.n); },
            [&](const Ppswr& d) {
                if (d.n <= 0) throw DataError("ppswr: invalid size");
                const auto x = frame.mos();
                const double total = std::accumulate(x.begin(), x.end(), 0.0);
                if (!(total > 0.0)) throw DataError("ppswr: all mos are zero");
                std::vector<double> p(N);
                for (std::size_t i = 0; i < N; ++i) p[i] = x[i] / total;
                return p;
            },
            [&](const Brewer2&) {
                auto p = brewer_p(frame);
                for (auto& v : p) v *= 2.0;
                return p;
            },
            [&](const Durbin2&) {
                auto p = brewer_p(frame);
                for (auto& v : p) v *= 2.0;
                return p;
            },
            [&](const Chao& d) {
                auto plan = plan_pips(frame, d.n);
                std::vector<double> pi(N, 0.0);
                for (auto i : plan.certain) pi[i] = 1.0;
                if (plan.rest_n > 0) {
                    const auto x = gather(frame.mos(), plan.rest);
                    const auto sub = chao_pips(x, plan.rest_n);
                    for (std::size_t k = 0; k < plan.rest.size(); ++k) pi[plan.rest[k]] = sub[k];
                }
                return pi;
            },
            [&](const RejectivePoisson& d) {
                const auto working = resolve_working(d, frame, nullptr);
                std::vector<double> pi(N, 0.0);
                std::vector<std::size_t> rest;
                int certain = 0;
                for (std::size_t i = 0; i < N; ++i) {
                    if (working[i] >= 1.0) {
                        pi[i] = 1.0;
                        ++certain;
                    } else if (working[i] > 0.0) {
                        rest.push_back(i);
                    }
                }
                if (d.n - certain > 0) {
                    const auto m = rejective_marginals(gather(working, rest), d.n - certain);
                    for (std::size_t k = 0; k < rest.size(); ++k) pi[rest[k]] = m[k];
                }
                return pi;
            },
            [&](const Explicit& d) {
                DesignDistribution dist{d.support};
                return first_from_support(dist, N);
            },
            [&](const auto&) -> std::vector<double> { throw DataError("not a single-stage design"); },
        },
        design.spec);
}

std::vector<Selection> annotate(const Design& design, const Frame& frame) {
    const std::size_t N = frame.size();
    std::vector<Selection> ann(N);
    for (std::size_t i = 0; i < N; ++i) ann[i].unit = i;
    std::visit(overloaded{
                   [&](const Stratified& d) {
                       const auto global_psu = cluster_index(frame);
                       for (std::size_t h = 0; h < d.strata.size(); ++h) {
                           const auto members = frame.members_of_stratum(d.strata[h].label);
                           const Frame sub = frame.subset(members);
                           auto child = annotate(*d.strata[h].design, sub);
                           for (std::size_t k = 0; k < members.size(); ++k) {
                               Selection s = child[k];
                               s.unit = members[k];
                               s.stratum = static_cast<int>(h);
                               if (s.psu >= 0) s.psu = global_psu.at(*frame[s.unit].cluster);
                               ann[members[k]] = s;
                           }
                       }
                       for (std::size_t i = 0; i < N; ++i)
                           if (ann[i].stratum < 0) throw DataError("unit '" + frame[i].id + "' not covered by any stratum");
                   },
                   [&](const OneStageCluster& d) {
                       const Frame clusters = cluster_frame(frame);
                       const auto members = cluster_members(frame);
                       const auto psu_ann = annotate(*d.psu, clusters);
                       for (std::size_t c = 0; c < members.size(); ++c)
                           for (auto i : members[c]) {
                               ann[i].pi = psu_ann[c].pi;
                               ann[i].conditional_pi = 1.0;
                               ann[i].psu = static_cast<int>(c);
                               ann[i].draws = psu_ann[c].draws;
                           }
                   },
                   [&](const TwoStage& d) {
                       const Frame clusters = cluster_frame(frame);
                       const auto members = cluster_members(frame);
                       const auto psu_ann = annotate(*d.psu, clusters);
                       for (std::size_t c = 0; c < members.size(); ++c) {
                           const Frame sub = frame.subset(members[c]);
                           const auto cond = single_stage_pi(*d.ssu, sub);
                           for (std::size_t k = 0; k < members[c].size(); ++k) {
                               const auto i = members[c][k];
                               ann[i].pi = psu_ann[c].pi;
                               ann[i].conditional_pi = cond[k];
                               ann[i].psu = static_cast<int>(c);
                               ann[i].draws = psu_ann[c].draws;
                           }
                       }
                   },
                   [&](const TwoPhase& d) {
                       if (!std::holds_alternative<KeepAll>(d.rule))
                           throw DataError("two-phase design: first-order π has no closed form for this rule");
                       ann = annotate(*d.phase1, frame);
                       for (auto& s : ann) {
                           s.pi = s.pi * s.conditional_pi.value_or(1.0);
                           s.conditional_pi = 1.0;
                       }
                   },
                   [&](const auto&) {
                       const auto pi = single_stage_pi(design, frame);
                       int draws = 0;
                       if (const auto* d = std::get_if<Srswr>(&design.spec)) draws = d->n;
                       if (const auto* d = std::get_if<Ppswr>(&design.spec)) draws = d->n;
                       for (std::size_t i = 0; i < N; ++i) {
                           ann[i].pi = pi[i];
                           ann[i].draws = draws;
                       }
                   },
               },
               design.spec);
    return ann;
}

}  // namespace

InclusionProbs first_order_pips(const Design& design, const Frame& frame) {
    const auto ann = annotate(design, frame);
    InclusionProbs out;
    out.first_order.resize(ann.size());
    for (std::size_t i = 0; i < ann.size(); ++i) {
        out.first_order[i] = ann[i].pi * ann[i].conditional_pi.value_or(1.0);
        if (!(out.first_order[i] > 0.0))
            throw DataError("unit '" + frame[i].id + "' has zero inclusion probability (non-probability design)");
    }
    return out;
}

namespace {

std::vector<double> joint_matrix(const Design& design, const Frame& frame, std::size_t cap, bool& non_measurable);

std::vector<double> outer_joint(std::span<const double> pi) {
    const std::size_t N = pi.size();
    std::vector<double> joint(N * N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) joint[i * N + j] = i == j ? pi[i] : pi[i] * pi[j];
    return joint;
}

std::vector<double> joint_matrix(const Design& design, const Frame& frame, std::size_t cap, bool& non_measurable) {
    const std::size_t N = frame.size();
    if (design.with_replacement())
        throw DataError("joint inclusion probabilities are not defined for with-replacement designs");
    return std::visit(
        overloaded{
            [&](const Srs& d) {
                const auto n = static_cast<double>(checked_n(d.n, N, "srs"));
                const double Nd = static_cast<double>(N);
                std::vector<double> joint(N * N, N > 1 ? n * (n - 1.0) / (Nd * (Nd - 1.0)) : 0.0);
                for (std::size_t i = 0; i < N; ++i) joint[i * N + i] = n / Nd;
                return joint;
            },
            [&](const Bernoulli&) { return outer_joint(single_stage_pi(design, frame)); },
            [&](const Poisson&) { return outer_joint(single_stage_pi(design, frame)); },
            [&](const Brewer2&) { return brewer_joint(brewer_p(frame)); },
            [&](const Durbin2&) { return brewer_joint(brewer_p(frame)); },
            [&](const RejectivePoisson& d) {
                const auto working = resolve_working(d, frame, nullptr);
                std::vector<std::size_t> rest, certain;
                for (std::size_t i = 0; i < N; ++i) {
                    if (working[i] >= 1.0) certain.push_back(i);
                    else if (working[i] > 0.0) rest.push_back(i);
                }
                const int rest_n = d.n - static_cast<int>(certain.size());
                std::vector<double> pi(N, 0.0);
                std::vector<double> joint(N * N, 0.0);
                if (rest_n > 0) {
                    const auto sub = rejective_joint(gather(working, rest), rest_n);
                    for (std::size_t a = 0; a < rest.size(); ++a) {
                        pi[rest[a]] = sub[a * rest.size() + a];
                        for (std::size_t b = 0; b < rest.size(); ++b)
                            joint[rest[a] * N + rest[b]] = sub[a * rest.size() + b];
                    }
                }
                for (auto c : certain) {
                    pi[c] = 1.0;
                    for (std::size_t j = 0; j < N; ++j) {
                        joint[c * N + j] = pi[j] > 0.0 || working[j] >= 1.0 ? (working[j] >= 1.0 ? 1.0 : pi[j]) : 0.0;
                        joint[j * N + c] = joint[c * N + j];
                    }
                }
                return joint;
            },
            [&](const Stratified& d) {
                const auto pi = first_order_pips(design, frame).first_order;
                auto joint = outer_joint(pi);
                for (const auto& h : d.strata) {
                    const auto members = frame.members_of_stratum(h.label);
                    const auto sub = joint_matrix(*h.design, frame.subset(members), cap, non_measurable);
                    const std::size_t m = members.size();
                    for (std::size_t a = 0; a < m; ++a)
                        for (std::size_t b = 0; b < m; ++b) joint[members[a] * N + members[b]] = sub[a * m + b];
                }
                return joint;
            },
            [&](const OneStageCluster& d) {
                const Frame clusters = cluster_frame(frame);
                const auto cj = joint_matrix(*d.psu, clusters, cap, non_measurable);
                const std::size_t C = clusters.size();
                std::vector<int> of(N);
                const auto members = cluster_members(frame);
                for (std::size_t c = 0; c < C; ++c)
                    for (auto i : members[c]) of[i] = static_cast<int>(c);
                std::vector<double> joint(N * N);
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = 0; j < N; ++j) joint[i * N + j] = cj[of[i] * C + of[j]];
                return joint;
            },
            [&](const TwoStage& d) {
                const Frame clusters = cluster_frame(frame);
                const auto cj = joint_matrix(*d.psu, clusters, cap, non_measurable);
                const std::size_t C = clusters.size();
                const auto members = cluster_members(frame);
                std::vector<int> of(N);
                std::vector<double> cond(N);
                std::vector<double> joint(N * N, 0.0);
                std::vector<std::vector<double>> within(C);
                for (std::size_t c = 0; c < C; ++c) {
                    const Frame sub = frame.subset(members[c]);
                    within[c] = joint_matrix(*d.ssu, sub, cap, non_measurable);
                    for (std::size_t k = 0; k < members[c].size(); ++k) {
                        of[members[c][k]] = static_cast<int>(c);
                        cond[members[c][k]] = within[c][k * members[c].size() + k];
                    }
                }
                std::vector<std::size_t> pos(N);
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t k = 0; k < members[c].size(); ++k) pos[members[c][k]] = k;
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = 0; j < N; ++j) {
                        const auto a = of[i], b = of[j];
                        if (a == b) {
                            const std::size_t m = members[a].size();
                            joint[i * N + j] = cj[a * C + a] * within[a][pos[i] * m + pos[j]];
                        } else {
                            joint[i * N + j] = cj[a * C + b] * cond[i] * cond[j];
                        }
                    }
                return joint;
            },
            [&](const auto&) {
                const auto dist = enumerate_design(design, frame, cap);
                return joint_from_support(dist, N);
            },
        },
        design.spec);
}

}  // namespace

InclusionProbs joint_pips(const Design& design, const Frame& frame, std::size_t cap) {
    InclusionProbs out;
    out.first_order = first_order_pips(design, frame).first_order;
    bool non_measurable = false;
    out.joint = joint_matrix(design, frame, cap, non_measurable);
    const std::size_t N = frame.size();
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            if (i != j && out.joint[i * N + j] <= 0.0) non_measurable = true;
    out.non_measurable = non_measurable;
    return out;
}

// ------------------------------------------------------------ enumeration

DesignDistribution enumerate_design(const Design& design, const Frame& frame, std::size_t cap) {
    const std::size_t N = frame.size();
    DesignDistribution dist = std::visit(
        overloaded{
            [&](const Srs& d) {
                const auto n = checked_n(d.n, N, "srs");
                check_cap_count(log_binomial(N, n), cap);
                DesignDistribution out;
                const double p = std::exp(-log_binomial(N, n));
                for_each_subset(N, n, [&](const std::vector<std::size_t>& c) { out.support.push_back({c, p}); });
                return out;
            },
            [&](const Srswr& d) {
                if (d.n <= 0 || N == 0) throw DataError("srswr: invalid size");
                return enumerate_with_replacement(single_stage_pi(design, frame), d.n, cap);
            },
            [&](const Ppswr& d) {
                return enumerate_with_replacement(single_stage_pi(design, frame), static_cast<std::size_t>(d.n), cap);
            },
            [&](const Bernoulli&) { return enumerate_poisson(single_stage_pi(design, frame), cap); },
            [&](const Poisson&) { return enumerate_poisson(single_stage_pi(design, frame), cap); },
            [&](const Systematic& d) {
                const auto plan = systematic_plan(N, d.n);
                DesignDistribution out;
                for (std::size_t r = 1; r <= plan.interval; ++r)
                    out.support.push_back({systematic_from_start(N, plan.interval, r),
                                           1.0 / static_cast<double>(plan.interval)});
                return out;
            },
            [&](const SystematicPips& d) { return enumerate_systematic_pips(compute_pips(frame.mos(), d.n)); },
            [&](const Brewer2&) {
                const auto p = brewer_p(frame);
                const auto pairs = brewer_pair_probs(p);
                DesignDistribution out;
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = i + 1; j < N; ++j)
                        if (pairs[i * N + j] > 0.0) out.support.push_back({{i, j}, pairs[i * N + j]});
                return out;
            },
            [&](const Durbin2&) {
                const auto p = brewer_p(frame);
                const auto pairs = durbin_pair_probs(p);
                DesignDistribution out;
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = i + 1; j < N; ++j)
                        if (pairs[i * N + j] > 0.0) out.support.push_back({{i, j}, pairs[i * N + j]});
                return out;
            },
            [&](const Chao& d) {
                auto plan = plan_pips(frame, d.n);
                if (plan.rest_n == 0) return DesignDistribution{{Outcome{plan.certain, 1.0}}};
                auto rest = enumerate_chao(gather(frame.mos(), plan.rest), plan.rest_n, cap);
                return with_certain(std::move(rest), plan.rest, plan.certain);
            },
            [&](const RejectivePoisson& d) {
                const auto working = resolve_working(d, frame, nullptr);
                std::vector<std::size_t> rest, certain;
                for (std::size_t i = 0; i < N; ++i) {
                    if (working[i] >= 1.0) certain.push_back(i);
                    else if (working[i] > 0.0) rest.push_back(i);
                }
                const int rest_n = d.n - static_cast<int>(certain.size());
                if (rest_n <= 0) return DesignDistribution{{Outcome{certain, 1.0}}};
                if (static_cast<std::size_t>(rest_n) > rest.size()) throw DataError("rejective: n exceeds units");
                check_cap_count(log_binomial(rest.size(), rest_n), cap);
                std::vector<long double> w(rest.size());
                for (std::size_t k = 0; k < rest.size(); ++k)
                    w[k] = static_cast<long double>(working[rest[k]]) / (1.0L - working[rest[k]]);
                DesignDistribution sub;
                long double total = 0.0L;
                std::vector<long double> raw;
                for_each_subset(rest.size(), rest_n, [&](const std::vector<std::size_t>& c) {
                    long double p = 1.0L;
                    for (auto k : c) p *= w[k];
                    raw.push_back(p);
                    total += p;
                    sub.support.push_back({c, 0.0});
                });
                for (std::size_t k = 0; k < raw.size(); ++k) sub.support[k].prob = static_cast<double>(raw[k] / total);
                return with_certain(std::move(sub), rest, certain);
            },
            [&](const Explicit& d) {
                std::map<std::vector<std::size_t>, double> acc;
                for (const auto& o : d.support) {
                    for (auto u : o.units)
                        if (u >= N) throw DataError("explicit design lists a unit outside the frame");
                    add_outcome(acc, o.units, o.prob, cap);
                }
                return from_map(std::move(acc));
            },
            [&](const Stratified& d) {
                std::vector<DesignDistribution> parts;
                std::size_t covered = 0;
                for (const auto& h : d.strata) {
                    const auto members = frame.members_of_stratum(h.label);
                    if (members.empty()) throw DataError("stratum '" + h.label + "' is empty");
                    covered += members.size();
                    parts.push_back(lift_dist(enumerate_design(*h.design, frame.subset(members), cap), members));
                }
                if (covered != N) throw DataError("some units are not covered by any stratum");
                return product(parts, cap);
            },
            [&](const OneStageCluster& d) {
                const Frame clusters = cluster_frame(frame);
                const auto members = cluster_members(frame);
                auto psu = enumerate_design(*d.psu, clusters, cap);
                DesignDistribution out;
                for (const auto& o : psu.support) {
                    Outcome u{{}, o.prob};
                    for (auto c : o.units) u.units.insert(u.units.end(), members[c].begin(), members[c].end());
                    std::sort(u.units.begin(), u.units.end());
                    out.support.push_back(std::move(u));
                }
                return out;
            },
            [&](const TwoStage& d) {
                const Frame clusters = cluster_frame(frame);
                const auto members = cluster_members(frame);
                auto psu = enumerate_design(*d.psu, clusters, cap);
                std::vector<DesignDistribution> within(members.size());
                for (std::size_t c = 0; c < members.size(); ++c)
                    within[c] = lift_dist(enumerate_design(*d.ssu, frame.subset(members[c]), cap), members[c]);
                std::map<std::vector<std::size_t>, double> acc;
                for (const auto& o : psu.support) {
                    std::vector<DesignDistribution> parts;
                    for (auto c : o.units) parts.push_back(within[c]);
                    const auto joint = product(parts, cap);
                    for (const auto& s : joint.support) add_outcome(acc, s.units, o.prob * s.prob, cap);
                }
                return from_map(std::move(acc));
            },
            [&](const TwoPhase& d) {
                if (!std::holds_alternative<KeepAll>(d.rule))
                    throw DataError("two-phase designs with data-dependent phase-2 rules are not enumerable");
                return enumerate_design(*d.phase1, frame, cap);
            },
        },
        design.spec);
    sort_support(dist);
    if (dist.support.size() > cap)
        throw DataError("support too large: exceeds cap of " + std::to_string(cap) + " samples");
    return dist;
}

Sample realize(const Design& design, const Frame& frame, const Outcome& outcome) {
    const auto ann = annotate(design, frame);
    Sample s;
    s.design_tag = design.name();
    s.with_replacement = design.with_replacement();
    std::map<std::size_t, int> count;
    for (auto u : outcome.units) {
        if (u >= frame.size()) throw DataError("outcome lists a unit outside the frame");
        ++count[u];
    }
    for (const auto& [u, m] : count) {
        Selection sel = ann[u];
        sel.multiplicity = m;
        s.units.push_back(sel);
    }
    if (s.with_replacement) {
        int draws = 0;
        for (const auto& sel : s.units)
            if (sel.draws > 0) draws = std::max(draws, sel.draws);
        s.draws = draws;
    }
    if (std::holds_alternative<RejectivePoisson>(design.spec)) s.flags.push_back("approximate_pi");
    return s;
}

}  // namespace survey
