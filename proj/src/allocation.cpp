#include "survey/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>

#include "survey/error.hpp"
#include "survey/rng.hpp"

namespace survey {

namespace {

void check_strata(std::span<const StratumInfo> strata) {
    if (strata.empty()) throw DataError("allocation needs at least one stratum");
    for (const auto& h : strata) {
        if (!(h.N >= 1.0)) throw DataError("stratum size N_h must be at least 1");
        if (!(h.S >= 0.0)) throw DataError("stratum SD S_h must be nonnegative");
        if (!(h.cost > 0.0)) throw DataError("stratum cost c_h must be positive");
    }
}

void check_total(std::span<const StratumInfo> strata, int n) {
    if (n < static_cast<int>(strata.size()))
        throw DataError("sample size " + std::to_string(n) + " is smaller than the number of strata");
    double N = 0.0;
    for (const auto& h : strata) N += h.N;
    if (n > N) throw DataError("sample size exceeds population size");
}

std::vector<int> caps(std::span<const StratumInfo> strata) {
    std::vector<int> upper(strata.size());
    for (std::size_t h = 0; h < strata.size(); ++h) upper[h] = static_cast<int>(std::floor(strata[h].N));
    return upper;
}

Allocation finish(std::span<const StratumInfo> strata, std::vector<int> n) {
    Allocation a;
    a.capped.resize(n.size());
    for (std::size_t h = 0; h < n.size(); ++h) a.capped[h] = n[h] >= static_cast<int>(std::floor(strata[h].N));
    a.variance = stratified_total_variance(strata, n);
    a.n = std::move(n);
    return a;
}

/// Real shares ∝ weight with iterative capping at N_h.
std::vector<double> capped_shares(std::span<const StratumInfo> strata, std::span<const double> weight, double n) {
    const std::size_t H = strata.size();
    std::vector<double> share(H, 0.0);
    std::vector<bool> fixed(H, false);
    double remaining = n;
    while (true) {
        double total = 0.0;
        for (std::size_t h = 0; h < H; ++h)
            if (!fixed[h]) total += weight[h];
        bool changed = false;
        for (std::size_t h = 0; h < H; ++h) {
            if (fixed[h]) continue;
            share[h] = total > 0.0 ? remaining * weight[h] / total : 0.0;
        }
        for (std::size_t h = 0; h < H; ++h) {
            if (!fixed[h] && share[h] > strata[h].N) {
                fixed[h] = true;
                share[h] = strata[h].N;
                remaining -= strata[h].N;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return share;
}

}  // namespace

double stratified_total_variance(std::span<const StratumInfo> strata, std::span<const int> n) {
    double v = 0.0;
    for (std::size_t h = 0; h < strata.size(); ++h) {
        if (n[h] <= 0) return std::numeric_limits<double>::infinity();
        const double N = strata[h].N;
        v += N * N / n[h] * (1.0 - n[h] / N) * strata[h].S * strata[h].S;
    }
    return v;
}

std::vector<int> largest_remainder(std::span<const double> shares, int total, std::span<const int> lower,
                                   std::span<const int> upper) {
    const std::size_t H = shares.size();
    std::vector<int> n(H);
    long sum = 0;
    for (std::size_t h = 0; h < H; ++h) {
        n[h] = std::clamp(static_cast<int>(std::floor(shares[h] + 1e-9)), lower[h], upper[h]);
        sum += n[h];
    }
    while (sum < total) {
        std::size_t best = H;
        for (std::size_t h = 0; h < H; ++h)
            if (n[h] < upper[h] && (best == H || shares[h] - n[h] > shares[best] - n[best])) best = h;
        if (best == H) throw DataError("allocation infeasible under stratum caps");
        ++n[best];
        ++sum;
    }
    while (sum > total) {
        std::size_t best = H;
        for (std::size_t h = 0; h < H; ++h)
            if (n[h] > lower[h] && (best == H || shares[h] - n[h] < shares[best] - n[best])) best = h;
        if (best == H) throw DataError("allocation infeasible under stratum minimums");
        --n[best];
        --sum;
    }
    return n;
}

Allocation proportional_allocation(std::span<const StratumInfo> strata, int n) {
    check_strata(strata);
    check_total(strata, n);
    const std::size_t H = strata.size();
    const auto upper = caps(strata);
    std::vector<int> alloc(H, 1);
    using Entry = std::pair<double, std::size_t>;
    auto cmp = [](const Entry& a, const Entry& b) {
        return a.first < b.first || (a.first == b.first && a.second > b.second);
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> queue(cmp);
    auto priority = [&](std::size_t h) {
        const double s = alloc[h];
        return strata[h].N / std::sqrt(s * (s + 1.0));
    };
    for (std::size_t h = 0; h < H; ++h)
        if (alloc[h] < upper[h]) queue.emplace(priority(h), h);
    for (int seats = static_cast<int>(H); seats < n; ++seats) {
        const auto [p, h] = queue.top();
        queue.pop();
        ++alloc[h];
        if (alloc[h] < upper[h]) queue.emplace(priority(h), h);
    }
    return finish(strata, std::move(alloc));
}

Allocation optimal_allocation(std::span<const StratumInfo> strata, int n, AllocationTarget target) {
    check_strata(strata);
    check_total(strata, n);
    const std::size_t H = strata.size();
    std::vector<double> weight(H);
    bool any = false;
    for (std::size_t h = 0; h < H; ++h) {
        const double q = target == AllocationTarget::total ? strata[h].N * strata[h].S : strata[h].S;
        weight[h] = q / std::sqrt(strata[h].cost);
        any = any || weight[h] > 0.0;
    }
    if (!any) throw DataError("optimal allocation undefined: all S_h are zero");
    // every stratum keeps one unit; the remainder follows the optimal shares
    const auto share = capped_shares(strata, weight, n);
    const std::vector<int> lower(H, 1);
    return finish(strata, largest_remainder(share, n, lower, caps(strata)));
}

Allocation optimal_allocation_for_budget(std::span<const StratumInfo> strata, double budget, double fixed_cost,
                                         AllocationTarget target) {
    check_strata(strata);
    const std::size_t H = strata.size();
    double denom = 0.0;
    for (const auto& h : strata) denom += (target == AllocationTarget::total ? h.N * h.S : h.S) * std::sqrt(h.cost);
    if (!(denom > 0.0)) throw DataError("optimal allocation undefined: all S_h are zero");
    const double spend = budget - fixed_cost;
    if (!(spend > 0.0)) throw DataError("budget does not exceed the fixed cost");
    // Σ c_h n_h = spend with n_h ∝ q_h/√c_h
    std::vector<double> share(H);
    for (std::size_t h = 0; h < H; ++h) {
        const double q = target == AllocationTarget::total ? strata[h].N * strata[h].S : strata[h].S;
        share[h] = spend * q / std::sqrt(strata[h].cost) / denom;
    }
    std::vector<int> alloc(H);
    for (std::size_t h = 0; h < H; ++h)
        alloc[h] = std::clamp(static_cast<int>(std::floor(share[h] + 1e-9)), 1, static_cast<int>(strata[h].N));
    return finish(strata, std::move(alloc));
}

Allocation power_allocation(std::span<const StratumInfo> strata, double alpha, int n) {
    check_strata(strata);
    check_total(strata, n);
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("power allocation needs 0 < α < 1");
    const std::size_t H = strata.size();
    std::vector<double> weight(H);
    for (std::size_t h = 0; h < H; ++h) weight[h] = std::pow(strata[h].N, alpha);
    const auto share = capped_shares(strata, weight, n);
    const std::vector<int> lower(H, 1);
    return finish(strata, largest_remainder(share, n, lower, caps(strata)));
}

SubsampleSize cluster_subsample_size(double c1, double c2, double Sb2, double Sw2, double M) {
    if (!(c1 > 0.0 && c2 > 0.0 && M >= 1.0)) throw DataError("cluster subsample size: invalid costs or M");
    if (Sb2 <= Sw2) return {M, true};
    const double m = std::sqrt(c1 / c2 * M * Sw2 / (Sb2 - Sw2));
    if (m >= M) return {M, true};
    return {m, false};
}

double cluster_subsample_size_icc(double c1, double c2, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw DataError("cluster subsample size: ρ must be in (0,1]");
    return std::sqrt(c1 / c2 * (1.0 / rho - 1.0));
}

TwoPhaseStratRates two_phase_strat_rates(double c1, std::span<const double> c2h, std::span<const double> W,
                                         std::span<const double> S2h, double S2, std::optional<double> budget) {
    const std::size_t H = W.size();
    if (c2h.size() != H || S2h.size() != H) throw DataError("two-phase rates: inconsistent stratum vectors");
    double within = 0.0;
    for (std::size_t h = 0; h < H; ++h) within += W[h] * S2h[h];
    const double between = S2 - within;
    if (!(between > 0.0)) throw DataError("two-phase rates: φ ≤ 1, stratification gains nothing");
    TwoPhaseStratRates out;
    out.nu.resize(H);
    out.r_over_n.resize(H);
    out.capped.assign(H, false);
    for (std::size_t h = 0; h < H; ++h) {
        double nu = std::sqrt(c1 / c2h[h] * S2h[h] / between);
        if (nu > 1.0) {
            nu = 1.0;
            out.capped[h] = true;
        }
        out.nu[h] = nu;
        out.r_over_n[h] = W[h] * nu;
    }
    if (budget) {
        double unit = c1;
        for (std::size_t h = 0; h < H; ++h) unit += c2h[h] * W[h] * out.nu[h];
        out.n = *budget / unit;
        for (std::size_t h = 0; h < H; ++h) out.r.push_back(*out.n * out.r_over_n[h]);
    }
    return out;
}

double two_phase_homogeneous_ratio(double c1, double c2, double phi) {
    if (!(phi > 1.0)) throw DataError("two-phase ratio: φ ≤ 1, stratification gains nothing");
    return std::sqrt(c1 / c2 / (phi - 1.0));
}

TwoPhaseRegPlan two_phase_reg_rate(double c1, double c2, double S_ee, double BSB, double budget, double fixed_cost) {
    if (!(c1 > 0.0 && c2 > 0.0)) throw DataError("two-phase regression: costs must be positive");
    if (budget < fixed_cost + c1 + c2) throw DataError("two-phase regression: budget below c0 + c1 + c2");
    if (S_ee < 0.0 || BSB < 0.0) throw DataError("two-phase regression: variances must be nonnegative");
    TwoPhaseRegPlan plan;
    const double spend = budget - fixed_cost;
    if (BSB <= 0.0) {
        // x carries no information: spend everything on y
        plan.all_to_y = true;
        plan.nu = 1.0;
        plan.r = static_cast<long>(std::floor(spend / (c1 + c2)));
        plan.n = plan.r;
        plan.n_continuous = spend / (c1 + c2);
        plan.variance = S_ee / static_cast<double>(plan.r);
        plan.direct_cost = c2 * (S_ee + BSB) / plan.variance;
        return plan;
    }
    plan.nu = std::min(1.0, std::sqrt(c1 / c2 * S_ee / BSB));
    plan.n_continuous = spend / (c1 + c2 * plan.nu);
    plan.r = std::max(1L, std::lround(plan.nu * plan.n_continuous));
    plan.n = static_cast<long>(std::floor((spend - c2 * static_cast<double>(plan.r)) / c1 + 1e-9));
    plan.variance = BSB / static_cast<double>(plan.n) + S_ee / static_cast<double>(plan.r);
    plan.direct_cost = c2 * (S_ee + BSB) / plan.variance;
    return plan;
}

RepeatedSurveySplit repeated_survey_fractions(double rho) {
    if (!(std::abs(rho) <= 1.0)) throw DataError("repeated survey: |ρ| must be at most 1");
    const double root = std::sqrt(1.0 - rho * rho);
    RepeatedSurveySplit s;
    s.unmatched = 1.0 / (1.0 + root);
    s.matched = 1.0 - s.unmatched;
    s.variance_factor = (1.0 + root) / 2.0;
    return s;
}

CallbackRate callback_rate(double c0, double c1, double W1, double c2, double S2, double W2, double S2_2) {
    if (!(c2 > 0.0)) throw DataError("callback rate: c2 must be positive");
    const double denom = S2 - W2 * S2_2;
    if (!(denom > 0.0)) throw DataError("callback rate: need S² > W_2 S_2²");
    CallbackRate out;
    out.nu = std::sqrt((c0 + c1 * W1) / c2 * S2_2 / denom);
    if (out.nu > 1.0) {
        out.nu = 1.0;
        out.capped = true;
    }
    return out;
}

// ------------------------------------------------------------ boundaries

std::vector<int> assign_strata(std::span<const double> values, std::span<const double> boundaries) {
    std::vector<int> h(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        h[i] = static_cast<int>(std::lower_bound(boundaries.begin(), boundaries.end(), values[i]) - boundaries.begin());
    return h;
}

namespace {

struct Moments {
    double n = 0.0, sum = 0.0, sumsq = 0.0;
    double sd() const {
        if (n < 2.0) return 0.0;
        const double v = (sumsq - sum * sum / n) / (n - 1.0);
        return v > 0.0 ? std::sqrt(v) : 0.0;
    }
    double ss() const { return n > 0.0 ? std::max(0.0, sumsq - sum * sum / n) : 0.0; }
};

/// Prefix sums over sorted values for O(1) stratum moments.
struct Prefix {
    std::vector<double> s, q;
    explicit Prefix(std::span<const double> sorted) : s(sorted.size() + 1, 0.0), q(sorted.size() + 1, 0.0) {
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            s[i + 1] = s[i] + sorted[i];
            q[i + 1] = q[i] + sorted[i] * sorted[i];
        }
    }
    Moments range(std::size_t a, std::size_t b) const {
        return {static_cast<double>(b - a), s[b] - s[a], q[b] - q[a]};
    }
};

/// Σ N_h S_h where cuts[h] is the end position (exclusive) of stratum h in sorted order.
double cut_objective(const Prefix& p, std::span<const std::size_t> ends) {
    double total = 0.0;
    std::size_t start = 0;
    for (auto e : ends) {
        const auto m = p.range(start, e);
        total += m.n * m.sd();
        start = e;
    }
    return total;
}

std::vector<double> cuts_to_values(std::span<const double> sorted, std::span<const std::size_t> ends) {
    std::vector<double> b;
    for (std::size_t h = 0; h + 1 < ends.size(); ++h) b.push_back(sorted[ends[h] - 1]);
    return b;
}

}  // namespace

double boundary_objective(std::span<const double> values, std::span<const double> boundaries) {
    const auto h = assign_strata(values, boundaries);
    std::vector<Moments> m(boundaries.size() + 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto& s = m[h[i]];
        s.n += 1.0;
        s.sum += values[i];
        s.sumsq += values[i] * values[i];
    }
    double total = 0.0;
    for (const auto& s : m) total += s.n * s.sd();
    return total;
}

std::vector<double> stratum_boundaries(std::span<const double> values, int H, BoundaryMethod method,
                                       const BoundaryOptions& options) {
    if (H < 2) throw DataError("stratum boundaries need H ≥ 2");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    std::set<double> distinct(sorted.begin(), sorted.end());
    if (static_cast<std::size_t>(H) > distinct.size())
        throw DataError("H exceeds the number of distinct values");
    const std::vector<double> levels(distinct.begin(), distinct.end());
    const std::size_t N = sorted.size();
    // end position (exclusive) in sorted order of all values ≤ levels[k]
    std::vector<std::size_t> level_end(levels.size());
    for (std::size_t k = 0; k < levels.size(); ++k)
        level_end[k] = std::upper_bound(sorted.begin(), sorted.end(), levels[k]) - sorted.begin();

    switch (method) {
        case BoundaryMethod::dalenius_hodges: {
            const int L = options.bins > 0 ? options.bins : std::max(50, 10 * H);
            if (L <= 2 * H) throw DataError("Dalenius-Hodges needs more than 2H bins");
            const double lo = sorted.front(), hi = sorted.back();
            const double width = (hi - lo) / L;
            std::vector<double> freq(L, 0.0);
            for (double v : sorted) {
                int b = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
                freq[std::min(b, L - 1)] += 1.0;
            }
            std::vector<double> cum(L);
            double acc = 0.0;
            for (int b = 0; b < L; ++b) cum[b] = acc += std::sqrt(freq[b]);
            std::vector<double> bounds;
            int prev = -1;
            for (int h = 1; h < H; ++h) {
                const double target = acc * h / H;
                int best = prev + 1;
                for (int b = prev + 1; b < L - 1; ++b)
                    if (std::abs(cum[b] - target) < std::abs(cum[best] - target)) best = b;
                bounds.push_back(lo + width * (best + 1));
                prev = best;
            }
            return bounds;
        }
        case BoundaryMethod::sequential: {
            const Prefix prefix(sorted);
            // equal-width start on the value range, snapped to distinct levels
            std::vector<std::size_t> cut(H - 1);  // index into levels of each stratum's last level
            const double lo = levels.front(), hi = levels.back();
            for (int h = 0; h < H - 1; ++h) {
                const double t = lo + (hi - lo) * (h + 1) / H;
                std::size_t k = std::upper_bound(levels.begin(), levels.end(), t) - levels.begin();
                k = k == 0 ? 0 : k - 1;
                const std::size_t min_k = h == 0 ? 0 : cut[h - 1] + 1;
                const std::size_t max_k = levels.size() - static_cast<std::size_t>(H - h);
                cut[h] = std::clamp(k, min_k, max_k);
            }
            auto ends_of = [&](const std::vector<std::size_t>& c) {
                std::vector<std::size_t> ends;
                for (auto k : c) ends.push_back(level_end[k]);
                ends.push_back(N);
                return ends;
            };
            double current = cut_objective(prefix, ends_of(cut));
            for (int iter = 0; iter < 100000; ++iter) {
                const auto ends = ends_of(cut);
                std::size_t worst = 0, start = 0;
                double worst_q = -1.0;
                for (std::size_t h = 0; h < ends.size(); ++h) {
                    const auto m = prefix.range(start, ends[h]);
                    if (m.n * m.sd() > worst_q) {
                        worst_q = m.n * m.sd();
                        worst = h;
                    }
                    start = ends[h];
                }
                auto trial = cut;
                if (worst + 1 < static_cast<std::size_t>(H)) {
                    // shrink from the right
                    const std::size_t min_k = worst == 0 ? 0 : cut[worst - 1] + 1;
                    if (trial[worst] == min_k) break;
                    --trial[worst];
                } else {
                    // last stratum: shrink from the left
                    const std::size_t max_k = levels.size() - 2;
                    if (trial[worst - 1] >= max_k) break;
                    ++trial[worst - 1];
                }
                const double value = cut_objective(prefix, ends_of(trial));
                if (!(value < current)) break;
                current = value;
                cut = std::move(trial);
            }
            std::vector<double> bounds;
            for (auto k : cut) bounds.push_back(levels[k]);
            return bounds;
        }
        case BoundaryMethod::kmeans: {
            const Prefix prefix(sorted);
            RngStream rng(options.seed, 0x6b6d65616e73ULL);
            std::vector<std::size_t> best_ends;
            double best_ss = std::numeric_limits<double>::infinity();
            for (int restart = 0; restart < std::max(1, options.kmeans_restarts); ++restart) {
                // distinct random levels as initial centres
                std::vector<std::size_t> pick(levels.size());
                std::iota(pick.begin(), pick.end(), 0);
                for (int j = 0; j < H; ++j) std::swap(pick[j], pick[j + rng.below(pick.size() - j)]);
                std::vector<double> centre(H);
                for (int j = 0; j < H; ++j) centre[j] = levels[pick[j]];
                std::sort(centre.begin(), centre.end());
                std::vector<std::size_t> ends(H, N);
                for (int iter = 0; iter < 1000; ++iter) {
                    std::vector<std::size_t> next(H);
                    for (int j = 0; j + 1 < H; ++j) {
                        const double mid = 0.5 * (centre[j] + centre[j + 1]);
                        next[j] = std::upper_bound(sorted.begin(), sorted.end(), mid) - sorted.begin();
                    }
                    next[H - 1] = N;
                    bool empty = false;
                    std::size_t start = 0;
                    for (int j = 0; j < H; ++j) {
                        if (next[j] <= start) empty = true;
                        start = std::max(start, next[j]);
                    }
                    if (empty) break;
                    start = 0;
                    for (int j = 0; j < H; ++j) {
                        const auto m = prefix.range(start, next[j]);
                        centre[j] = m.sum / m.n;
                        start = next[j];
                    }
                    if (next == ends) break;
                    ends = std::move(next);
                }
                bool valid = ends.back() == N;
                std::size_t start = 0;
                double ss = 0.0;
                for (int j = 0; j < H && valid; ++j) {
                    if (ends[j] <= start) {
                        valid = false;
                        break;
                    }
                    ss += prefix.range(start, ends[j]).ss();
                    start = ends[j];
                }
                if (valid && ss < best_ss) {
                    best_ss = ss;
                    best_ends = ends;
                }
            }
            if (best_ends.empty()) throw NumericalError("k-means found no partition with H nonempty strata");
            return cuts_to_values(sorted, best_ends);
        }
    }
    return {};
}

}  // namespace survey
