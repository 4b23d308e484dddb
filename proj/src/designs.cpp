#include "survey/designs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace survey {

namespace {

void check_size(const Frame& frame, int n) {
    if (n <= 0) throw DataError("sample size must be positive");
    if (static_cast<std::size_t>(n) > frame.size())
        throw DataError("sample size " + std::to_string(n) + " exceeds population size " +
                        std::to_string(frame.size()));
}

Sample make_wor(std::string tag, std::vector<std::size_t> idx, std::span<const double> pi) {
    std::sort(idx.begin(), idx.end());
    Sample s;
    s.design_tag = std::move(tag);
    s.units.reserve(idx.size());
    for (auto i : idx) s.units.push_back(Selection{.unit = i, .pi = pi[i]});
    return s;
}

Sample make_wor_const(std::string tag, std::vector<std::size_t> idx, double pi) {
    std::sort(idx.begin(), idx.end());
    Sample s;
    s.design_tag = std::move(tag);
    s.units.reserve(idx.size());
    for (auto i : idx) s.units.push_back(Selection{.unit = i, .pi = pi});
    return s;
}

Sample make_wr(std::string tag, const std::vector<std::size_t>& draws, std::span<const double> p) {
    std::vector<int> count(p.size(), 0);
    for (auto i : draws) ++count[i];
    Sample s;
    s.design_tag = std::move(tag);
    s.with_replacement = true;
    s.draws = static_cast<int>(draws.size());
    for (std::size_t i = 0; i < count.size(); ++i)
        if (count[i] > 0)
            s.units.push_back(
                Selection{.unit = i, .multiplicity = count[i], .pi = p[i], .draws = s.draws});
    return s;
}

std::size_t pick(std::span<const double> prob, double u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        acc += prob[i];
        if (u < acc && prob[i] > 0.0) return i;
    }
    for (std::size_t i = prob.size(); i-- > 0;)
        if (prob[i] > 0.0) return i;
    throw DataError("no positive selection probability");
}

std::vector<double> normalized_p(std::span<const double> pi) {
    const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
    if (std::abs(total - 2.0) > 1e-9) throw DataError("n=2 πps methods need Σπ = 2");
    std::vector<double> p(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) {
        p[i] = pi[i] / 2.0;
        if (!(p[i] >= 0.0) || p[i] >= 0.5)
            throw DataError("n=2 πps methods need p_i < 1/2 (unit " + std::to_string(i + 1) + ")");
    }
    return p;
}

// Elementary symmetric polynomials e_0..e_n of w, skipping up to two indices.
std::vector<long double> esp(std::span<const long double> w, int n, std::size_t skip1 = SIZE_MAX,
                             std::size_t skip2 = SIZE_MAX) {
    std::vector<long double> e(n + 1, 0.0L);
    e[0] = 1.0L;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i == skip1 || i == skip2) continue;
        for (int k = n; k >= 1; --k) e[k] += w[i] * e[k - 1];
    }
    return e;
}

std::vector<long double> odds(std::span<const double> working) {
    std::vector<long double> w(working.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(working[i] > 0.0 && working[i] < 1.0))
            throw DataError("rejective working probabilities must lie in (0,1)");
        w[i] = static_cast<long double>(working[i]) / (1.0L - working[i]);
    }
    return w;
}

}  // namespace

Sample select_srs(const Frame& frame, int n, SrsMethod method, RngStream& rng) {
    check_size(frame, n);
    const std::size_t N = frame.size();
    const double pi = static_cast<double>(n) / static_cast<double>(N);
    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    switch (method) {
        case SrsMethod::draw_by_draw: {
            std::vector<std::size_t> remaining(N);
            std::iota(remaining.begin(), remaining.end(), 0);
            for (int k = 0; k < n; ++k) {
                const auto j = rng.below(remaining.size());
                chosen.push_back(remaining[j]);
                remaining[j] = remaining.back();
                remaining.pop_back();
            }
            break;
        }
        case SrsMethod::selection_rejection: {
            std::size_t taken = 0;
            for (std::size_t k = 0; k < N && taken < static_cast<std::size_t>(n); ++k) {
                const double p = static_cast<double>(n - taken) / static_cast<double>(N - k);
                if (rng.uniform() < p) {
                    chosen.push_back(k);
                    ++taken;
                }
            }
            break;
        }
        case SrsMethod::reservoir: {
            Reservoir<std::size_t> res(n, rng);
            for (std::size_t k = 0; k < N; ++k) res.push(k);
            chosen = res.items();
            break;
        }
        case SrsMethod::random_sort: {
            std::vector<std::pair<double, std::size_t>> keys(N);
            for (std::size_t k = 0; k < N; ++k) keys[k] = {rng.uniform(), k};
            std::partial_sort(keys.begin(), keys.begin() + n, keys.end(),
                              [](const auto& a, const auto& b) { return a.first > b.first; });
            for (int k = 0; k < n; ++k) chosen.push_back(keys[k].second);
            break;
        }
    }
    return make_wor_const("srs", std::move(chosen), pi);
}

Sample select_srswr(const Frame& frame, int n, RngStream& rng) {
    if (frame.empty()) throw DataError("empty frame");
    if (n <= 0) throw DataError("sample size must be positive");
    std::vector<std::size_t> draws(n);
    for (auto& d : draws) d = rng.below(frame.size());
    std::vector<double> p(frame.size(), 1.0 / static_cast<double>(frame.size()));
    return make_wr("srswr", draws, p);
}

Sample select_bernoulli(const Frame& frame, double pi, RngStream& rng) {
    std::vector<double> p(frame.size(), pi);
    Sample s = select_poisson(frame, p, rng);
    s.design_tag = "bernoulli";
    return s;
}

Sample select_poisson(const Frame& frame, std::span<const double> pi, RngStream& rng) {
    if (pi.size() != frame.size()) throw DataError("Poisson: π vector length differs from frame");
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (!(pi[i] > 0.0 && pi[i] <= 1.0))
            throw DataError("Poisson: π for unit '" + frame[i].id + "' outside (0,1]");
        if (rng.uniform() < pi[i]) chosen.push_back(i);
    }
    return make_wor("poisson", std::move(chosen), pi);
}

SystematicPlan systematic_plan(std::size_t N, int n) {
    if (n <= 0) throw DataError("sample size must be positive");
    if (static_cast<std::size_t>(n) >= N) throw DataError("systematic sampling needs n < N");
    SystematicPlan plan;
    plan.interval = N / static_cast<std::size_t>(n);
    plan.remainder = N - plan.interval * static_cast<std::size_t>(n);
    return plan;
}

std::vector<std::size_t> systematic_from_start(std::size_t N, std::size_t interval, std::size_t start) {
    if (start < 1 || start > interval) throw DataError("systematic start outside 1..G");
    std::vector<std::size_t> out;
    for (std::size_t k = start - 1; k < N; k += interval) out.push_back(k);
    return out;
}

Sample select_systematic(const Frame& frame, int n, RngStream& rng) {
    const auto plan = systematic_plan(frame.size(), n);
    const std::size_t start = 1 + rng.below(plan.interval);
    return make_wor_const("systematic", systematic_from_start(frame.size(), plan.interval, start),
                          1.0 / static_cast<double>(plan.interval));
}

std::vector<double> compute_pips(std::span<const double> mos, int n) {
    if (n <= 0) throw DataError("sample size must be positive");
    std::size_t positive = 0;
    for (double x : mos) {
        if (!(x >= 0.0)) throw DataError("mos must be nonnegative");
        if (x > 0.0) ++positive;
    }
    if (positive < static_cast<std::size_t>(n))
        throw DataError("fewer than n units with positive mos");
    std::vector<double> pi(mos.size(), 0.0);
    std::vector<bool> certain(mos.size(), false);
    int remaining = n;
    while (true) {
        double total = 0.0;
        for (std::size_t i = 0; i < mos.size(); ++i)
            if (!certain[i]) total += mos[i];
        bool capped = false;
        for (std::size_t i = 0; i < mos.size(); ++i) {
            if (certain[i]) continue;
            pi[i] = remaining * mos[i] / total;
            if (pi[i] >= 1.0) {
                certain[i] = true;
                pi[i] = 1.0;
                capped = true;
            }
        }
        if (!capped) break;
        remaining = n - static_cast<int>(std::count(certain.begin(), certain.end(), true));
        if (remaining == 0) {
            for (std::size_t i = 0; i < mos.size(); ++i)
                if (!certain[i]) pi[i] = 0.0;
            break;
        }
    }
    return pi;
}

Sample select_pps_wr(const Frame& frame, std::span<const double> mos, int n, PpsMethod method,
                     RngStream& rng, double lahiri_bound) {
    if (mos.size() != frame.size()) throw DataError("PPS: mos length differs from frame");
    if (n <= 0) throw DataError("sample size must be positive");
    std::vector<double> cum(mos.size());
    double total = 0.0, max_x = 0.0;
    for (std::size_t i = 0; i < mos.size(); ++i) {
        if (!(mos[i] >= 0.0)) throw DataError("mos must be nonnegative");
        total += mos[i];
        cum[i] = total;
        max_x = std::max(max_x, mos[i]);
    }
    if (!(total > 0.0)) throw DataError("PPS: all mos are zero");
    std::vector<double> p(mos.size());
    for (std::size_t i = 0; i < mos.size(); ++i) p[i] = mos[i] / total;

    std::vector<std::size_t> draws(n);
    if (method == PpsMethod::cumulative) {
        for (auto& d : draws) {
            const double u = rng.uniform() * total;
            d = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
            if (d >= cum.size()) d = cum.size() - 1;
            while (mos[d] <= 0.0) --d;
        }
    } else {
        const double bound = lahiri_bound > 0.0 ? lahiri_bound : std::nextafter(max_x, INFINITY);
        if (!(bound > max_x)) throw DataError("Lahiri: bound M must exceed max mos");
        for (auto& d : draws) {
            while (true) {
                const std::size_t i = rng.below(mos.size());
                if (rng.uniform() * bound < mos[i]) {
                    d = i;
                    break;
                }
            }
        }
    }
    return make_wr(method == PpsMethod::cumulative ? "ppswr_cumulative" : "ppswr_lahiri", draws, p);
}

std::vector<double> brewer_first_draw(std::span<const double> p) {
    std::vector<double> theta(p.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        theta[i] = p[i] * (1.0 - p[i]) / (1.0 - 2.0 * p[i]);
        total += theta[i];
    }
    for (auto& t : theta) t /= total;
    return theta;
}

std::vector<double> brewer_joint(std::span<const double> p) {
    const std::size_t N = p.size();
    double K = 0.0;
    for (double pi : p) K += pi / (1.0 - 2.0 * pi);
    std::vector<double> joint(N * N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        joint[i * N + i] = 2.0 * p[i];
        for (std::size_t j = 0; j < N; ++j)
            if (i != j)
                joint[i * N + j] = 2.0 * p[i] * p[j] / (1.0 + K) *
                                   (1.0 / (1.0 - 2.0 * p[i]) + 1.0 / (1.0 - 2.0 * p[j]));
    }
    return joint;
}

namespace {

std::vector<double> durbin_second(std::span<const double> p, std::size_t i) {
    std::vector<double> q(p.size(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (j == i) continue;
        q[j] = p[j] * (1.0 / (1.0 - 2.0 * p[i]) + 1.0 / (1.0 - 2.0 * p[j]));
        total += q[j];
    }
    for (auto& v : q) v /= total;
    return q;
}

std::vector<double> brewer_second(std::span<const double> p, std::size_t i) {
    std::vector<double> q(p.size(), 0.0);
    for (std::size_t j = 0; j < p.size(); ++j)
        if (j != i) q[j] = p[j] / (1.0 - p[i]);
    return q;
}

template <class Second>
std::vector<double> pair_probs(std::span<const double> p, std::span<const double> first, Second second) {
    const std::size_t N = p.size();
    std::vector<double> out(N * N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const auto q = second(p, i);
        for (std::size_t j = 0; j < N; ++j)
            if (j != i) {
                out[std::min(i, j) * N + std::max(i, j)] += first[i] * q[j];
            }
    }
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < i; ++j) out[i * N + j] = out[j * N + i];
    return out;
}

}  // namespace

std::vector<double> brewer_pair_probs(std::span<const double> p) {
    const auto theta = brewer_first_draw(p);
    return pair_probs(p, theta, brewer_second);
}

std::vector<double> durbin_pair_probs(std::span<const double> p) {
    return pair_probs(p, p, durbin_second);
}

std::vector<double> chao_pips(std::span<const double> x, int n) {
    if (n <= 0 || static_cast<std::size_t>(n) > x.size()) throw DataError("Chao: invalid sample size");
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    if (!(total > 0.0)) throw DataError("Chao: all sizes are zero");
    double running = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        running += x[k];
        if (k >= static_cast<std::size_t>(n) && running > 0.0 && n * x[k] / running > 1.0 + 1e-12)
            throw DataError("Chao: unit " + std::to_string(k + 1) + " would be a certainty unit");
    }
    const double head = std::accumulate(x.begin(), x.begin() + n, 0.0);
    std::vector<double> pi(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
        pi[k] = k < static_cast<std::size_t>(n) ? head / total : n * x[k] / total;
    return pi;
}

std::vector<double> rejective_marginals(std::span<const double> working, int n) {
    const auto w = odds(working);
    if (n <= 0 || static_cast<std::size_t>(n) > w.size()) throw DataError("rejective: invalid n");
    const long double en = esp(w, n)[n];
    std::vector<double> pi(w.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        pi[i] = static_cast<double>(w[i] * esp(w, n - 1, i)[n - 1] / en);
    return pi;
}

std::vector<double> rejective_joint(std::span<const double> working, int n) {
    const auto w = odds(working);
    const std::size_t N = w.size();
    if (n <= 0 || static_cast<std::size_t>(n) > N) throw DataError("rejective: invalid n");
    const long double en = esp(w, n)[n];
    std::vector<double> joint(N * N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        joint[i * N + i] = static_cast<double>(w[i] * esp(w, n - 1, i)[n - 1] / en);
        if (n < 2) continue;
        for (std::size_t j = i + 1; j < N; ++j) {
            const double v = static_cast<double>(w[i] * w[j] * esp(w, n - 2, i, j)[n - 2] / en);
            joint[i * N + j] = joint[j * N + i] = v;
        }
    }
    return joint;
}

std::vector<double> rejective_working_probs(std::span<const double> target, int n, double tol, int max_iter) {
    const double total = std::accumulate(target.begin(), target.end(), 0.0);
    if (std::abs(total - n) > 1e-9) throw DataError("rejective: target π must sum to n");
    std::vector<double> working(target.begin(), target.end());
    auto logit = [](double p) { return std::log(p / (1.0 - p)); };
    auto expit = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
    for (int it = 0; it < max_iter; ++it) {
        const auto marg = rejective_marginals(working, n);
        double gap = 0.0;
        for (std::size_t i = 0; i < working.size(); ++i) {
            gap = std::max(gap, std::abs(marg[i] - target[i]));
            working[i] = expit(logit(working[i]) + logit(target[i]) - logit(marg[i]));
        }
        if (gap < tol) return working;
    }
    throw NumericalError("rejective: working-probability fixed point did not converge");
}

Sample select_rejective(const Frame& frame, std::span<const double> working, int n, RngStream& rng) {
    if (working.size() != frame.size()) throw DataError("rejective: π vector length differs from frame");
    thread_local std::vector<double> last_working, marg;
    thread_local int last_n = -1;
    if (last_n != n || !std::equal(working.begin(), working.end(), last_working.begin(), last_working.end())) {
        marg = rejective_marginals(working, n);
        last_working.assign(working.begin(), working.end());
        last_n = n;
    }
    std::vector<std::size_t> chosen;
    for (int attempt = 0; attempt < 10'000'000; ++attempt) {
        chosen.clear();
        for (std::size_t k = 0; k < working.size(); ++k)
            if (rng.uniform() < working[k]) chosen.push_back(k);
        if (chosen.size() == static_cast<std::size_t>(n)) {
            Sample s = make_wor("rejective_poisson", chosen, marg);
            s.flags.push_back("approximate_pi");
            return s;
        }
    }
    throw NumericalError("rejective sampling: acceptance too rare");
}

Sample select_pips(const Frame& frame, std::span<const double> pi, PipsMethod method, RngStream& rng) {
    if (pi.size() != frame.size()) throw DataError("πps: π vector length differs from frame");
    const std::size_t N = pi.size();
    std::vector<std::size_t> chosen;
    switch (method) {
        case PipsMethod::brewer2:
        case PipsMethod::durbin2: {
            const auto p = normalized_p(pi);
            std::size_t i, j;
            if (method == PipsMethod::brewer2) {
                i = pick(brewer_first_draw(p), rng.uniform());
                j = pick(brewer_second(p, i), rng.uniform());
            } else {
                i = pick(p, rng.uniform());
                j = pick(durbin_second(p, i), rng.uniform());
            }
            chosen = {i, j};
            std::vector<double> incl(N);
            for (std::size_t k = 0; k < N; ++k) incl[k] = 2.0 * p[k];
            return make_wor(method == PipsMethod::brewer2 ? "brewer2" : "durbin2", chosen, incl);
        }
        case PipsMethod::systematic_pips: {
            const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
            const long n = std::lround(total);
            if (std::abs(total - n) > 1e-9 || n <= 0) throw DataError("systematic πps: Σπ must be an integer n");
            for (std::size_t k = 0; k < N; ++k)
                if (pi[k] > 1.0 + 1e-12 || pi[k] < 0.0)
                    throw DataError("systematic πps: π outside [0,1]; extract certainty units first");
            std::vector<double> upper(N);
            std::partial_sum(pi.begin(), pi.end(), upper.begin());
            const double R = rng.uniform_open_closed();
            for (long l = 0; l < n; ++l) {
                const double t = R + static_cast<double>(l);
                // unit k with L_k < t <= U_k
                auto it = std::lower_bound(upper.begin(), upper.end(), t);
                std::size_t k = std::min<std::size_t>(it - upper.begin(), N - 1);
                chosen.push_back(k);
            }
            return make_wor("systematic_pips", chosen, pi);
        }
        case PipsMethod::chao: {
            double total = 0.0;
            for (double v : pi) total += v;
            const int n = static_cast<int>(std::lround(total));
            ChaoSampler<std::size_t> sampler(n, rng);
            for (std::size_t k = 0; k < N; ++k) sampler.push(k, pi[k]);
            const auto incl = chao_pips(pi, n);
            return make_wor("chao", sampler.items(), incl);
        }
        case PipsMethod::rejective_poisson: {
            const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
            return select_rejective(frame, pi, static_cast<int>(std::lround(total)), rng);
        }
    }
    throw DataError("unknown πps method");
}

}  // namespace survey
