#include "survey/variance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "linalg.hpp"
#include "survey/error.hpp"

namespace survey {

namespace {

void check_aligned(const Sample& sample, std::span<const double> y) {
    if (y.size() != sample.size())
        throw DataError("values (" + std::to_string(y.size()) + ") do not match sample size (" +
                        std::to_string(sample.size()) + ")");
}

/// PSU identity: (stratum, psu). Units without a psu label are their own PSU.
using PsuKey = std::pair<int, long>;

PsuKey psu_key(const Sample& sample, std::size_t k) {
    const auto& s = sample.units[k];
    const long psu = s.psu >= 0 ? s.psu : -1 - static_cast<long>(s.unit);
    return {s.stratum, psu};
}

/// Stratum → list of PSU totals (with-replacement draws expanded).
std::map<int, std::vector<double>> psu_totals(const Sample& sample, std::span<const double> z) {
    std::map<PsuKey, std::pair<double, int>> by_psu;  // total per copy, copies
    for (std::size_t k = 0; k < sample.size(); ++k) {
        const int m = std::max(1, sample.units[k].multiplicity);
        auto& entry = by_psu[psu_key(sample, k)];
        entry.first += sample.weight(k) / m * z[k];
        entry.second = std::max(entry.second, m);
    }
    std::map<int, std::vector<double>> out;
    for (const auto& [key, entry] : by_psu)
        for (int c = 0; c < entry.second; ++c) out[key.first].push_back(entry.first);
    return out;
}

/// PSUs per stratum in key order with the sample positions they hold.
std::map<int, std::vector<std::vector<std::size_t>>> psu_members(const Sample& sample) {
    std::map<PsuKey, std::vector<std::size_t>> by_psu;
    for (std::size_t k = 0; k < sample.size(); ++k) by_psu[psu_key(sample, k)].push_back(k);
    std::map<int, std::vector<std::vector<std::size_t>>> out;
    for (auto& [key, members] : by_psu) out[key.first].push_back(std::move(members));
    return out;
}

double ht_sum(const Sample& sample, std::span<const double> y) {
    double t = 0.0;
    for (std::size_t k = 0; k < sample.size(); ++k) t += sample.weight(k) * y[k];
    return t;
}

}  // namespace

Estimate ht_variance_est(const Sample& sample, std::span<const double> y, const InclusionProbs& joint, HtForm form) {
    check_aligned(sample, y);
    if (joint.joint.empty()) throw DataError("HT variance needs joint inclusion probabilities");
    const std::size_t N = joint.size();
    const auto idx = sample.unit_indices();
    for (auto i : idx)
        if (i >= N) throw DataError("sample unit outside the inclusion-probability frame");
    Estimate e;
    e.method = form == HtForm::ht ? "ht_variance" : "syg_variance";
    const std::size_t n = idx.size();
    std::vector<double> z(n);
    for (std::size_t a = 0; a < n; ++a) {
        const double pi = joint.first_order[idx[a]];
        if (!(pi > 0.0)) throw DataError("zero inclusion probability for a sampled unit");
        z[a] = y[a] / pi;
        e.value += z[a];
    }
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (!(joint.pij(idx[a], idx[b]) > 0.0))
                throw DataError("zero joint inclusion probability on a realized pair (design not measurable)");
    double v = 0.0;
    if (form == HtForm::ht) {
        for (std::size_t a = 0; a < n; ++a) {
            const double pa = joint.first_order[idx[a]];
            v += (1.0 - pa) * z[a] * z[a];
            for (std::size_t b = a + 1; b < n; ++b) {
                const double pab = joint.pij(idx[a], idx[b]);
                const double pb = joint.first_order[idx[b]];
                v += 2.0 * (pab - pa * pb) / pab * z[a] * z[b];
            }
        }
    } else {
        // fixed-size check: Σ_j π_ij = E(n)·π_i
        double expected_n = 0.0;
        for (double p : joint.first_order) expected_n += p;
        for (std::size_t i = 0; i < N; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < N; ++j) row += joint.pij(i, j);
            if (std::abs(row - expected_n * joint.first_order[i]) > 1e-8 * std::max(1.0, expected_n))
                throw DataError("SYG variance needs a fixed-size design");
        }
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b) {
                const double pa = joint.first_order[idx[a]], pb = joint.first_order[idx[b]];
                const double pab = joint.pij(idx[a], idx[b]);
                const double d = z[a] - z[b];
                v -= (pab - pa * pb) / pab * d * d;
            }
    }
    e.variance = v;
    if (v < 0.0) e.flags.push_back("negative_variance");
    return e;
}

double simplified_variance(const Sample& sample, std::span<const double> z) {
    check_aligned(sample, z);
    double v = 0.0;
    for (const auto& [stratum, totals] : psu_totals(sample, z)) {
        const double nh = static_cast<double>(totals.size());
        if (totals.size() < 2) throw DataError("simplified variance needs at least two PSUs per stratum");
        const double mean = std::accumulate(totals.begin(), totals.end(), 0.0) / nh;
        double ss = 0.0;
        for (double t : totals) ss += (t - mean) * (t - mean);
        v += nh / (nh - 1.0) * ss;
    }
    return v;
}

Estimate simplified_variance_estimate(const Sample& sample, std::span<const double> y) {
    check_aligned(sample, y);
    Estimate e;
    e.method = "simplified_variance";
    e.value = ht_sum(sample, y);
    e.variance = simplified_variance(sample, y);
    return e;
}

Estimate hh_variance(const Sample& sample, std::span<const double> y) {
    check_aligned(sample, y);
    std::vector<double> z;
    for (std::size_t k = 0; k < sample.size(); ++k) {
        const auto& s = sample.units[k];
        if (s.draws <= 0) throw DataError("HH variance needs a with-replacement sample");
        for (int c = 0; c < s.multiplicity; ++c) z.push_back(y[k] / (s.pi * s.conditional_pi.value_or(1.0)));
    }
    const double n = static_cast<double>(z.size());
    if (z.size() < 2) throw DataError("HH variance needs at least two draws");
    const double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : z) ss += (v - mean) * (v - mean);
    Estimate e;
    e.method = "hh_variance";
    e.value = mean;
    e.variance = ss / (n * (n - 1.0));
    return e;
}

double linearized_variance(const Sample& sample, std::span<const double> residuals, const InclusionProbs* joint) {
    if (joint && !joint->joint.empty()) {
        return *ht_variance_est(sample, residuals, *joint, HtForm::ht).variance;
    }
    return simplified_variance(sample, residuals);
}

Estimate random_group_variance(std::span<const double> replicates) {
    const double G = static_cast<double>(replicates.size());
    if (replicates.size() < 2) throw DataError("random group variance needs at least two groups");
    const double mean = std::accumulate(replicates.begin(), replicates.end(), 0.0) / G;
    double ss = 0.0;
    for (double t : replicates) ss += (t - mean) * (t - mean);
    Estimate e;
    e.method = "random_group";
    e.value = mean;
    e.variance = ss / (G * (G - 1.0));
    return e;
}

ReplicateWeights jackknife_weights(const Sample& sample, JackknifeStructure structure, int groups) {
    const auto base = sample.weights();
    ReplicateWeights rw;
    switch (structure) {
        case JackknifeStructure::iid: {
            const double n = static_cast<double>(sample.size());
            if (sample.size() < 2) throw DataError("jackknife needs at least two units");
            for (std::size_t k = 0; k < sample.size(); ++k) {
                std::vector<double> w(base.size());
                for (std::size_t j = 0; j < base.size(); ++j) w[j] = j == k ? 0.0 : base[j] * n / (n - 1.0);
                rw.weights.push_back(std::move(w));
                rw.factor.push_back((n - 1.0) / n);
            }
            break;
        }
        case JackknifeStructure::stratified_psu: {
            for (const auto& [stratum, psus] : psu_members(sample)) {
                const double nh = static_cast<double>(psus.size());
                if (psus.size() < 2)
                    throw DataError("jackknife: stratum " + std::to_string(stratum) + " has a single PSU");
                for (std::size_t i = 0; i < psus.size(); ++i) {
                    auto w = base;
                    for (std::size_t j = 0; j < psus.size(); ++j)
                        for (auto k : psus[j]) w[k] = j == i ? 0.0 : base[k] * nh / (nh - 1.0);
                    rw.weights.push_back(std::move(w));
                    rw.factor.push_back((nh - 1.0) / nh);
                }
            }
            break;
        }
        case JackknifeStructure::grouped: {
            if (groups < 2) throw DataError("grouped jackknife needs at least two groups");
            std::vector<std::vector<std::size_t>> all;
            for (const auto& [stratum, psus] : psu_members(sample))
                for (const auto& p : psus) all.push_back(p);
            if (all.size() < static_cast<std::size_t>(groups)) throw DataError("more jackknife groups than PSUs");
            const double G = groups;
            for (int g = 0; g < groups; ++g) {
                std::vector<double> w(base.size());
                for (std::size_t j = 0; j < all.size(); ++j)
                    for (auto k : all[j]) w[k] = static_cast<int>(j % groups) == g ? 0.0 : base[k] * G / (G - 1.0);
                rw.weights.push_back(std::move(w));
                rw.factor.push_back((G - 1.0) / G);
            }
            break;
        }
    }
    return rw;
}

Estimate jackknife_variance(const Sample& sample, const WeightedStatistic& statistic, const JackknifeOptions& options) {
    const auto base = sample.weights();
    Estimate e;
    e.method = "jackknife";
    e.value = statistic(base);
    const auto rw = jackknife_weights(sample, options.structure, options.groups);
    std::vector<double> fpc;
    if (!options.stratum_fpc.empty() && options.structure == JackknifeStructure::stratified_psu) {
        for (const auto& [stratum, psus] : psu_members(sample)) {
            const auto h = static_cast<std::size_t>(std::max(0, stratum));
            if (h >= options.stratum_fpc.size()) throw DataError("jackknife: missing stratum fpc");
            for (std::size_t i = 0; i < psus.size(); ++i) fpc.push_back(1.0 - options.stratum_fpc[h]);
        }
    }
    double v = 0.0;
    for (std::size_t r = 0; r < rw.weights.size(); ++r) {
        const double d = statistic(rw.weights[r]) - e.value;
        v += rw.factor[r] * (fpc.empty() ? 1.0 : fpc[r]) * d * d;
    }
    e.variance = v;
    return e;
}

HadamardMatrix make_hadamard(int order) {
    HadamardMatrix m;
    m.order = order;
    if (order == 1) {
        m.entries = {1};
        return m;
    }
    if (order == 2) {
        m.entries = {1, 1, 1, -1};
        return m;
    }
    if (order < 4 || (order & (order - 1)) != 0)
        throw DataError("no Hadamard construction for order " + std::to_string(order) +
                        "; supported orders are 1, 2 and powers of two from 4");
    std::vector<int> h{1, 1, 1, 1, 1, -1, 1, -1, 1, -1, -1, 1, 1, 1, -1, -1};
    int n = 4;
    while (n < order) {
        std::vector<int> next(4 * n * n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const int v = h[r * n + c];
                next[r * 2 * n + c] = v;
                next[r * 2 * n + c + n] = v;
                next[(r + n) * 2 * n + c] = v;
                next[(r + n) * 2 * n + c + n] = -v;
            }
        h = std::move(next);
        n *= 2;
    }
    m.entries = std::move(h);
    return m;
}

HadamardMatrix hadamard_for_strata(int H) {
    if (H < 1) throw DataError("BRR needs at least one stratum");
    int order = 2;
    while (order < H + 1) order *= 2;
    return make_hadamard(order);
}

Estimate brr_linear(std::span<const std::array<double, 2>> pairs, std::span<const double> W,
                    const HadamardMatrix& hadamard) {
    const std::size_t H = pairs.size();
    if (W.size() != H) throw DataError("BRR: one weight per stratum required");
    if (static_cast<int>(H) + 1 > hadamard.order)
        throw DataError("BRR: Hadamard order " + std::to_string(hadamard.order) + " too small for " +
                        std::to_string(H) + " strata");
    Estimate e;
    e.method = "brr";
    for (std::size_t h = 0; h < H; ++h) e.value += W[h] * 0.5 * (pairs[h][0] + pairs[h][1]);
    double v = 0.0;
    for (int g = 0; g < hadamard.order; ++g) {
        double theta = 0.0;
        for (std::size_t h = 0; h < H; ++h)
            theta += W[h] * (hadamard(g, static_cast<int>(h) + 1) > 0 ? pairs[h][0] : pairs[h][1]);
        v += (theta - e.value) * (theta - e.value);
    }
    e.variance = v / hadamard.order;
    return e;
}

ReplicateWeights brr_weights(const Sample& sample, const HadamardMatrix& hadamard) {
    const auto members = psu_members(sample);
    if (static_cast<int>(members.size()) + 1 > hadamard.order)
        throw DataError("BRR: Hadamard order " + std::to_string(hadamard.order) + " too small for " +
                        std::to_string(members.size()) + " strata");
    for (const auto& [stratum, psus] : members)
        if (psus.size() != 2) throw DataError("BRR needs exactly two PSUs in every stratum");
    const auto base = sample.weights();
    ReplicateWeights rw;
    for (int g = 0; g < hadamard.order; ++g) {
        std::vector<double> w(base.size(), 0.0);
        int h = 0;
        for (const auto& [stratum, psus] : members) {
            const std::size_t keep = hadamard(g, h + 1) > 0 ? 0 : 1;
            for (auto k : psus[keep]) w[k] = 2.0 * base[k];
            ++h;
        }
        rw.weights.push_back(std::move(w));
        rw.factor.push_back(1.0 / hadamard.order);
    }
    return rw;
}

Estimate brr_variance(const Sample& sample, const WeightedStatistic& statistic, const HadamardMatrix& hadamard) {
    const auto rw = brr_weights(sample, hadamard);
    Estimate e;
    e.method = "brr";
    e.value = statistic(sample.weights());
    double v = 0.0;
    for (std::size_t r = 0; r < rw.weights.size(); ++r) {
        const double d = statistic(rw.weights[r]) - e.value;
        v += rw.factor[r] * d * d;
    }
    e.variance = v;
    return e;
}

Estimate two_stage_variance(std::span<const double> Yhat, std::span<const double> Vhat, std::span<const double> pi,
                            std::span<const double> pi_joint) {
    const std::size_t n = Yhat.size();
    if (Vhat.size() != n || pi.size() != n || pi_joint.size() != n * n)
        throw DataError("two-stage variance: inconsistent PSU inputs");
    Estimate e;
    e.method = "two_stage";
    double between = 0.0, within = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(pi[i] > 0.0)) throw DataError("two-stage variance: zero PSU inclusion probability");
        e.value += Yhat[i] / pi[i];
        within += Vhat[i] / pi[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double pij = i == j ? pi[i] : pi_joint[i * n + j];
            if (!(pij > 0.0)) throw DataError("two-stage variance: zero joint PSU probability");
            between += (pij - pi[i] * pi[j]) / pij * Yhat[i] / pi[i] * Yhat[j] / pi[j];
        }
    }
    e.variance = between + within;
    e.diagnostics["between"] = between;
    e.diagnostics["within"] = within;
    if (*e.variance < 0.0) e.flags.push_back("negative_variance");
    return e;
}

ClusterEstimate srs_cluster_estimate(double M, std::span<const double> y) {
    const double m = static_cast<double>(y.size());
    if (y.empty()) throw DataError("cluster subsample is empty");
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / m;
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    const double s2 = y.size() > 1 ? ss / (m - 1.0) : 0.0;
    return {M * mean, M * M / m * (1.0 - m / M) * s2};
}

Estimate two_phase_variance(const Sample& sample2p, const Frame& frame, std::span<const double> y,
                            TwoPhaseVarianceMode mode, const TwoPhaseVarianceOptions& options) {
    check_aligned(sample2p, y);
    if (!sample2p.phase1) throw DataError("two-phase variance needs the phase-1 sample");
    const Sample& s1 = *sample2p.phase1;
    std::map<std::size_t, std::size_t> in2;  // frame index → phase-2 position
    for (std::size_t k = 0; k < sample2p.size(); ++k) in2[sample2p.units[k].unit] = k;
    Estimate e;

    if (mode == TwoPhaseVarianceMode::stratified) {
        e.method = "two_phase_stratified";
        std::map<int, double> w1_sum;
        std::map<int, std::vector<double>> ys;
        std::map<int, double> yw_sum;
        double total_w = 0.0;
        for (std::size_t k = 0; k < s1.size(); ++k) {
            const int g = s1.units[k].group;
            if (g < 0) throw DataError("two-phase stratified variance needs phase-1 groups");
            const double w = s1.weight(k);
            w1_sum[g] += w;
            total_w += w;
            if (auto it = in2.find(s1.units[k].unit); it != in2.end()) {
                ys[g].push_back(y[it->second]);
                yw_sum[g] += w * y[it->second];
            }
        }
        const double n = static_cast<double>(s1.size());
        std::map<int, double> ybar;
        for (const auto& [g, w] : w1_sum) {
            if (ys[g].empty()) throw DataError("two-phase group " + std::to_string(g) + " has no phase-2 units");
            ybar[g] = yw_sum[g] / w;
            e.value += w / total_w * ybar[g];
        }
        double between = 0.0, within = 0.0;
        for (const auto& [g, w] : w1_sum) {
            const double wh = w / total_w;
            between += wh * (ybar[g] - e.value) * (ybar[g] - e.value);
            const auto& v = ys[g];
            const double r = static_cast<double>(v.size());
            if (v.size() > 1) {
                const double m = std::accumulate(v.begin(), v.end(), 0.0) / r;
                double ss = 0.0;
                for (double t : v) ss += (t - m) * (t - m);
                within += wh * wh * ss / (r - 1.0) / r;
            }
        }
        e.variance = between / n + within;
        return e;
    }

    e.method = "two_phase_regression";
    const std::size_t p = options.x_columns.size() + (options.intercept ? 1 : 0);
    if (p == 0) throw DataError("two-phase regression needs covariates");
    auto xrow = [&](std::size_t unit) {
        Eigen::VectorXd x(p);
        std::size_t c = 0;
        if (options.intercept) x(c++) = 1.0;
        for (auto col : options.x_columns) {
            const auto& aux = frame[unit].aux;
            if (col >= aux.size()) throw DataError("unit '" + frame[unit].id + "' lacks aux column");
            x(c++) = aux[col];
        }
        return x;
    };
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (std::size_t k = 0; k < sample2p.size(); ++k) {
        const double w1 = 1.0 / sample2p.units[k].pi;
        const auto x = xrow(sample2p.units[k].unit);
        A += w1 * x * x.transpose();
        b += w1 * x * y[k];
    }
    const Eigen::VectorXd beta = detail::solve_symmetric(A, b, true, e.flags);
    std::vector<double> eta(s1.size());
    double correction = 0.0;
    for (std::size_t k = 0; k < s1.size(); ++k) {
        const auto unit = s1.units[k].unit;
        const double fit = xrow(unit).dot(beta);
        eta[k] = fit;
        if (auto it = in2.find(unit); it != in2.end()) {
            const double pi2 = sample2p.units[it->second].conditional_pi.value_or(1.0);
            const double r = y[it->second] - fit;
            eta[k] += r / pi2;
            correction += s1.weight(k) / pi2 * (1.0 / pi2 - 1.0) * r * r;
        }
        e.value += s1.weight(k) * eta[k];
    }
    double v = (1.0 - options.phase1_fraction) * simplified_variance(s1, eta);
    if (options.poisson_phase2) {
        v += correction;
        e.diagnostics["bias_correction"] = correction;
    }
    e.variance = v;
    return e;
}

}  // namespace survey
