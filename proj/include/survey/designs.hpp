#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "survey/error.hpp"
#include "survey/frame.hpp"
#include "survey/rng.hpp"
#include "survey/sample.hpp"

namespace survey {

enum class SrsMethod { draw_by_draw, selection_rejection, reservoir, random_sort };
enum class PpsMethod { cumulative, lahiri };
enum class PipsMethod { brewer2, durbin2, systematic_pips, chao, rejective_poisson };

Sample select_srs(const Frame& frame, int n, SrsMethod method, RngStream& rng);
Sample select_srswr(const Frame& frame, int n, RngStream& rng);
Sample select_bernoulli(const Frame& frame, double pi, RngStream& rng);
Sample select_poisson(const Frame& frame, std::span<const double> pi, RngStream& rng);

/// Systematic interval G = floor(N/n), with N = nG + c.
struct SystematicPlan {
    std::size_t interval = 0;
    std::size_t remainder = 0;
};
SystematicPlan systematic_plan(std::size_t N, int n);
/// Zero-based indices for the one-based random start r in 1..G.
std::vector<std::size_t> systematic_from_start(std::size_t N, std::size_t interval, std::size_t start);
Sample select_systematic(const Frame& frame, int n, RngStream& rng);

/// πps inclusion probabilities n·x/Σx with iterative capping at 1.
std::vector<double> compute_pips(std::span<const double> mos, int n);

/// Lahiri bound 0 means "just above max x".
Sample select_pps_wr(const Frame& frame, std::span<const double> mos, int n, PpsMethod method,
                     RngStream& rng, double lahiri_bound = 0.0);

/// Fixed-size πps selection. `pi` are target inclusion probabilities; for
/// rejective sampling they are the working probabilities π̃.
Sample select_pips(const Frame& frame, std::span<const double> pi, PipsMethod method, RngStream& rng);

/// Conditional Poisson sampling: Poisson(π̃) draws repeated until the size is n.
/// Recorded π are the exact conditional marginals, flagged "approximate_pi"
/// because they differ from π̃.
Sample select_rejective(const Frame& frame, std::span<const double> working, int n, RngStream& rng);

/// Brewer's first-draw probabilities θ_i for n = 2.
std::vector<double> brewer_first_draw(std::span<const double> p);
/// Joint inclusion probabilities 2p_ip_j/(1+K)·(1/(1−2p_i)+1/(1−2p_j)), row-major.
std::vector<double> brewer_joint(std::span<const double> p);
/// Selection probabilities P({i,j}) from both draw orders of a two-draw scheme.
std::vector<double> brewer_pair_probs(std::span<const double> p);
std::vector<double> durbin_pair_probs(std::span<const double> p);

/// Exact Chao first-order probabilities for the stream order given.
std::vector<double> chao_pips(std::span<const double> x, int n);

/// Conditional-Poisson (rejective) marginals for working probabilities π̃.
std::vector<double> rejective_marginals(std::span<const double> working, int n);
/// Conditional-Poisson joint inclusion probabilities, row-major.
std::vector<double> rejective_joint(std::span<const double> working, int n);
/// Working probabilities whose conditional marginals match `target` (logit fixed point).
std::vector<double> rejective_working_probs(std::span<const double> target, int n, double tol = 1e-8,
                                            int max_iter = 10000);

/// Streaming uniform sampler without replacement (reservoir method).
template <class T>
class Reservoir {
public:
    Reservoir(std::size_t n, RngStream& rng) : n_(n), rng_(rng) {
        if (n == 0) throw DataError("reservoir size must be positive");
        items_.reserve(n);
    }

    void push(T value) {
        ++seen_;
        if (items_.size() < n_) {
            items_.push_back(std::move(value));
            return;
        }
        const std::uint64_t j = rng_.below(seen_);
        if (j < n_) items_[j] = std::move(value);
    }

    const std::vector<T>& items() const { return items_; }
    std::size_t seen() const { return seen_; }

private:
    std::size_t n_;
    RngStream& rng_;
    std::size_t seen_ = 0;
    std::vector<T> items_;
};

/// Streaming πps sampler: after k units each later unit j has inclusion
/// probability n·x_j/Σ_{i≤k} x_i.
template <class T>
class ChaoSampler {
public:
    ChaoSampler(std::size_t n, RngStream& rng) : n_(n), rng_(rng) {
        if (n == 0) throw DataError("Chao sample size must be positive");
        items_.reserve(n);
    }

    void push(T value, double x) {
        if (!(x >= 0.0)) throw DataError("Chao: negative size measure");
        total_ += x;
        if (items_.size() < n_) {
            items_.push_back(std::move(value));
            return;
        }
        const double p = static_cast<double>(n_) * x / total_;
        if (p > 1.0 + 1e-12) throw DataError("Chao: certainty unit in stream; extract it first");
        if (rng_.uniform() < p) items_[rng_.below(n_)] = std::move(value);
    }

    const std::vector<T>& items() const { return items_; }
    double total() const { return total_; }

private:
    std::size_t n_;
    RngStream& rng_;
    double total_ = 0.0;
    std::vector<T> items_;
};

}  // namespace survey
