#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "survey/designs.hpp"
#include "survey/frame.hpp"
#include "survey/rng.hpp"
#include "survey/sample.hpp"

namespace survey {

/// Heap-held value with deep copy, used for recursive design nesting.
template <class T>
class Box {
public:
    Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}
    Box(const Box& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
    Box(Box&&) noexcept = default;
    Box& operator=(const Box& other) {
        if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
        return *this;
    }
    Box& operator=(Box&&) noexcept = default;
    ~Box() = default;

    const T& operator*() const { return *ptr_; }
    const T* operator->() const { return ptr_.get(); }

private:
    std::unique_ptr<T> ptr_;
};

struct Design;

struct Srs {
    int n = 0;
    SrsMethod method = SrsMethod::draw_by_draw;
};
struct Srswr {
    int n = 0;
};
struct Bernoulli {
    double pi = 0.0;
};
/// Independent inclusion with explicit π, or π = compute_pips(mos, n) when `n` > 0.
struct Poisson {
    std::vector<double> pi;
    int n = 0;
};
struct Systematic {
    int n = 0;
};
struct SystematicPips {
    int n = 0;
};
struct Ppswr {
    int n = 0;
    PpsMethod method = PpsMethod::cumulative;
    double lahiri_bound = 0.0;
};
/// n = 2 with π = 2x/Σx.
struct Brewer2 {};
struct Durbin2 {};
struct Chao {
    int n = 0;
};
/// Conditional Poisson. Empty `working` means π̃ = compute_pips(mos, n);
/// `calibrate` adjusts π̃ so the conditional marginals equal compute_pips(mos, n).
struct RejectivePoisson {
    int n = 0;
    std::vector<double> working;
    bool calibrate = false;
};
/// Design given by its support over frame positions.
struct Explicit {
    std::vector<Outcome> support;
};
struct StratumDesign {
    std::string label;
    Box<Design> design;
};
struct Stratified {
    std::vector<StratumDesign> strata;
};
/// Clusters (frame `cluster` labels) are sampled and fully enumerated.
struct OneStageCluster {
    Box<Design> psu;
};
/// PSU design over clusters, then the SSU design applied within each selected cluster.
struct TwoStage {
    Box<Design> psu;
    Box<Design> ssu;
};

/// Phase-2 rules read phase-1 observations.
struct KeepAll {};
/// Groups phase-1 units by aux[x] against ascending cut points and takes an
/// SRS of r_g = min(n_g, max(min(n_g, 2), round(rate_g·n_g))) in each group.
struct StratifiedSrsRule {
    std::size_t x = 0;
    std::vector<double> cuts;
    std::vector<double> rates;
};
/// Poisson with π_{2i|1} = compute_pips(aux[x] over A1, expected_size).
struct PoissonPpsRule {
    std::size_t x = 0;
    int expected_size = 0;
};
using Phase2Rule = std::variant<KeepAll, StratifiedSrsRule, PoissonPpsRule>;

struct TwoPhase {
    Box<Design> phase1;
    Phase2Rule rule;
};

struct Design {
    std::variant<Srs, Srswr, Bernoulli, Poisson, Systematic, SystematicPips, Ppswr, Brewer2, Durbin2, Chao,
                 RejectivePoisson, Explicit, Stratified, OneStageCluster, TwoStage, TwoPhase>
        spec;

    template <class T>
    Design(T s) : spec(std::move(s)) {}

    /// Short variant name, e.g. "srs", "two_stage".
    std::string name() const;
    bool with_replacement() const;
    /// True for designs whose size is fixed given the frame.
    bool fixed_size() const;
};

/// Rejects nesting the sampler cannot honour (two-phase inside a stage,
/// multi-stage SSU designs, ...). Throws DataError with the offending path.
void validate_design(const Design& design);

/// Frame of clusters: id = cluster label, mos = Σ member mos, stratum of members.
Frame cluster_frame(const Frame& frame);

Sample draw(const Design& design, const Frame& frame, RngStream& rng);
Sample select_stratified(const Frame& frame, const std::vector<StratumDesign>& strata, RngStream& rng);
/// `ssu` null means every element of a selected cluster is taken.
Sample select_two_stage(const Frame& frame, const Design& psu, const Design* ssu, RngStream& rng);
Sample select_two_phase(const Frame& frame, const Design& phase1, const Phase2Rule& rule, RngStream& rng);

/// First-order inclusion probabilities (single-draw probabilities for
/// with-replacement designs). Throws naming a unit whose π is 0.
InclusionProbs first_order_pips(const Design& design, const Frame& frame);
/// Full joint matrix. Systematic-type designs return zeros with
/// `non_measurable` set rather than failing.
InclusionProbs joint_pips(const Design& design, const Frame& frame, std::size_t cap = 1'000'000);

/// Exact support, sorted lexicographically by frame position.
DesignDistribution enumerate_design(const Design& design, const Frame& frame, std::size_t cap = 1'000'000);
/// Sample object for an enumerated outcome, with the design's probabilities.
Sample realize(const Design& design, const Frame& frame, const Outcome& outcome);

}  // namespace survey
