#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survey/frame.hpp"

namespace survey {

/// One selected unit. For without-replacement designs `pi` is the
/// (first-stage or first-phase) inclusion probability; for with-replacement
/// designs it is the single-draw probability p_i.
struct Selection {
    std::size_t unit = 0;
    int multiplicity = 1;
    double pi = 1.0;
    /// Second-stage π_{k|i} or second-phase π_{2i|1}.
    std::optional<double> conditional_pi;
    /// Design stratum index (position in the stratified design), -1 if none.
    int stratum = -1;
    /// Primary sampling unit index within the frame's cluster list, -1 if none.
    int psu = -1;
    /// Group assigned by a two-phase rule, -1 if none.
    int group = -1;
    /// Number of with-replacement draws in this unit's stratum; 0 for
    /// without-replacement selections.
    int draws = 0;
};

struct Sample {
    std::string design_tag;
    bool with_replacement = false;
    /// Number of draws for with-replacement designs.
    int draws = 0;
    std::vector<Selection> units;
    /// Phase-1 sample for two-phase designs.
    std::shared_ptr<const Sample> phase1;
    /// Notes such as "approximate_pi" for rejective sampling.
    std::vector<std::string> flags;

    std::size_t size() const { return units.size(); }
    /// Overall inclusion probability π_i · π_{k|i} (WOR only).
    double overall_pi(std::size_t k) const;
    /// Base weight: multiplicity/(draws·p) for WR selections, multiplicity/overall_pi otherwise.
    double weight(std::size_t k) const;
    std::vector<double> weights() const;
    /// Frame indices of the selections, in sample order.
    std::vector<std::size_t> unit_indices() const;
    /// Study variable `k` of the selected units, read from the frame.
    std::vector<double> values(const Frame& frame, std::size_t k = 0) const;
    std::vector<double> aux(const Frame& frame, std::size_t k) const;
    /// Number of draws counting multiplicity.
    int total_draws() const;
};

/// First-order (and optionally joint) inclusion probabilities over a frame.
struct InclusionProbs {
    std::vector<double> first_order;
    /// Row-major N×N, empty when not computed.
    std::vector<double> joint;
    /// Set when some π_ij = 0 (e.g. systematic designs).
    bool non_measurable = false;

    std::size_t size() const { return first_order.size(); }
    double pij(std::size_t i, std::size_t j) const { return joint[i * first_order.size() + j]; }
};

struct Outcome {
    /// Sorted frame indices; repeated entries encode with-replacement multiplicity.
    std::vector<std::size_t> units;
    double prob = 0.0;
};

struct DesignDistribution {
    std::vector<Outcome> support;

    double total_probability() const;
};

}  // namespace survey
