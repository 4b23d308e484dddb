#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace survey {

struct Unit {
    std::string id;
    double mos = 1.0;
    std::optional<std::string> stratum;
    std::optional<std::string> cluster;
    std::vector<double> aux;
    std::vector<double> y;
};

/// Population register. Units keep frame order; ids are opaque strings mapped
/// to a dense index.
class Frame {
public:
    Frame() = default;
    explicit Frame(std::vector<Unit> units);

    /// Frame with ids "1".."N", the given study values and mos = 1.
    static Frame from_values(std::span<const double> y);
    /// Frame with ids "1".."N", given mos and optional study values.
    static Frame from_mos(std::span<const double> mos, std::span<const double> y = {});

    std::size_t size() const { return units_.size(); }
    bool empty() const { return units_.empty(); }
    const Unit& operator[](std::size_t i) const { return units_[i]; }
    const std::vector<Unit>& units() const { return units_; }
    std::optional<std::size_t> index_of(const std::string& id) const;

    std::vector<double> mos() const;
    /// Study variable `k` for every unit (throws if missing).
    std::vector<double> y(std::size_t k = 0) const;
    /// Auxiliary column `k` for every unit.
    std::vector<double> aux(std::size_t k) const;
    std::size_t aux_dim() const { return units_.empty() ? 0 : units_.front().aux.size(); }

    /// Distinct stratum labels in order of first appearance.
    std::vector<std::string> strata() const;
    /// Distinct cluster labels in order of first appearance.
    std::vector<std::string> clusters() const;
    /// Indices of units carrying the stratum label.
    std::vector<std::size_t> members_of_stratum(const std::string& label) const;
    std::vector<std::size_t> members_of_cluster(const std::string& label) const;

    /// Sub-frame holding the listed units (order preserved).
    Frame subset(std::span<const std::size_t> indices) const;

private:
    void validate() const;

    std::vector<Unit> units_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Reads a frame CSV: required column `id`; optional `mos`, `stratum`,
/// `cluster`, `y` (or `y1..yk`), `x1..xk`. Errors report row and column.
Frame read_frame_csv(std::istream& in);
Frame read_frame_csv_file(const std::string& path);

/// Splits one CSV line; supports double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace survey
