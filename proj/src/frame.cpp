#include "survey/frame.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>

#include "survey/error.hpp"

namespace survey {

Frame::Frame(std::vector<Unit> units) : units_(std::move(units)) {
    index_.reserve(units_.size());
    for (std::size_t i = 0; i < units_.size(); ++i) {
        if (!index_.emplace(units_[i].id, i).second)
            throw DataError("duplicate unit id '" + units_[i].id + "'");
    }
    validate();
}

void Frame::validate() const {
    if (units_.empty()) return;
    const std::size_t p = units_.front().aux.size();
    std::map<std::string, std::string> cluster_stratum;
    for (const auto& u : units_) {
        if (!(u.mos >= 0.0)) throw DataError("unit '" + u.id + "': mos must be nonnegative");
        if (u.aux.size() != p) throw DataError("unit '" + u.id + "': aux vector length differs");
        if (u.cluster && u.stratum) {
            auto [it, inserted] = cluster_stratum.emplace(*u.cluster, *u.stratum);
            if (!inserted && it->second != *u.stratum)
                throw DataError("cluster '" + *u.cluster + "' spans strata '" + it->second +
                                "' and '" + *u.stratum + "'");
        }
    }
}

Frame Frame::from_values(std::span<const double> y) {
    std::vector<Unit> units(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        units[i].id = std::to_string(i + 1);
        units[i].y = {y[i]};
    }
    return Frame(std::move(units));
}

Frame Frame::from_mos(std::span<const double> mos, std::span<const double> y) {
    if (!y.empty() && y.size() != mos.size()) throw DataError("mos and y lengths differ");
    std::vector<Unit> units(mos.size());
    for (std::size_t i = 0; i < mos.size(); ++i) {
        units[i].id = std::to_string(i + 1);
        units[i].mos = mos[i];
        if (!y.empty()) units[i].y = {y[i]};
    }
    return Frame(std::move(units));
}

std::optional<std::size_t> Frame::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<double> Frame::mos() const {
    std::vector<double> out(units_.size());
    std::transform(units_.begin(), units_.end(), out.begin(), [](const Unit& u) { return u.mos; });
    return out;
}

std::vector<double> Frame::y(std::size_t k) const {
    std::vector<double> out(units_.size());
    for (std::size_t i = 0; i < units_.size(); ++i) {
        if (units_[i].y.size() <= k)
            throw DataError("unit '" + units_[i].id + "' has no study value " + std::to_string(k));
        out[i] = units_[i].y[k];
    }
    return out;
}

std::vector<double> Frame::aux(std::size_t k) const {
    std::vector<double> out(units_.size());
    for (std::size_t i = 0; i < units_.size(); ++i) {
        if (units_[i].aux.size() <= k)
            throw DataError("unit '" + units_[i].id + "' has no aux column " + std::to_string(k));
        out[i] = units_[i].aux[k];
    }
    return out;
}

namespace {
template <class Get>
std::vector<std::string> distinct_labels(const std::vector<Unit>& units, Get get) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& u : units) {
        const auto& label = get(u);
        if (label && seen.insert(*label).second) out.push_back(*label);
    }
    return out;
}
}  // namespace

std::vector<std::string> Frame::strata() const {
    return distinct_labels(units_, [](const Unit& u) -> const auto& { return u.stratum; });
}

std::vector<std::string> Frame::clusters() const {
    return distinct_labels(units_, [](const Unit& u) -> const auto& { return u.cluster; });
}

std::vector<std::size_t> Frame::members_of_stratum(const std::string& label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < units_.size(); ++i)
        if (units_[i].stratum == label) out.push_back(i);
    return out;
}

std::vector<std::size_t> Frame::members_of_cluster(const std::string& label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < units_.size(); ++i)
        if (units_[i].cluster == label) out.push_back(i);
    return out;
}

Frame Frame::subset(std::span<const std::size_t> indices) const {
    std::vector<Unit> units;
    units.reserve(indices.size());
    for (auto i : indices) units.push_back(units_.at(i));
    return Frame(std::move(units));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

namespace {

double parse_number(const std::string& text, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && last[-1] == ' ') --last;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || first == last)
        throw DataError("row " + std::to_string(row) + ", column '" + column +
                        "': not a number: '" + text + "'");
    return v;
}

// Returns k for names like "x3" (prefix 'x'), or -1.
int numbered_column(const std::string& name, char prefix) {
    if (name.size() < 2 || name[0] != prefix) return -1;
    int k = 0;
    auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
    if (ec != std::errc() || ptr != name.data() + name.size() || k < 1) return -1;
    return k;
}

}  // namespace

Frame read_frame_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("frame CSV is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv_line(line);
    int id_col = -1, mos_col = -1, stratum_col = -1, cluster_col = -1;
    std::map<int, int> x_cols, y_cols;
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
        const auto& h = header[c];
        if (h == "id") id_col = c;
        else if (h == "mos") mos_col = c;
        else if (h == "stratum") stratum_col = c;
        else if (h == "cluster") cluster_col = c;
        else if (h == "y") y_cols[1] = c;
        else if (int k = numbered_column(h, 'x'); k > 0) x_cols[k] = c;
        else if (int k = numbered_column(h, 'y'); k > 0) y_cols[k] = c;
        else throw DataError("row 1: unknown column '" + h + "'");
    }
    if (id_col < 0) throw DataError("row 1: required column 'id' missing");
    for (const auto* cols : {&x_cols, &y_cols}) {
        int expect = 1;
        for (const auto& [k, c] : *cols) {
            if (k != expect) throw DataError("row 1: numbered columns must be contiguous from 1");
            ++expect;
        }
    }

    std::vector<Unit> units;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        Unit u;
        u.id = fields[id_col];
        if (u.id.empty()) throw DataError("row " + std::to_string(row) + ", column 'id': empty id");
        if (mos_col >= 0) u.mos = parse_number(fields[mos_col], row, "mos");
        if (stratum_col >= 0 && !fields[stratum_col].empty()) u.stratum = fields[stratum_col];
        if (cluster_col >= 0 && !fields[cluster_col].empty()) u.cluster = fields[cluster_col];
        for (const auto& [k, c] : x_cols) u.aux.push_back(parse_number(fields[c], row, header[c]));
        for (const auto& [k, c] : y_cols) {
            if (fields[c].empty()) break;
            u.y.push_back(parse_number(fields[c], row, header[c]));
        }
        units.push_back(std::move(u));
    }
    return Frame(std::move(units));
}

Frame read_frame_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open frame file '" + path + "'");
    return read_frame_csv(in);
}

}  // namespace survey
