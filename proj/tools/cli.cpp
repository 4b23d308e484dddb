#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "design_io.hpp"
#include "json.hpp"
#include "survey/allocation.hpp"
#include "survey/calibration.hpp"
#include "survey/diagnostics.hpp"
#include "survey/error.hpp"
#include "survey/estimators.hpp"
#include "survey/frame.hpp"
#include "survey/nonresponse.hpp"
#include "survey/rng.hpp"
#include "survey/simulate.hpp"
#include "survey/smallarea.hpp"
#include "survey/variance.hpp"

namespace survey::cli {

using nlohmann::json;

namespace {

/// Thrown for command-line misuse detected after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Table {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    }
    std::size_t require(std::initializer_list<const char*> names) const {
        for (const char* n : names)
            if (auto c = column(n)) return *c;
        throw DataError(path + ": missing column '" + *names.begin() + "'");
    }
    double number(std::size_t row, std::size_t col) const {
        const auto& cell = rows[row][col];
        try {
            std::size_t used = 0;
            const double v = std::stod(cell, &used);
            if (used != cell.size()) throw std::invalid_argument(cell);
            return v;
        } catch (const std::exception&) {
            throw DataError(path + ": row " + std::to_string(row + 2) + ", column '" + header[col] +
                            "': not a number ('" + cell + "')");
        }
    }
};

Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    Table t;
    t.path = path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        for (auto& f : fields) {
            const auto b = f.find_first_not_of(" \t");
            const auto e = f.find_last_not_of(" \t");
            f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
        }
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw DataError(path + ": row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw DataError(path + ": empty file");
    return t;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

/// Reads a frame variable: y, yK, xK, mos, or 1 for a constant.
double unit_value(const Unit& u, const std::string& name) {
    auto index = [&](std::size_t skip) -> std::size_t {
        const std::string digits = name.substr(skip);
        if (digits.empty()) return 0;
        if (!std::all_of(digits.begin(), digits.end(), ::isdigit) || std::stoul(digits) == 0)
            throw UsageError("unknown variable '" + name + "'");
        return std::stoul(digits) - 1;
    };
    if (name == "1" || name == "intercept") return 1.0;
    if (name == "mos") return u.mos;
    if (name.rfind('y', 0) == 0) {
        const auto k = index(1);
        if (k >= u.y.size()) throw DataError("unit '" + u.id + "' has no study variable '" + name + "'");
        return u.y[k];
    }
    if (name.rfind('x', 0) == 0) {
        const auto k = index(1);
        if (k >= u.aux.size()) throw DataError("unit '" + u.id + "' has no auxiliary variable '" + name + "'");
        return u.aux[k];
    }
    throw UsageError("unknown variable '" + name + "'");
}

std::vector<double> sample_values(const Sample& s, const Frame& frame, const std::string& name) {
    std::vector<double> out;
    out.reserve(s.size());
    for (const auto& sel : s.units) out.push_back(unit_value(frame[sel.unit], name));
    return out;
}

std::vector<double> frame_values(const Frame& frame, const std::string& name) {
    std::vector<double> out;
    for (const auto& u : frame.units()) out.push_back(unit_value(u, name));
    return out;
}

json number_or_null(std::optional<double> v) {
    if (!v || !std::isfinite(*v)) return nullptr;
    return *v;
}

json estimate_json(const Estimate& e) {
    json j;
    j["value"] = e.value;
    j["variance"] = number_or_null(e.variance);
    const double se = e.se();
    j["se"] = number_or_null(se);
    if (std::isfinite(se)) {
        const auto ci = e.ci95();
        j["ci95"] = {ci[0], ci[1]};
    } else {
        j["ci95"] = nullptr;
    }
    j["method"] = e.method;
    j["n_effective"] = number_or_null(e.n_effective);
    j["flags"] = e.flags;
    j["diagnostics"] = e.diagnostics;
    return j;
}

std::string fmt(double v) {
    if (!std::isfinite(v)) return "";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

struct Globals {
    std::string frame;
    std::uint64_t seed = 1;
    std::string out = "json";
};

Frame load_frame(const Globals& g) {
    if (g.frame.empty()) throw UsageError("--frame is required");
    return read_frame_csv_file(g.frame);
}

struct DesignArgs {
    std::string design;
    int n = 0;
    double pi = 0.0;
    std::string method;
};

void add_design_options(CLI::App* cmd, DesignArgs& d) {
    cmd->add_option("--design", d.design, "Design JSON file, inline JSON, or a simple design name");
    cmd->add_option("--n", d.n, "Sample size for a named design");
    cmd->add_option("--pi", d.pi, "Inclusion probability for --design bernoulli");
    cmd->add_option("--method", d.method, "Selection method for a named design");
}

Design resolve_design(const DesignArgs& a) {
    if (a.design.empty()) throw UsageError("--design is required");
    if (a.design.front() == '{' || std::filesystem::exists(a.design)) return load_design(a.design);
    json body = json::object();
    if (a.design == "bernoulli") {
        body["pi"] = a.pi;
    } else if (a.design != "brewer2" && a.design != "durbin2") {
        body["n"] = a.n;
    }
    if (!a.method.empty()) body["method"] = a.method;
    return design_from_json(json{{a.design, body}});
}

/// Sample CSV: id plus pi or weight; optional conditional_pi, multiplicity,
/// draws, stratum (index), psu (cluster label).
Sample read_sample(const Frame& frame, const std::string& path) {
    const Table t = read_table(path);
    const auto id = t.require({"id"});
    const auto pi = t.column("pi"), weight = t.column("weight"), cond = t.column("conditional_pi"),
               mult = t.column("multiplicity"), draws = t.column("draws"), stratum = t.column("stratum"),
               psu = t.column("psu");
    if (!pi && !weight) throw DataError(path + ": need a 'pi' or 'weight' column");
    const auto clusters = frame.clusters();
    Sample s;
    s.design_tag = "file";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const auto unit = frame.index_of(row[id]);
        if (!unit) throw DataError(path + ": row " + std::to_string(r + 2) + ": id '" + row[id] + "' not in frame");
        Selection sel;
        sel.unit = *unit;
        if (mult && !row[*mult].empty()) sel.multiplicity = static_cast<int>(t.number(r, *mult));
        if (draws && !row[*draws].empty()) sel.draws = static_cast<int>(t.number(r, *draws));
        if (pi && !row[*pi].empty()) sel.pi = t.number(r, *pi);
        else sel.pi = sel.multiplicity / t.number(r, *weight) / std::max(1, sel.draws);
        if (cond && !row[*cond].empty()) sel.conditional_pi = t.number(r, *cond);
        if (stratum && !row[*stratum].empty()) sel.stratum = static_cast<int>(t.number(r, *stratum));
        std::optional<std::string> label;
        if (psu && !row[*psu].empty()) label = row[*psu];
        else if (frame[*unit].cluster) label = frame[*unit].cluster;
        if (label) {
            const auto it = std::find(clusters.begin(), clusters.end(), *label);
            if (it == clusters.end()) throw DataError(path + ": unknown psu '" + *label + "'");
            sel.psu = static_cast<int>(it - clusters.begin());
        }
        if (!(sel.pi > 0.0 && sel.pi <= 1.0)) throw DataError(path + ": row " + std::to_string(r + 2) + ": pi must lie in (0,1]");
        if (sel.draws > 0) s.with_replacement = true;
        s.units.push_back(sel);
    }
    if (s.with_replacement) s.draws = s.total_draws();
    return s;
}

std::map<std::string, double> read_totals(const std::string& path) {
    const Table t = read_table(path);
    const auto name = t.require({"name", "variable"});
    const auto total = t.require({"total", "target"});
    std::map<std::string, double> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) out[t.rows[r][name]] = t.number(r, total);
    return out;
}

void write_json(std::ostream& out, json j) {
    j["schema"] = 1;
    out << j.dump(2) << '\n';
}

// ------------------------------------------------------------------ draw

void print_sample(std::ostream& out, const Globals& g, const Frame& frame, const Design& design, const Sample& s) {
    const auto clusters = frame.clusters();
    if (g.out == "csv") {
        out << "id,pi,conditional_pi,weight,multiplicity,draws,stratum,psu\n";
        for (std::size_t k = 0; k < s.size(); ++k) {
            const auto& u = s.units[k];
            out << frame[u.unit].id << ',' << fmt(u.pi) << ',' << (u.conditional_pi ? fmt(*u.conditional_pi) : "")
                << ',' << fmt(s.weight(k)) << ',' << u.multiplicity << ',' << u.draws << ','
                << (u.stratum >= 0 ? std::to_string(u.stratum) : "") << ','
                << (u.psu >= 0 ? clusters[u.psu] : "") << '\n';
        }
        return;
    }
    json units = json::array();
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto& u = s.units[k];
        json j = {{"id", frame[u.unit].id}, {"pi", u.pi}, {"weight", s.weight(k)}, {"multiplicity", u.multiplicity}};
        if (u.conditional_pi) j["conditional_pi"] = *u.conditional_pi;
        if (u.draws > 0) j["draws"] = u.draws;
        if (u.stratum >= 0) j["stratum"] = u.stratum;
        if (u.psu >= 0) j["psu"] = clusters[u.psu];
        if (u.group >= 0) j["group"] = u.group;
        units.push_back(j);
    }
    write_json(out, {{"design", design_to_json(design)},
                     {"seed", g.seed},
                     {"size", s.size()},
                     {"units", units},
                     {"flags", s.flags}});
}

// ------------------------------------------------------------- estimate

struct EstimateArgs {
    DesignArgs design;
    std::string sample;
    std::string estimator = "ht";
    std::string y = "y";
    std::string x;
    std::string totals;
    std::string c_model = "const";
    std::string denominator;
    double q = 0.5;
    double N = 0.0;
    std::string variance_method = "simplified";
    int replicates = 0;
};

void add_estimate_options(CLI::App* cmd, EstimateArgs& a) {
    add_design_options(cmd, a.design);
    cmd->add_option("--sample", a.sample, "Sample CSV (id, pi or weight, ...); drawn from --design otherwise");
    cmd->add_option("--estimator", a.estimator, "ht, hajek, hh, ratio, greg, quantile")
        ->check(CLI::IsMember({"ht", "hajek", "hh", "ratio", "greg", "quantile"}));
    cmd->add_option("--y", a.y, "Study variable (y, y2, ...)");
    cmd->add_option("--x", a.x, "Comma-separated auxiliary variables (x1, ..., 1 for intercept)");
    cmd->add_option("--totals", a.totals, "CSV of population totals with columns name,total");
    cmd->add_option("--c-model", a.c_model, "GREG scale: const, x, or a variable name (c_i = π_i v_i)");
    cmd->add_option("--denominator", a.denominator, "For ht: report the ratio of HT totals y/denominator");
    cmd->add_option("--q", a.q, "Quantile level");
    cmd->add_option("--N", a.N, "Population size; ht reports the mean when given");
}

Sample obtain_sample(const EstimateArgs& a, const Globals& g, const Frame& frame) {
    if (!a.sample.empty()) return read_sample(frame, a.sample);
    const Design d = resolve_design(a.design);
    RngStream rng(g.seed);
    return draw(d, frame, rng);
}

Eigen::MatrixXd design_matrix(const Sample& s, const Frame& frame, const std::vector<std::string>& xs) {
    Eigen::MatrixXd X(s.size(), xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const auto col = sample_values(s, frame, xs[j]);
        for (std::size_t k = 0; k < s.size(); ++k) X(k, j) = col[k];
    }
    return X;
}

Eigen::VectorXd totals_for(const std::vector<std::string>& xs, const std::string& path) {
    if (path.empty()) throw UsageError("--totals is required for this estimator");
    const auto totals = read_totals(path);
    Eigen::VectorXd T(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) {
        const auto it = totals.find(xs[j]);
        if (it == totals.end()) throw DataError(path + ": no total for '" + xs[j] + "'");
        T(j) = it->second;
    }
    return T;
}

WeightedStatistic replicate_statistic(const EstimateArgs& a, const Sample& s, const Frame& frame,
                                      const std::vector<double>& y) {
    if (a.estimator == "ht" && a.denominator.empty() && a.N <= 0.0)
        return [y](std::span<const double> w) { return std::inner_product(w.begin(), w.end(), y.begin(), 0.0); };
    if (a.estimator == "ht" && a.denominator.empty())
        return [y, N = a.N](std::span<const double> w) {
            return std::inner_product(w.begin(), w.end(), y.begin(), 0.0) / N;
        };
    if (a.estimator == "hajek" || (a.estimator == "ht" && !a.denominator.empty())) {
        const auto x = a.estimator == "hajek" ? std::vector<double>(y.size(), 1.0) : sample_values(s, frame, a.denominator);
        return [y, x](std::span<const double> w) {
            return std::inner_product(w.begin(), w.end(), y.begin(), 0.0) /
                   std::inner_product(w.begin(), w.end(), x.begin(), 0.0);
        };
    }
    if (a.estimator == "ratio") {
        const auto xs = split_list(a.x);
        if (xs.size() != 1) throw UsageError("ratio needs exactly one --x variable");
        const double X = totals_for(xs, a.totals)(0);
        const auto x = sample_values(s, frame, xs[0]);
        return [y, x, X](std::span<const double> w) {
            return X * std::inner_product(w.begin(), w.end(), y.begin(), 0.0) /
                   std::inner_product(w.begin(), w.end(), x.begin(), 0.0);
        };
    }
    throw UsageError("replication variance supports ht, hajek and ratio");
}

Estimate compute_estimate(const EstimateArgs& a, const Sample& s, const Frame& frame) {
    const auto y = sample_values(s, frame, a.y);
    if (a.estimator == "ht") {
        if (!a.denominator.empty()) {
            // ratio of HT totals, linearized
            const auto x = sample_values(s, frame, a.denominator);
            const auto w = s.weights();
            const double Y = std::inner_product(w.begin(), w.end(), y.begin(), 0.0);
            const double X = std::inner_product(w.begin(), w.end(), x.begin(), 0.0);
            if (X == 0.0) throw DataError("denominator total is zero");
            Estimate e;
            e.method = "ht_ratio";
            e.value = Y / X;
            std::vector<double> z(y.size());
            for (std::size_t k = 0; k < y.size(); ++k) z[k] = (y[k] - e.value * x[k]) / X;
            try {
                e.variance = simplified_variance(s, z);
            } catch (const DataError&) {
                e.flags.push_back("variance_unavailable");
            }
            return e;
        }
        return a.N > 0.0 ? ht_mean(s, y, a.N) : ht_total(s, y);
    }
    if (a.estimator == "hajek") return hajek_mean(s, y);
    if (a.estimator == "hh") return hh_total(s, y);
    if (a.estimator == "quantile") return quantile(s, y, a.q);
    const auto xs = split_list(a.x);
    if (xs.empty()) throw UsageError("--x is required for " + a.estimator);
    const Eigen::VectorXd T = totals_for(xs, a.totals);
    if (a.estimator == "ratio") {
        if (xs.size() != 1) throw UsageError("ratio needs exactly one --x variable");
        return ratio_estimator(s, y, sample_values(s, frame, xs[0]), T(0));
    }
    // greg: c_i = π_i v_i
    std::vector<double> v(s.size(), 1.0);
    if (a.c_model == "x") {
        const auto it = std::find_if(xs.begin(), xs.end(), [](const auto& n) { return n != "1" && n != "intercept"; });
        if (it == xs.end()) throw UsageError("--c-model x needs a non-constant --x variable");
        v = sample_values(s, frame, *it);
    } else if (a.c_model != "const") {
        v = sample_values(s, frame, a.c_model);
    }
    std::vector<double> c(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) c[k] = v[k] / s.weight(k);
    auto r = regression_greg(s, y, design_matrix(s, frame, xs), T, c);
    r.estimate.diagnostics["ibc"] = r.ibc ? 1.0 : 0.0;
    return r.estimate;
}

Estimate compute_variance(const EstimateArgs& a, const Sample& s, const Frame& frame) {
    const std::string& m = a.variance_method;
    if (m == "simplified") return compute_estimate(a, s, frame);
    const auto y = sample_values(s, frame, a.y);
    if (m == "ht" || m == "syg") {
        if (a.estimator != "ht" || !a.denominator.empty() || a.N > 0.0)
            throw UsageError("--method ht/syg applies to the HT total");
        const auto joint = joint_pips(resolve_design(a.design), frame);
        if (joint.non_measurable) throw DataError("design is not measurable: some π_ij = 0");
        return ht_variance_est(s, y, joint, m == "ht" ? HtForm::ht : HtForm::syg);
    }
    if (m == "hh") return hh_variance(s, y);
    const auto stat = replicate_statistic(a, s, frame, y);
    if (m == "jackknife") {
        JackknifeOptions opt;
        const bool staged = std::any_of(s.units.begin(), s.units.end(), [](const auto& u) { return u.psu >= 0 || u.stratum >= 0; });
        opt.structure = a.replicates > 0 ? JackknifeStructure::grouped
                        : staged         ? JackknifeStructure::stratified_psu
                                         : JackknifeStructure::iid;
        opt.groups = a.replicates;
        return jackknife_variance(s, stat, opt);
    }
    if (m == "brr") {
        int H = 0;
        for (const auto& u : s.units) H = std::max(H, u.stratum + 1);
        return brr_variance(s, stat, hadamard_for_strata(H));
    }
    throw UsageError("unknown variance method '" + m + "'");
}

void print_estimate(std::ostream& out, const Globals& g, const Estimate& e) {
    if (g.out == "csv") {
        const double se = e.se();
        const auto ci = e.ci95();
        out << "value,variance,se,ci_low,ci_high,method\n"
            << fmt(e.value) << ',' << (e.variance ? fmt(*e.variance) : "") << ',' << fmt(se) << ','
            << (std::isfinite(se) ? fmt(ci[0]) : "") << ',' << (std::isfinite(se) ? fmt(ci[1]) : "") << ','
            << e.method << '\n';
        return;
    }
    write_json(out, estimate_json(e));
}

// ------------------------------------------------------------- allocate

struct AllocateArgs {
    std::string strata;
    std::string method = "neyman";
    int n = 0;
    double budget = 0.0;
    double fixed_cost = 0.0;
    double alpha = 0.5;
};

void run_allocate(const AllocateArgs& a, const Globals& g, std::ostream& out) {
    if (a.strata.empty()) throw UsageError("--strata is required");
    const Table t = read_table(a.strata);
    const auto cN = t.require({"N", "N_h"});
    const auto cS = t.column("S") ? t.column("S") : t.column("S_h");
    const auto cc = t.column("c") ? t.column("c") : (t.column("c_h") ? t.column("c_h") : t.column("cost"));
    std::vector<StratumInfo> strata;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        StratumInfo s;
        s.N = t.number(r, cN);
        if (cS) s.S = t.number(r, *cS);
        if (cc) s.cost = t.number(r, *cc);
        strata.push_back(s);
    }
    Allocation alloc;
    if (a.method == "proportional") {
        alloc = proportional_allocation(strata, a.n);
    } else if (a.method == "neyman") {
        for (auto& s : strata) s.cost = 1.0;
        if (!cS) throw DataError(a.strata + ": neyman allocation needs an S column");
        alloc = optimal_allocation(strata, a.n);
    } else if (a.method == "optimal") {
        if (!cS) throw DataError(a.strata + ": optimal allocation needs an S column");
        alloc = a.budget > 0.0 ? optimal_allocation_for_budget(strata, a.budget, a.fixed_cost)
                               : optimal_allocation(strata, a.n);
    } else if (a.method == "power") {
        alloc = power_allocation(strata, a.alpha, a.n);
    } else {
        throw UsageError("unknown allocation method '" + a.method + "'");
    }
    if (g.out == "csv") {
        out << "stratum,n,capped\n";
        for (std::size_t h = 0; h < alloc.n.size(); ++h)
            out << h << ',' << alloc.n[h] << ',' << (alloc.capped[h] ? 1 : 0) << '\n';
        return;
    }
    std::vector<bool> capped(alloc.capped.begin(), alloc.capped.end());
    write_json(out, {{"method", a.method},
                     {"n", alloc.n},
                     {"total", std::accumulate(alloc.n.begin(), alloc.n.end(), 0)},
                     {"variance", alloc.variance},
                     {"capped", capped}});
}

// ------------------------------------------------------------ calibrate

struct CalibrateArgs {
    std::string constraints;
    std::string targets;
    std::string entropy = "squared";
    std::string form = "anchored";
    bool debias = false;
    double debias_target = std::nan("");
};

void run_calibrate(const CalibrateArgs& a, const Globals& g, std::ostream& out) {
    if (a.constraints.empty() || a.targets.empty()) throw UsageError("--constraints and --targets are required");
    const Table t = read_table(a.constraints);
    const auto cd = t.require({"d", "weight"});
    const auto cv = t.column("v");
    std::vector<std::size_t> zcols;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < t.header.size(); ++j)
        if (j != cd && (!cv || j != *cv)) {
            zcols.push_back(j);
            names.push_back(t.header[j]);
        }
    CalibrationProblem p;
    p.entropy = EntropySpec::parse(a.entropy);
    if (a.form == "anchored") p.form = CalibrationForm::anchored;
    else if (a.form == "divergence") p.form = CalibrationForm::divergence;
    else if (a.form == "free") p.form = CalibrationForm::free;
    else throw UsageError("unknown calibration form '" + a.form + "'");
    p.z.resize(t.rows.size(), zcols.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        p.d.push_back(t.number(r, cd));
        if (cv) p.v.push_back(t.number(r, *cv));
        for (std::size_t j = 0; j < zcols.size(); ++j) p.z(r, j) = t.number(r, zcols[j]);
    }
    const auto totals = read_totals(a.targets);
    p.targets.resize(names.size());
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto it = totals.find(names[j]);
        if (it == totals.end()) throw DataError(a.targets + ": no target for '" + names[j] + "'");
        p.targets(j) = it->second;
    }
    if (a.debias) {
        if (std::isnan(a.debias_target)) throw UsageError("--debias needs --debias-target");
        p.debias_target = a.debias_target;
    }
    const auto r = p.entropy.kind() == EntropyKind::squared && p.form == CalibrationForm::anchored && !a.debias
                       ? solve_chi_square(p)
                       : solve_entropy(p);
    if (g.out == "csv") {
        out << "row,weight\n";
        for (std::size_t i = 0; i < r.weights.size(); ++i) out << i << ',' << fmt(r.weights[i]) << '\n';
        return;
    }
    write_json(out, {{"entropy", p.entropy.name()},
                     {"form", a.form},
                     {"lambda", std::vector<double>(r.lambda.data(), r.lambda.data() + r.lambda.size())},
                     {"residual", r.residual},
                     {"iterations", r.iterations},
                     {"weights", r.weights},
                     {"flags", r.flags}});
}

// -------------------------------------------------------------- diagnose

struct DiagnoseArgs {
    std::string clusters;
    double M = 0.0;
    double rho = std::nan("");
    double n = 0.0;
    double deff = 0.0;
    double margin = 0.0;
    double S2 = std::nan("");
    double alpha = 0.05;
    double N = 0.0;
};

void run_diagnose(const DiagnoseArgs& a, const Globals& g, std::ostream& out) {
    json j = json::object();
    if (!a.clusters.empty()) {
        const Table t = read_table(a.clusters);
        const auto cc = t.require({"cluster"});
        const auto cy = t.require({"y"});
        std::vector<std::string> order;
        std::map<std::string, std::vector<double>> groups;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const auto& label = t.rows[r][cc];
            if (!groups.count(label)) order.push_back(label);
            groups[label].push_back(t.number(r, cy));
        }
        std::vector<std::vector<double>> clusters;
        for (const auto& l : order) clusters.push_back(groups[l]);
        const auto an = anova(clusters);
        j["anova"] = {{"SST", an.SST}, {"SSB", an.SSB}, {"SSW", an.SSW},     {"Sb2", an.Sb2},
                      {"Sw2", an.Sw2}, {"S2", an.S2},   {"rho", an.rho},     {"delta", an.delta},
                      {"C_star", an.C_star}, {"mean_size", an.mean_size}, {"equal_sizes", an.equal_sizes}};
        j["deff"] = design_effect(an);
    }
    std::optional<double> deff;
    if (a.M > 0.0 && !std::isnan(a.rho)) {
        deff = design_effect(a.M, a.rho);
        j["deff"] = *deff;
    }
    if (a.deff > 0.0) deff = a.deff;
    if (a.n > 0.0 && deff) j["effective_sample_size"] = effective_sample_size(a.n, *deff);
    if (a.margin > 0.0) {
        if (!std::isnan(a.S2)) j["srs_sample_size"] = srs_sample_size(a.S2, a.margin, a.alpha, a.N);
        const double n_star = conservative_sample_size(a.margin);
        j["conservative_sample_size"] = n_star;
        if (a.M > 0.0 && deff) j["required_clusters"] = required_clusters(n_star, *deff, a.M);
    }
    if (j.empty()) throw UsageError("nothing to compute: give --clusters, --M/--rho, --n/--deff or --margin");
    if (g.out == "csv") {
        out << "quantity,value\n";
        for (const auto& [k, v] : j.items())
            if (v.is_number()) out << k << ',' << fmt(v.get<double>()) << '\n';
        return;
    }
    write_json(out, j);
}

// ----------------------------------------------------------- nonresponse

struct NonresponseArgs {
    std::string data;
    std::string method = "ps";
    std::string entropy = "empirical_likelihood";
    bool no_intercept = false;
};

void run_nonresponse(const NonresponseArgs& a, const Globals& g, std::ostream& out) {
    if (a.data.empty()) throw UsageError("--data is required");
    const Table t = read_table(a.data);
    const auto cdelta = t.require({"delta"});
    const auto cy = t.require({"y"});
    const auto cw = t.column("weight"), cpi = t.column("pi");
    if (!cw && !cpi) throw DataError(a.data + ": need a 'weight' or 'pi' column");
    std::vector<std::size_t> xcols;
    for (std::size_t j = 0; j < t.header.size(); ++j)
        if (t.header[j].size() > 1 && t.header[j][0] == 'x') xcols.push_back(j);
    const std::size_t k = xcols.size() + (a.no_intercept ? 0 : 1);
    if (k == 0) throw UsageError("no covariates: add x columns or drop --no-intercept");
    Sample s;
    s.design_tag = "file";
    ResponseData d;
    d.x.resize(t.rows.size(), k);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Selection sel;
        sel.unit = r;
        sel.pi = cpi ? t.number(r, *cpi) : 1.0 / t.number(r, *cw);
        if (!(sel.pi > 0.0 && sel.pi <= 1.0)) throw DataError(a.data + ": row " + std::to_string(r + 2) + ": bad weight");
        s.units.push_back(sel);
        d.delta.push_back(static_cast<int>(t.number(r, cdelta)));
        d.y.push_back(d.delta.back() ? t.number(r, cy) : std::nan(""));
        std::size_t col = 0;
        if (!a.no_intercept) d.x(r, col++) = 1.0;
        for (auto j : xcols) d.x(r, col++) = t.number(r, j);
    }
    json j;
    j["method"] = a.method;
    std::vector<double> weights;
    if (a.method == "ps" || a.method == "gec") {
        const auto fit = fit_propensity(s, d);
        j["phi"] = std::vector<double>(fit.phi.data(), fit.phi.data() + fit.phi.size());
        j["iterations"] = fit.iterations;
        if (a.method == "ps") {
            const auto e = ps_estimator(s, d, fit.p);
            j["estimate"] = estimate_json(e);
        } else {
            const auto r = gec_nonresponse(s, d, fit.p, EntropySpec::parse(a.entropy));
            weights = r.weights;
            j["residual"] = r.residual;
        }
    } else if (a.method == "nwa") {
        weights = nwa_regression_weights(s, d);
    } else {
        throw UsageError("unknown nonresponse method '" + a.method + "'");
    }
    if (!weights.empty()) {
        double total = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i)
            if (d.delta[i]) total += weights[i] * d.y[i];
        Estimate e;
        e.method = a.method;
        e.value = total;
        j["estimate"] = estimate_json(e);
        j["weights"] = weights;
    }
    if (g.out == "csv") {
        out << "value\n" << fmt(j["estimate"]["value"].get<double>()) << '\n';
        return;
    }
    write_json(out, j);
}

// ------------------------------------------------------------ smallarea

struct SmallAreaArgs {
    std::string areas;
    int bootstrap = 0;
    bool no_intercept = false;
};

void run_smallarea(const SmallAreaArgs& a, const Globals& g, std::ostream& out) {
    if (a.areas.empty()) throw UsageError("--areas is required");
    const Table t = read_table(a.areas);
    const auto cg = t.require({"ghat"});
    const auto cv = t.require({"vg"});
    std::vector<std::size_t> xcols;
    for (std::size_t j = 0; j < t.header.size(); ++j)
        if (t.header[j].size() > 1 && t.header[j][0] == 'x') xcols.push_back(j);
    const std::size_t k = xcols.size() + (a.no_intercept ? 0 : 1);
    AreaData data;
    data.X.resize(t.rows.size(), k);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        data.direct.push_back(t.number(r, cg));
        data.V.push_back(t.number(r, cv));
        std::size_t col = 0;
        if (!a.no_intercept) data.X(r, col++) = 1.0;
        for (auto j : xcols) data.X(r, col++) = t.number(r, j);
    }
    const auto model = fit_fay_herriot(data);
    std::vector<double> boot;
    if (a.bootstrap > 0) boot = bootstrap_mse(model, a.bootstrap, g.seed);
    const auto id = t.column("area");
    if (g.out == "csv") {
        out << "area,direct,eblup,alpha,mse_pr" << (boot.empty() ? "" : ",mse_boot") << '\n';
        for (std::size_t r = 0; r < model.areas(); ++r) {
            const auto e = eblup(model, r);
            out << (id ? t.rows[r][*id] : std::to_string(r)) << ',' << fmt(data.direct[r]) << ',' << fmt(e.value)
                << ',' << fmt(model.alpha[r]) << ',' << fmt(*e.variance);
            if (!boot.empty()) out << ',' << fmt(boot[r]);
            out << '\n';
        }
        return;
    }
    json areas = json::array();
    for (std::size_t r = 0; r < model.areas(); ++r) {
        const auto e = eblup(model, r);
        json j = {{"area", id ? t.rows[r][*id] : std::to_string(r)},
                  {"direct", data.direct[r]},
                  {"eblup", e.value},
                  {"synthetic", model.synthetic(r)},
                  {"alpha", model.alpha[r]},
                  {"mse_pr", *e.variance}};
        if (!boot.empty()) j["mse_boot"] = boot[r];
        areas.push_back(j);
    }
    write_json(out, {{"sigma2_u", model.sigma2_u},
                     {"beta", std::vector<double>(model.beta.data(), model.beta.data() + model.beta.size())},
                     {"boundary", model.boundary},
                     {"iterations", model.iterations},
                     {"areas", areas}});
}

// ------------------------------------------------------------- simulate

struct SimulateArgs {
    DesignArgs design;
    std::string estimator = "ht";
    std::string y = "y";
    std::size_t replicates = 100000;
    bool exact = false;
};

void run_simulate(const SimulateArgs& a, const Globals& g, std::ostream& out) {
    const Frame frame = load_frame(g);
    const Design design = resolve_design(a.design);
    const auto ypop = frame_values(frame, a.y);
    double truth = std::accumulate(ypop.begin(), ypop.end(), 0.0);
    SampleStatistic stat;
    if (a.estimator == "ht") {
        stat = [&](const Sample& s) { return ht_total(s, sample_values(s, frame, a.y)).value; };
    } else if (a.estimator == "hajek") {
        truth /= static_cast<double>(frame.size());
        stat = [&](const Sample& s) { return hajek_mean(s, sample_values(s, frame, a.y)).value; };
    } else {
        throw UsageError("simulate supports --estimator ht or hajek");
    }
    json j;
    j["truth"] = truth;
    if (a.exact) {
        const auto m = exact_expectation(design, frame, stat);
        j["mean"] = m.mean;
        j["var"] = m.variance;
        j["support_size"] = m.support_size;
        j["z_score"] = nullptr;
        j["exact"] = true;
    } else {
        const auto m = monte_carlo(design, frame, stat, a.replicates, g.seed);
        j["mean"] = m.mean[0];
        j["var"] = m.variance[0];
        j["se_of_mean"] = m.se_of_mean[0];
        j["z_score"] = m.se_of_mean[0] > 0.0 ? json((m.mean[0] - truth) / m.se_of_mean[0]) : json(nullptr);
        j["replicates"] = m.replicates;
        j["seed"] = m.seed;
        j["exact"] = false;
    }
    if (g.out == "csv") {
        out << "mean,var,truth\n" << fmt(j["mean"].get<double>()) << ',' << fmt(j["var"].get<double>()) << ','
            << fmt(truth) << '\n';
        return;
    }
    write_json(out, j);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Design-based survey sampling toolkit", "survey"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--frame", g.frame, "Frame CSV");
    app.add_option("--seed", g.seed, "Random seed");
    app.add_option("--out", g.out, "Output format")->check(CLI::IsMember({"json", "csv"}));

    DesignArgs draw_args;
    auto* draw_cmd = app.add_subcommand("draw", "Draw a sample");
    add_design_options(draw_cmd, draw_args);

    AllocateArgs alloc_args;
    auto* alloc_cmd = app.add_subcommand("allocate", "Allocate a sample to strata");
    alloc_cmd->add_option("--strata", alloc_args.strata, "Strata CSV with columns N, S, c");
    alloc_cmd->add_option("--method", alloc_args.method, "proportional, neyman, optimal, power");
    alloc_cmd->add_option("--n", alloc_args.n, "Total sample size");
    alloc_cmd->add_option("--budget", alloc_args.budget, "Budget for cost-optimal allocation");
    alloc_cmd->add_option("--fixed-cost", alloc_args.fixed_cost, "Fixed cost c0");
    alloc_cmd->add_option("--power-alpha", alloc_args.alpha, "Exponent for power allocation");

    EstimateArgs est_args;
    auto* est_cmd = app.add_subcommand("estimate", "Point estimate with its default variance");
    add_estimate_options(est_cmd, est_args);

    EstimateArgs var_args;
    auto* var_cmd = app.add_subcommand("variance", "Variance estimation");
    add_estimate_options(var_cmd, var_args);
    var_cmd->add_option("--variance-method", var_args.variance_method, "simplified, ht, syg, hh, jackknife, brr")
        ->check(CLI::IsMember({"simplified", "ht", "syg", "hh", "jackknife", "brr"}));
    var_cmd->add_option("--replicates", var_args.replicates, "Number of jackknife groups (grouped jackknife)");

    CalibrateArgs cal_args;
    auto* cal_cmd = app.add_subcommand("calibrate", "Generalized entropy calibration");
    cal_cmd->add_option("--constraints", cal_args.constraints, "CSV with d, optional v, and constraint columns");
    cal_cmd->add_option("--targets", cal_args.targets, "CSV with columns name,total");
    cal_cmd->add_option("--entropy", cal_args.entropy, "Entropy name, e.g. squared, el, renyi:0.5");
    cal_cmd->add_option("--form", cal_args.form, "anchored, divergence, free");
    cal_cmd->add_flag("--debias", cal_args.debias, "Add the g(d)·v debiasing constraint");
    cal_cmd->add_option("--debias-target", cal_args.debias_target, "Population total of g(d)·v");

    DiagnoseArgs diag_args;
    auto* diag_cmd = app.add_subcommand("diagnose", "ANOVA, design effects and sample sizes");
    diag_cmd->add_option("--clusters", diag_args.clusters, "CSV with columns cluster,y");
    diag_cmd->add_option("--M", diag_args.M, "Cluster size");
    diag_cmd->add_option("--rho", diag_args.rho, "Intracluster correlation");
    diag_cmd->add_option("--n", diag_args.n, "Actual sample size");
    diag_cmd->add_option("--deff", diag_args.deff, "Design effect");
    diag_cmd->add_option("--margin", diag_args.margin, "Margin of error d");
    diag_cmd->add_option("--S2", diag_args.S2, "Population variance for the SRS sample size");
    diag_cmd->add_option("--alpha", diag_args.alpha, "Significance level");
    diag_cmd->add_option("--N", diag_args.N, "Population size");

    NonresponseArgs nr_args;
    auto* nr_cmd = app.add_subcommand("nonresponse", "Propensity and calibration nonresponse adjustment");
    nr_cmd->add_option("--data", nr_args.data, "CSV with weight or pi, delta, y, x1..xk");
    nr_cmd->add_option("--method", nr_args.method, "ps, nwa, gec");
    nr_cmd->add_option("--entropy", nr_args.entropy, "Entropy for gec");
    nr_cmd->add_flag("--no-intercept", nr_args.no_intercept, "Do not add a constant covariate");

    SmallAreaArgs sa_args;
    auto* sa_cmd = app.add_subcommand("smallarea", "Fay-Herriot EBLUP and MSE");
    sa_cmd->add_option("--areas", sa_args.areas, "CSV with ghat, vg, x1..xk");
    sa_cmd->add_option("--bootstrap", sa_args.bootstrap, "Parametric bootstrap replicates");
    sa_cmd->add_flag("--no-intercept", sa_args.no_intercept, "Do not add a constant covariate");

    SimulateArgs sim_args;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo or exact design expectation");
    add_design_options(sim_cmd, sim_args.design);
    sim_cmd->add_option("--estimator", sim_args.estimator, "ht or hajek");
    sim_cmd->add_option("--y", sim_args.y, "Study variable");
    sim_cmd->add_option("--replicates", sim_args.replicates, "Monte Carlo replicates");
    sim_cmd->add_flag("--exact", sim_args.exact, "Enumerate the design instead of simulating");

    for (auto* cmd : app.get_subcommands({})) cmd->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return usage_error;
    }

    try {
        if (draw_cmd->parsed()) {
            const Frame frame = load_frame(g);
            const Design d = resolve_design(draw_args);
            RngStream rng(g.seed);
            print_sample(out, g, frame, d, draw(d, frame, rng));
        } else if (alloc_cmd->parsed()) {
            run_allocate(alloc_args, g, out);
        } else if (est_cmd->parsed()) {
            const Frame frame = load_frame(g);
            const Sample s = obtain_sample(est_args, g, frame);
            print_estimate(out, g, compute_estimate(est_args, s, frame));
        } else if (var_cmd->parsed()) {
            const Frame frame = load_frame(g);
            const Sample s = obtain_sample(var_args, g, frame);
            print_estimate(out, g, compute_variance(var_args, s, frame));
        } else if (cal_cmd->parsed()) {
            run_calibrate(cal_args, g, out);
        } else if (diag_cmd->parsed()) {
            run_diagnose(diag_args, g, out);
        } else if (nr_cmd->parsed()) {
            run_nonresponse(nr_args, g, out);
        } else if (sa_cmd->parsed()) {
            run_smallarea(sa_args, g, out);
        } else if (sim_cmd->parsed()) {
            run_simulate(sim_args, g, out);
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return usage_error;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return numerical_error;
    }
    return ok;
}

}  // namespace survey::cli
