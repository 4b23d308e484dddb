#include "design_io.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "survey/error.hpp"

namespace survey::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw DataError("design schema error at " + path + ": " + msg);
}

void allow_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) fail(path, "expected an object");
    const std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& [k, _] : obj.items())
        if (!known.count(k)) fail(path, "unknown field '" + k + "'");
}

int get_int(const json& obj, const std::string& path, const char* key, bool required = true, int fallback = 0) {
    if (!obj.contains(key)) {
        if (required) fail(path, std::string("missing field '") + key + "'");
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
    return v.get<int>();
}

double get_double(const json& obj, const std::string& path, const char* key, bool required = true,
                  double fallback = 0.0) {
    if (!obj.contains(key)) {
        if (required) fail(path, std::string("missing field '") + key + "'");
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_number()) fail(path + "." + key, "expected a number");
    return v.get<double>();
}

std::vector<double> get_doubles(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return {};
    const auto& v = obj.at(key);
    if (!v.is_array()) fail(path + "." + key, "expected an array");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) fail(path + "." + key, "expected numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

const std::pair<SrsMethod, const char*> kSrsMethods[] = {{SrsMethod::draw_by_draw, "draw_by_draw"},
                                                         {SrsMethod::selection_rejection, "selection_rejection"},
                                                         {SrsMethod::reservoir, "reservoir"},
                                                         {SrsMethod::random_sort, "random_sort"}};
const std::pair<PpsMethod, const char*> kPpsMethods[] = {{PpsMethod::cumulative, "cumulative"},
                                                         {PpsMethod::lahiri, "lahiri"}};

template <class E, std::size_t K>
E parse_enum(const json& obj, const std::string& path, const char* key, const std::pair<E, const char*> (&table)[K],
             E fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) fail(path + "." + key, "expected a string");
    const auto s = obj.at(key).get<std::string>();
    for (const auto& [e, name] : table)
        if (s == name) return e;
    fail(path + "." + key, "unknown value '" + s + "'");
}

template <class E, std::size_t K>
const char* enum_name(E e, const std::pair<E, const char*> (&table)[K]) {
    for (const auto& [v, name] : table)
        if (v == e) return name;
    return "?";
}

Design parse(const json& doc, const std::string& path);

Phase2Rule parse_rule(const json& doc, const std::string& path) {
    if (!doc.is_object() || doc.size() != 1) fail(path, "expected an object with exactly one rule key");
    const auto it = doc.begin();
    const std::string key = it.key();
    const json& body = it.value();
    const std::string p = path + "." + key;
    if (key == "keep_all") {
        allow_keys(body, p, {});
        return KeepAll{};
    }
    if (key == "stratified_srs") {
        allow_keys(body, p, {"x", "cuts", "rates"});
        StratifiedSrsRule r;
        r.x = static_cast<std::size_t>(get_int(body, p, "x"));
        r.cuts = get_doubles(body, p, "cuts");
        r.rates = get_doubles(body, p, "rates");
        if (r.rates.size() != r.cuts.size() + 1) fail(p, "need one more rate than cut points");
        return r;
    }
    if (key == "poisson_pps") {
        allow_keys(body, p, {"x", "expected_size"});
        return PoissonPpsRule{static_cast<std::size_t>(get_int(body, p, "x")), get_int(body, p, "expected_size")};
    }
    fail(path, "unknown phase-2 rule '" + key + "'");
}

Design parse(const json& doc, const std::string& path) {
    if (!doc.is_object() || doc.size() != 1) fail(path, "expected an object with exactly one design key");
    const auto it = doc.begin();
    const std::string key = it.key();
    const json& body = it.value();
    const std::string p = path + "." + key;
    if (key == "srs") {
        allow_keys(body, p, {"n", "method"});
        return Srs{get_int(body, p, "n"), parse_enum(body, p, "method", kSrsMethods, SrsMethod::draw_by_draw)};
    }
    if (key == "srswr") {
        allow_keys(body, p, {"n"});
        return Srswr{get_int(body, p, "n")};
    }
    if (key == "bernoulli") {
        allow_keys(body, p, {"pi"});
        return Bernoulli{get_double(body, p, "pi")};
    }
    if (key == "poisson") {
        allow_keys(body, p, {"pi", "n"});
        Poisson d{get_doubles(body, p, "pi"), get_int(body, p, "n", false)};
        if (d.pi.empty() == (d.n == 0)) fail(p, "give exactly one of 'pi' or 'n'");
        return d;
    }
    if (key == "systematic") {
        allow_keys(body, p, {"n"});
        return Systematic{get_int(body, p, "n")};
    }
    if (key == "systematic_pips") {
        allow_keys(body, p, {"n"});
        return SystematicPips{get_int(body, p, "n")};
    }
    if (key == "ppswr") {
        allow_keys(body, p, {"n", "method", "lahiri_bound"});
        return Ppswr{get_int(body, p, "n"), parse_enum(body, p, "method", kPpsMethods, PpsMethod::cumulative),
                     get_double(body, p, "lahiri_bound", false)};
    }
    if (key == "brewer2") {
        allow_keys(body, p, {});
        return Brewer2{};
    }
    if (key == "durbin2") {
        allow_keys(body, p, {});
        return Durbin2{};
    }
    if (key == "chao") {
        allow_keys(body, p, {"n"});
        return Chao{get_int(body, p, "n")};
    }
    if (key == "rejective") {
        allow_keys(body, p, {"n", "working", "calibrate"});
        RejectivePoisson d{get_int(body, p, "n"), get_doubles(body, p, "working"), false};
        if (body.contains("calibrate")) {
            if (!body.at("calibrate").is_boolean()) fail(p + ".calibrate", "expected a boolean");
            d.calibrate = body.at("calibrate").get<bool>();
        }
        return d;
    }
    if (key == "explicit") {
        allow_keys(body, p, {"support"});
        if (!body.contains("support") || !body.at("support").is_array()) fail(p, "missing 'support' array");
        Explicit d;
        std::size_t i = 0;
        for (const auto& o : body.at("support")) {
            const std::string op = p + ".support[" + std::to_string(i++) + "]";
            allow_keys(o, op, {"units", "prob"});
            Outcome out;
            if (!o.contains("units") || !o.at("units").is_array()) fail(op, "missing 'units' array");
            for (const auto& u : o.at("units")) {
                if (!u.is_number_unsigned()) fail(op + ".units", "expected frame positions");
                out.units.push_back(u.get<std::size_t>());
            }
            out.prob = get_double(o, op, "prob");
            d.support.push_back(std::move(out));
        }
        return d;
    }
    if (key == "stratified") {
        allow_keys(body, p, {"strata"});
        if (!body.contains("strata") || !body.at("strata").is_array()) fail(p, "missing 'strata' array");
        Stratified d;
        std::size_t i = 0;
        for (const auto& s : body.at("strata")) {
            const std::string sp = p + ".strata[" + std::to_string(i++) + "]";
            allow_keys(s, sp, {"label", "design"});
            if (!s.contains("label") || !s.at("label").is_string()) fail(sp, "missing string 'label'");
            if (!s.contains("design")) fail(sp, "missing 'design'");
            d.strata.push_back(StratumDesign{s.at("label").get<std::string>(), parse(s.at("design"), sp + ".design")});
        }
        return d;
    }
    if (key == "cluster") {
        allow_keys(body, p, {"psu"});
        if (!body.contains("psu")) fail(p, "missing 'psu'");
        return OneStageCluster{parse(body.at("psu"), p + ".psu")};
    }
    if (key == "two_stage") {
        allow_keys(body, p, {"psu", "ssu"});
        if (!body.contains("psu") || !body.contains("ssu")) fail(p, "needs 'psu' and 'ssu'");
        return TwoStage{parse(body.at("psu"), p + ".psu"), parse(body.at("ssu"), p + ".ssu")};
    }
    if (key == "two_phase") {
        allow_keys(body, p, {"phase1", "phase2"});
        if (!body.contains("phase1")) fail(p, "missing 'phase1'");
        const Phase2Rule rule = body.contains("phase2") ? parse_rule(body.at("phase2"), p + ".phase2") : KeepAll{};
        return TwoPhase{parse(body.at("phase1"), p + ".phase1"), rule};
    }
    fail(path, "unknown design '" + key + "'");
}

json rule_to_json(const Phase2Rule& rule) {
    return std::visit(
        [](const auto& r) -> json {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, KeepAll>) {
                return {{"keep_all", json::object()}};
            } else if constexpr (std::is_same_v<T, StratifiedSrsRule>) {
                return {{"stratified_srs", {{"x", r.x}, {"cuts", r.cuts}, {"rates", r.rates}}}};
            } else {
                return {{"poisson_pps", {{"x", r.x}, {"expected_size", r.expected_size}}}};
            }
        },
        rule);
}

}  // namespace

Design design_from_json(const json& doc) {
    Design d = parse(doc, "design");
    validate_design(d);
    return d;
}

json design_to_json(const Design& design) {
    return std::visit(
        [](const auto& d) -> json {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Srs>) {
                return {{"srs", {{"n", d.n}, {"method", enum_name(d.method, kSrsMethods)}}}};
            } else if constexpr (std::is_same_v<T, Srswr>) {
                return {{"srswr", {{"n", d.n}}}};
            } else if constexpr (std::is_same_v<T, Bernoulli>) {
                return {{"bernoulli", {{"pi", d.pi}}}};
            } else if constexpr (std::is_same_v<T, Poisson>) {
                json body = json::object();
                if (d.n > 0) body["n"] = d.n;
                else body["pi"] = d.pi;
                return {{"poisson", body}};
            } else if constexpr (std::is_same_v<T, Systematic>) {
                return {{"systematic", {{"n", d.n}}}};
            } else if constexpr (std::is_same_v<T, SystematicPips>) {
                return {{"systematic_pips", {{"n", d.n}}}};
            } else if constexpr (std::is_same_v<T, Ppswr>) {
                return {{"ppswr",
                         {{"n", d.n}, {"method", enum_name(d.method, kPpsMethods)}, {"lahiri_bound", d.lahiri_bound}}}};
            } else if constexpr (std::is_same_v<T, Brewer2>) {
                return {{"brewer2", json::object()}};
            } else if constexpr (std::is_same_v<T, Durbin2>) {
                return {{"durbin2", json::object()}};
            } else if constexpr (std::is_same_v<T, Chao>) {
                return {{"chao", {{"n", d.n}}}};
            } else if constexpr (std::is_same_v<T, RejectivePoisson>) {
                json body = {{"n", d.n}, {"calibrate", d.calibrate}};
                if (!d.working.empty()) body["working"] = d.working;
                return {{"rejective", body}};
            } else if constexpr (std::is_same_v<T, Explicit>) {
                json support = json::array();
                for (const auto& o : d.support) support.push_back({{"units", o.units}, {"prob", o.prob}});
                return {{"explicit", {{"support", support}}}};
            } else if constexpr (std::is_same_v<T, Stratified>) {
                json strata = json::array();
                for (const auto& s : d.strata) strata.push_back({{"label", s.label}, {"design", design_to_json(*s.design)}});
                return {{"stratified", {{"strata", strata}}}};
            } else if constexpr (std::is_same_v<T, OneStageCluster>) {
                return {{"cluster", {{"psu", design_to_json(*d.psu)}}}};
            } else if constexpr (std::is_same_v<T, TwoStage>) {
                return {{"two_stage", {{"psu", design_to_json(*d.psu)}, {"ssu", design_to_json(*d.ssu)}}}};
            } else {
                return {{"two_phase", {{"phase1", design_to_json(*d.phase1)}, {"phase2", rule_to_json(d.rule)}}}};
            }
        },
        design.spec);
}

Design load_design(const std::string& path_or_json) {
    json doc;
    try {
        if (!path_or_json.empty() && path_or_json.front() == '{') {
            doc = json::parse(path_or_json);
        } else {
            std::ifstream in(path_or_json);
            if (!in) throw DataError("cannot open design file '" + path_or_json + "'");
            doc = json::parse(in);
        }
    } catch (const json::parse_error& e) {
        throw DataError(std::string("design is not valid JSON: ") + e.what());
    }
    return design_from_json(doc);
}

}  // namespace survey::cli
