#include "fabsched/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fabsched/rng.hpp"

namespace fabsched {

using nlohmann::json;

std::string_view to_string(Priority p) {
    switch (p) {
    case Priority::regular:
        return "regular";
    case Priority::hot:
        return "hot";
    case Priority::super_hot:
        return "super_hot";
    }
    return "regular";
}

std::optional<Priority> priority_from_string(std::string_view s) {
    for (Priority p : kAllPriorities) {
        if (to_string(p) == s) return p;
    }
    return std::nullopt;
}

std::string to_string(const LotType& t) {
    return std::string(to_string(t.priority)) + "-" + std::to_string(t.product);
}

std::optional<LotType> lot_type_from_string(std::string_view s) {
    const auto dash = s.rfind('-');
    if (dash == std::string_view::npos) return std::nullopt;
    const auto pr = priority_from_string(s.substr(0, dash));
    const auto digits = s.substr(dash + 1);
    if (!pr || digits.empty() || digits.find_first_not_of("0123456789") != std::string_view::npos) return std::nullopt;
    return LotType{static_cast<ProductId>(std::stoi(std::string(digits))), *pr};
}

Minutes Product::raw_processing_time() const { return remaining_work(0); }

Minutes Product::remaining_work(std::size_t step) const {
    Minutes sum = 0;
    for (std::size_t i = step; i < route.size(); ++i) sum += route[i].mean_proc_time;
    return sum;
}

int Scenario::machine_count() const {
    int n = 0;
    for (const auto& g : tool_groups) n += g.machine_count;
    return n;
}

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

constexpr std::array<std::string_view, 6> kRuleNames{"fifo", "cr", "spt", "srpt", "edd", "ls"};

std::string_view dedication_name(Dedication d) {
    switch (d) {
    case Dedication::bind:
        return "bind";
    case Dedication::reuse:
        return "reuse";
    case Dedication::none:
        break;
    }
    return "none";
}

}  // namespace

ScenarioValidationError::ScenarioValidationError(std::vector<std::string> violations)
    : std::runtime_error("scenario validation failed: " + join(violations, "; ")),
      violations_(std::move(violations)) {}

std::vector<std::string> validate(const Scenario& s) {
    std::vector<std::string> v;
    auto add = [&v](std::string where, const std::string& what) { v.push_back(where + ": " + what); };

    const int F = s.family_count();
    if (F == 0) add("families", "at least one family required");
    for (int i = 0; i < F; ++i) {
        if (s.families[static_cast<std::size_t>(i)].family_id != i) {
            add("families[" + std::to_string(i) + "]", "family_id must equal its index");
        }
    }

    const int G = static_cast<int>(s.tool_groups.size());
    if (G == 0) add("tool_groups", "at least one tool group required");
    for (int gi = 0; gi < G; ++gi) {
        const auto& g = s.tool_groups[static_cast<std::size_t>(gi)];
        const std::string where = "tool_groups[" + std::to_string(gi) + "] '" + g.name + "'";
        if (g.group_id != gi) add(where, "group_id must equal its index");
        if (g.family_id < 0 || g.family_id >= F) add(where, "unknown family " + std::to_string(g.family_id));
        if (g.machine_count < 1) add(where, "machine_count must be positive");
        if (g.batch_min < 1) add(where, "batch_min must be positive");
        if (g.batch_min > g.batch_max) {
            add(where, "batch_min " + std::to_string(g.batch_min) + " > batch_max " +
                           std::to_string(g.batch_max));
        }
        if (g.load_time < 0 || g.unload_time < 0) add(where, "load/unload time must be >= 0");
        const auto n = g.setups.size();
        if (g.changeover.size() != n) {
            add(where, "changeover matrix must be " + std::to_string(n) + "x" + std::to_string(n));
        } else {
            for (std::size_t a = 0; a < n; ++a) {
                if (g.changeover[a].size() != n) {
                    add(where + " changeover[" + std::to_string(a) + "]", "row has wrong length");
                    continue;
                }
                for (std::size_t b = 0; b < n; ++b) {
                    if (g.changeover[a][b] < 0) {
                        add(where + " changeover[" + std::to_string(a) + "][" + std::to_string(b) + "]",
                            "negative duration");
                    }
                }
            }
        }
        if (g.mtbf_mean.has_value() != g.mttr_mean.has_value()) {
            add(where, "mtbf and mttr must be given together");
        } else if (g.mtbf_mean && (!(*g.mtbf_mean > 0) || !(*g.mttr_mean > 0))) {
            add(where, "mtbf and mttr must be positive");
        }
        if (g.maintenance_period.has_value() != g.maintenance_duration.has_value()) {
            add(where, "maintenance period and duration must be given together");
        } else if (g.maintenance_period &&
                   (*g.maintenance_duration <= 0 || *g.maintenance_period <= *g.maintenance_duration)) {
            add(where, "maintenance requires 0 < duration < period");
        }
    }

    for (std::size_t pi = 0; pi < s.products.size(); ++pi) {
        const auto& p = s.products[pi];
        const std::string where = "products[" + std::to_string(pi) + "] '" + p.name + "'";
        if (p.product_id != static_cast<ProductId>(pi)) add(where, "product_id must equal its index");
        if (p.route.empty()) add(where, "route must have at least one step");
        if (!(p.release_rate >= 0) || !std::isfinite(p.release_rate)) add(where, "release_rate must be >= 0");
        double mix = 0.0;
        for (double q : p.priority_mix) {
            if (!(q >= 0)) add(where, "priority_mix entries must be >= 0");
            mix += q;
        }
        if (std::abs(mix - 1.0) > 1e-9) add(where, "priority_mix sums to " + std::to_string(mix) + ", not 1");
        if (!(p.flow_factor > 1.0)) add(where, "flow_factor must exceed 1");
        if (p.wafer_min < 1 || p.wafer_max < p.wafer_min) add(where, "invalid wafer_count range");

        for (std::size_t k = 0; k < p.route.size(); ++k) {
            const auto& st = p.route[k];
            const std::string sw = where + " route[" + std::to_string(k) + "]";
            if (st.group_id < 0 || st.group_id >= G) {
                add(sw, "unknown tool group " + std::to_string(st.group_id));
                continue;
            }
            const auto& g = s.tool_groups[static_cast<std::size_t>(st.group_id)];
            if (st.mean_proc_time <= 0) add(sw, "mean_proc_time must be positive");
            if (st.setup_id && (*st.setup_id < 0 || *st.setup_id >= static_cast<SetupId>(g.setups.size()))) {
                add(sw, "setup " + std::to_string(*st.setup_id) + " not defined on group '" + g.name + "'");
            }
            if (st.force_resetup && !st.setup_id) add(sw, "force_resetup requires a setup");
            if (!(st.skip_probability >= 0.0 && st.skip_probability <= 1.0)) {
                add(sw, "skip_probability must lie in [0,1]");
            }
            if (st.skip_probability > 0.0 && !st.metrology) add(sw, "only metrology steps may be skipped");
            if (st.cqt_limit_to_next) {
                if (*st.cqt_limit_to_next <= 0) add(sw, "cqt limit must be positive");
                if (k + 1 == p.route.size()) add(sw, "cqt limit on the final step has no successor");
            }
            if (st.dedication == Dedication::reuse) {
                bool bound = false;
                for (std::size_t j = 0; j < k; ++j) {
                    if (p.route[j].dedication == Dedication::bind && p.route[j].group_id == st.group_id) {
                        bound = true;
                    }
                }
                if (!bound) add(sw, "reuse step without an earlier bind step on the same group");
            }
        }
    }

    if (static_cast<int>(s.transport_delay.size()) != F) {
        add("transport_delay", "matrix must be " + std::to_string(F) + "x" + std::to_string(F));
    } else {
        for (int a = 0; a < F; ++a) {
            const auto& row = s.transport_delay[static_cast<std::size_t>(a)];
            if (static_cast<int>(row.size()) != F) {
                add("transport_delay[" + std::to_string(a) + "]", "row has wrong length");
                continue;
            }
            for (int b = 0; b < F; ++b) {
                if (row[static_cast<std::size_t>(b)] < 0) {
                    add("transport_delay[" + std::to_string(a) + "][" + std::to_string(b) + "]",
                        "negative delay");
                }
            }
        }
    }

    for (Priority p : kAllPriorities) {
        if (!(s.priority_weights[p] > 0)) {
            add("priority_weights." + std::string(to_string(p)), "weight must be positive");
        }
    }
    if (!(s.penalty > 0)) add("penalty", "must be positive");
    if (s.initial_wip < 0) add("initial_wip", "must be >= 0");
    if (std::find(kRuleNames.begin(), kRuleNames.end(), s.default_rule) == kRuleNames.end()) {
        add("default_rule", "unknown rule '" + s.default_rule + "'");
    }
    return v;
}

namespace {

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        throw ScenarioParseError(where + ": missing field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ScenarioParseError(where + "." + key + ": " + e.what());
    }
}

template <typename T>
T optional_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return required<T>(j, key, where);
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return required<T>(j, key, where);
}

Dedication parse_dedication(const std::string& s, const std::string& where) {
    if (s == "none") return Dedication::none;
    if (s == "bind") return Dedication::bind;
    if (s == "reuse") return Dedication::reuse;
    throw ScenarioParseError(where + ": unknown dedication '" + s + "'");
}

json group_to_json(const ToolGroup& g) {
    json j{{"id", g.group_id},         {"family", g.family_id},       {"name", g.name},
           {"machines", g.machine_count}, {"setups", g.setups},       {"changeover", g.changeover},
           {"batch_min", g.batch_min},  {"batch_max", g.batch_max},   {"load_time", g.load_time},
           {"unload_time", g.unload_time}};
    if (g.mtbf_mean) j["mtbf"] = *g.mtbf_mean;
    if (g.mttr_mean) j["mttr"] = *g.mttr_mean;
    if (g.maintenance_period) j["maintenance_period"] = *g.maintenance_period;
    if (g.maintenance_duration) j["maintenance_duration"] = *g.maintenance_duration;
    return j;
}

json step_to_json(const RouteStep& st) {
    json j{{"group", st.group_id}, {"proc_time", st.mean_proc_time}};
    if (st.per_wafer) j["per_wafer"] = true;
    if (st.setup_id) j["setup"] = *st.setup_id;
    if (st.force_resetup) j["force_resetup"] = true;
    if (st.cqt_limit_to_next) j["cqt_limit"] = *st.cqt_limit_to_next;
    if (st.metrology) j["metrology"] = true;
    if (st.skip_probability > 0) j["skip_probability"] = st.skip_probability;
    if (st.dedication != Dedication::none) j["dedication"] = std::string(dedication_name(st.dedication));
    return j;
}

json priority_map(const std::array<double, 3>& values) {
    json j = json::object();
    for (Priority p : kAllPriorities) j[std::string(to_string(p))] = values[static_cast<std::size_t>(rank(p))];
    return j;
}

std::array<double, 3> parse_priority_map(const json& j, const std::string& where) {
    std::array<double, 3> out{};
    if (!j.is_object()) throw ScenarioParseError(where + ": expected an object keyed by priority class");
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto p = priority_from_string(it.key());
        if (!p) throw ScenarioParseError(where + ": unknown priority class '" + it.key() + "'");
        if (!it.value().is_number()) throw ScenarioParseError(where + "." + it.key() + ": expected a number");
        out[static_cast<std::size_t>(rank(*p))] = it.value().get<double>();
    }
    return out;
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["schema_version"] = kScenarioSchemaVersion;
    j["name"] = s.name;
    json fams = json::array();
    for (const auto& f : s.families) fams.push_back({{"id", f.family_id}, {"name", f.name}});
    j["families"] = fams;
    json groups = json::array();
    for (const auto& g : s.tool_groups) groups.push_back(group_to_json(g));
    j["tool_groups"] = groups;
    json prods = json::array();
    for (const auto& p : s.products) {
        json route = json::array();
        for (const auto& st : p.route) route.push_back(step_to_json(st));
        prods.push_back({{"id", p.product_id},
                         {"name", p.name},
                         {"release_rate", p.release_rate},
                         {"priority_mix", priority_map(p.priority_mix)},
                         {"flow_factor", p.flow_factor},
                         {"wafers", {p.wafer_min, p.wafer_max}},
                         {"route", route}});
    }
    j["products"] = prods;
    j["transport_delay"] = s.transport_delay;
    j["priority_weights"] = priority_map(s.priority_weights.values);
    j["penalty"] = s.penalty;
    j["initial_wip"] = s.initial_wip;
    j["default_rule"] = s.default_rule;
    return j;
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioParseError(std::string("malformed scenario document: ") + e.what());
    }
    if (!j.is_object()) throw ScenarioParseError("scenario document must be a single object");
    const int version = required<int>(j, "schema_version", "scenario");
    if (version != kScenarioSchemaVersion) {
        throw ScenarioParseError("unsupported schema_version " + std::to_string(version));
    }

    Scenario s;
    s.name = optional_or<std::string>(j, "name", "", "scenario");
    for (const auto& f : required<json>(j, "families", "scenario")) {
        s.families.push_back({required<FamilyId>(f, "id", "families[]"), optional_or<std::string>(f, "name", "", "families[]")});
    }
    const auto groups = required<json>(j, "tool_groups", "scenario");
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& gj = groups[i];
        const std::string where = "tool_groups[" + std::to_string(i) + "]";
        ToolGroup g;
        g.group_id = required<GroupId>(gj, "id", where);
        g.family_id = required<FamilyId>(gj, "family", where);
        g.name = optional_or<std::string>(gj, "name", "", where);
        g.machine_count = required<int>(gj, "machines", where);
        g.setups = optional_or<std::vector<std::string>>(gj, "setups", {}, where);
        g.changeover = optional_or<std::vector<std::vector<Minutes>>>(gj, "changeover", {}, where);
        g.batch_min = optional_or<int>(gj, "batch_min", 1, where);
        g.batch_max = optional_or<int>(gj, "batch_max", 1, where);
        g.load_time = optional_or<Minutes>(gj, "load_time", 0, where);
        g.unload_time = optional_or<Minutes>(gj, "unload_time", 0, where);
        g.mtbf_mean = optional_field<double>(gj, "mtbf", where);
        g.mttr_mean = optional_field<double>(gj, "mttr", where);
        g.maintenance_period = optional_field<Minutes>(gj, "maintenance_period", where);
        g.maintenance_duration = optional_field<Minutes>(gj, "maintenance_duration", where);
        s.tool_groups.push_back(std::move(g));
    }
    const auto prods = required<json>(j, "products", "scenario");
    for (std::size_t i = 0; i < prods.size(); ++i) {
        const auto& pj = prods[i];
        const std::string where = "products[" + std::to_string(i) + "]";
        Product p;
        p.product_id = required<ProductId>(pj, "id", where);
        p.name = optional_or<std::string>(pj, "name", "", where);
        p.release_rate = required<double>(pj, "release_rate", where);
        p.priority_mix = parse_priority_map(required<json>(pj, "priority_mix", where), where + ".priority_mix");
        p.flow_factor = required<double>(pj, "flow_factor", where);
        const auto wafers = optional_or<std::vector<int>>(pj, "wafers", {kNominalWafers, kNominalWafers}, where);
        if (wafers.size() != 2) throw ScenarioParseError(where + ".wafers: expected [min, max]");
        p.wafer_min = wafers[0];
        p.wafer_max = wafers[1];
        const auto route = required<json>(pj, "route", where);
        for (std::size_t k = 0; k < route.size(); ++k) {
            const auto& sj = route[k];
            const std::string sw = where + ".route[" + std::to_string(k) + "]";
            RouteStep st;
            st.group_id = required<GroupId>(sj, "group", sw);
            st.mean_proc_time = required<Minutes>(sj, "proc_time", sw);
            st.per_wafer = optional_or<bool>(sj, "per_wafer", false, sw);
            st.setup_id = optional_field<SetupId>(sj, "setup", sw);
            st.force_resetup = optional_or<bool>(sj, "force_resetup", false, sw);
            st.cqt_limit_to_next = optional_field<Minutes>(sj, "cqt_limit", sw);
            st.metrology = optional_or<bool>(sj, "metrology", false, sw);
            st.skip_probability = optional_or<double>(sj, "skip_probability", 0.0, sw);
            st.dedication = parse_dedication(optional_or<std::string>(sj, "dedication", "none", sw), sw);
            p.route.push_back(st);
        }
        s.products.push_back(std::move(p));
    }
    s.transport_delay = required<std::vector<std::vector<Minutes>>>(j, "transport_delay", "scenario");
    if (j.contains("priority_weights")) {
        s.priority_weights.values = parse_priority_map(j.at("priority_weights"), "priority_weights");
    }
    s.penalty = optional_or<double>(j, "penalty", 10.0, "scenario");
    s.initial_wip = optional_or<int>(j, "initial_wip", 0, "scenario");
    s.default_rule = optional_or<std::string>(j, "default_rule", "fifo", "scenario");
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioParseError("cannot open scenario file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    Scenario s = parse_scenario(buf.str());
    if (auto violations = validate(s); !violations.empty()) {
        throw ScenarioValidationError(std::move(violations));
    }
    return s;
}

std::string scenario_to_string(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scenario file " + path.string());
    out << scenario_to_string(s);
}

std::uint64_t scenario_hash(const Scenario& s) { return fnv1a64(scenario_to_json(s).dump()); }

namespace {

enum class GroupRole { litho, batch, etch, metrology, generic };

const char* role_name(GroupRole r) {
    switch (r) {
    case GroupRole::litho:
        return "litho";
    case GroupRole::batch:
        return "diffusion";
    case GroupRole::etch:
        return "etch";
    case GroupRole::metrology:
        return "metrology";
    case GroupRole::generic:
        break;
    }
    return "implant";
}

}  // namespace

Scenario generate_minifab(const GeneratorConfig& cfg) {
    if (cfg.families < 1 || cfg.groups_per_family < 1 || cfg.products < 1) {
        throw std::invalid_argument("generate_minifab: families, groups_per_family and products must be >= 1");
    }
    if (cfg.route_length < kMinGeneratedRouteLength) {
        throw std::invalid_argument("generate_minifab: route_length " + std::to_string(cfg.route_length) +
                                    " cannot hold the mandated step kinds (need >= " +
                                    std::to_string(kMinGeneratedRouteLength) + ")");
    }
    CounterStream rng(cfg.seed, "generator");
    Scenario s;
    s.name = "minifab-gen-" + std::to_string(cfg.seed);
    s.initial_wip = cfg.initial_wip;

    const int F = cfg.families;
    const int G = F * cfg.groups_per_family;
    for (int f = 0; f < F; ++f) {
        s.families.push_back({f, std::string("F") + std::to_string(f) + "-" + role_name(static_cast<GroupRole>(std::min(f, 4)))});
    }

    // The first group of family k (k < 4) carries role k; everything else is generic.
    // With fewer than four families, roles fold onto later groups or share a group.
    auto first_group_of = [&](int role) {
        if (role < F) return role * cfg.groups_per_family;
        return std::min(G - 1, role % G);
    };
    const GroupId litho = first_group_of(0);
    const GroupId batch = first_group_of(1);
    const GroupId etch = first_group_of(2);
    const GroupId metro = first_group_of(3);

    const int setup_count = std::min(cfg.products, 3) + 1;
    for (int gi = 0; gi < G; ++gi) {
        ToolGroup g;
        g.group_id = gi;
        g.family_id = gi / cfg.groups_per_family;
        GroupRole role = GroupRole::generic;
        if (gi == litho) role = GroupRole::litho;
        else if (gi == batch) role = GroupRole::batch;
        else if (gi == etch) role = GroupRole::etch;
        else if (gi == metro) role = GroupRole::metrology;
        g.name = std::string(role_name(role)) + "-" + std::to_string(gi);
        g.load_time = rng.uniform_int(1, 5);
        g.unload_time = rng.uniform_int(1, 5);
        if (gi == litho || rng.bernoulli(0.25)) {
            for (int k = 0; k < setup_count; ++k) g.setups.push_back("S" + std::to_string(k));
            g.changeover.assign(static_cast<std::size_t>(setup_count),
                                std::vector<Minutes>(static_cast<std::size_t>(setup_count), 0));
            for (int a = 0; a < setup_count; ++a) {
                for (int b = 0; b < setup_count; ++b) {
                    g.changeover[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                        a == b ? rng.uniform_int(5, 10) : rng.uniform_int(15, 45);
                }
            }
        }
        if (gi == batch) {
            g.batch_min = 2;
            g.batch_max = 4;
        }
        if (rng.bernoulli(0.5)) {
            g.mtbf_mean = static_cast<double>(rng.uniform_int(4000, 12000));
            g.mttr_mean = static_cast<double>(rng.uniform_int(60, 240));
        }
        if (rng.bernoulli(0.3)) {
            g.maintenance_period = 7 * kMinutesPerDay;
            g.maintenance_duration = rng.uniform_int(120, 360);
        }
        s.tool_groups.push_back(std::move(g));
    }

    auto proc_time_for = [&](GroupId gid) -> Minutes {
        if (gid == batch) return rng.uniform_int(180, 300);
        if (gid == litho) return rng.uniform_int(30, 60);
        if (gid == metro) return rng.uniform_int(10, 25);
        if (gid == etch) return rng.uniform_int(20, 50);
        return rng.uniform_int(15, 60);
    };

    const int L = cfg.route_length;
    auto slot = [L](int j) { return static_cast<int>(std::lround(static_cast<double>(j) * L / 6.0)); };
    const int bind_at = slot(0);
    const int cqt_at = slot(1);
    const int batch_at = slot(2);
    const int reuse_at = slot(3);
    const int metro_at = slot(4);

    for (int pi = 0; pi < cfg.products; ++pi) {
        Product p;
        p.product_id = pi;
        p.name = "P" + std::to_string(pi);
        p.release_rate = cfg.lots_per_day / cfg.products;
        p.priority_mix = {0.8, 0.15, 0.05};
        p.flow_factor = cfg.flow_factor;
        p.wafer_min = 15;
        p.wafer_max = kNominalWafers;
        const SetupId product_setup = pi % setup_count;
        for (int k = 0; k < L; ++k) {
            RouteStep st;
            if (k == bind_at || k == reuse_at) {
                st.group_id = litho;
                st.dedication = k == bind_at ? Dedication::bind : Dedication::reuse;
            } else if (k == cqt_at) {
                st.group_id = etch;
                st.cqt_limit_to_next = rng.uniform_int(120, 360);
            } else if (k == batch_at) {
                st.group_id = batch;
            } else if (k == metro_at) {
                st.group_id = metro;
                st.metrology = true;
                st.skip_probability = 0.5;
            } else {
                st.group_id = static_cast<GroupId>(rng.uniform_int(0, G - 1));
                st.metrology = st.group_id == metro;
            }
            const auto& g = s.tool_groups[static_cast<std::size_t>(st.group_id)];
            st.mean_proc_time = proc_time_for(st.group_id);
            st.per_wafer = st.group_id == litho;
            if (!g.setups.empty()) {
                st.setup_id = st.group_id == litho ? product_setup
                                                   : static_cast<SetupId>(rng.uniform_int(0, setup_count - 1));
            }
            p.route.push_back(st);
        }
        s.products.push_back(std::move(p));
    }

    // Size each group so its expected load hits the target utilization.
    std::vector<double> load(static_cast<std::size_t>(G), 0.0);
    for (const auto& p : s.products) {
        for (const auto& st : p.route) {
            const auto& g = s.tool_groups[static_cast<std::size_t>(st.group_id)];
            double per_visit = static_cast<double>(st.mean_proc_time + g.load_time + g.unload_time);
            if (st.setup_id) per_visit += 10.0;
            per_visit *= 1.0 - st.skip_probability;
            per_visit /= 0.5 * (g.batch_min + g.batch_max);
            load[static_cast<std::size_t>(st.group_id)] += p.release_rate * per_visit;
        }
    }
    for (int gi = 0; gi < G; ++gi) {
        auto& g = s.tool_groups[static_cast<std::size_t>(gi)];
        double availability = 1.0;
        if (g.mtbf_mean) availability *= *g.mtbf_mean / (*g.mtbf_mean + *g.mttr_mean);
        if (g.maintenance_period) {
            availability *= 1.0 - static_cast<double>(*g.maintenance_duration) / static_cast<double>(*g.maintenance_period);
        }
        const double capacity = cfg.target_utilization * kMinutesPerDay * availability;
        g.machine_count = std::max(1, static_cast<int>(std::ceil(load[static_cast<std::size_t>(gi)] / capacity)));
    }

    s.transport_delay.assign(static_cast<std::size_t>(F), std::vector<Minutes>(static_cast<std::size_t>(F), 0));
    for (int a = 0; a < F; ++a) {
        for (int b = 0; b < F; ++b) {
            s.transport_delay[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
                a == b ? 2 : rng.uniform_int(5, 15);
        }
    }
    return s;
}

}  // namespace fabsched
