#include "fabsched/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "fabsched/dispatch.hpp"
#include "fabsched/sim.hpp"

namespace fabsched {

void BenchmarkConfig::check() const {
    if (dispatchers.empty()) throw std::invalid_argument("benchmark needs at least one dispatcher");
    if (seeds < 1) throw std::invalid_argument("benchmark seed count must be at least 1");
    if (horizon < 0) throw std::invalid_argument("benchmark horizon must be non-negative");
    for (const auto& d : dispatchers) {
        if (d.find_first_of(",\n") != std::string::npos) {
            throw std::invalid_argument("dispatcher name '" + d + "' contains a comma or newline");
        }
    }
}

std::vector<std::uint64_t> BenchmarkConfig::seed_list() const {
    std::vector<std::uint64_t> out;
    for (int k = 0; k < seeds; ++k) out.push_back(base_seed + static_cast<std::uint64_t>(k));
    return out;
}

namespace {

double median(std::vector<std::int64_t> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return static_cast<double>(*mid);
    const auto lower = *std::max_element(v.begin(), mid);
    return 0.5 * static_cast<double>(lower + *mid);
}

struct Moments {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
    std::int64_t n = 0;
};

Moments moments(const std::vector<double>& xs) {
    Moments m;
    m.n = static_cast<std::int64_t>(xs.size());
    if (xs.empty()) return m;
    double sum = 0;
    for (double x : xs) sum += x;
    m.mean = sum / static_cast<double>(xs.size());
    double sq = 0;
    for (double x : xs) sq += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(sq / static_cast<double>(xs.size()));
    return m;
}

std::string num(double x) {
    if (std::isnan(x)) return "NA";
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

double parse_num(const std::string& s) {
    if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::runtime_error("bad number '" + s + "' in report file");
    return v;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Rows of a CSV file after checking its header.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const char* header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != header) {
        throw std::runtime_error(path.string() + ": expected header '" + header + "'");
    }
    const std::size_t width = split(header).size();
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != width) {
            throw std::runtime_error(path.string() + ": row has " + std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(width));
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

LotType parse_type(const std::string& s) {
    const auto t = lot_type_from_string(s);
    if (!t) throw std::runtime_error("bad lot type '" + s + "' in report file");
    return *t;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string pm(double mean, double sd, int precision) {
    if (std::isnan(mean)) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << mean << " +- " << (std::isnan(sd) ? 0.0 : sd);
    return os.str();
}

}  // namespace

AggregateReport run_benchmark(const Scenario& s, const BenchmarkConfig& cfg) {
    cfg.check();
    std::vector<std::unique_ptr<Dispatcher>> dispatchers;
    for (const auto& name : cfg.dispatchers) dispatchers.push_back(make_dispatcher(name, cfg.normalizer));
    const auto seeds = cfg.seed_list();
    const ObjectiveConfig objective = ObjectiveConfig::from(s);

    const std::size_t cells = dispatchers.size() * seeds.size();
    std::vector<RunRecord> runs(cells);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t c = next++; c < cells; c = next++) {
            try {
                const std::size_t d = c / seeds.size();
                RunOptions opts;
                opts.trace_level = TraceLevel::outcomes;
                opts.time_decisions = true;
                const RunResult r = run(s, seeds[c % seeds.size()], *dispatchers[d], cfg.horizon, opts);
                const KpiReport k = evaluate_run(r.state, r.trace, objective);
                RunRecord& rec = runs[c];
                rec.dispatcher = cfg.dispatchers[d];
                rec.seed = seeds[c % seeds.size()];
                rec.cost = k.cost;
                rec.cqt_violations = k.cqt_violations;
                rec.decisions = static_cast<std::int64_t>(r.decision_ns.size());
                rec.median_decision_us = median(r.decision_ns) / 1000.0;
                rec.kpis = k.rows;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int workers = std::clamp(cfg.threads > 0 ? cfg.threads : hw, 1, static_cast<int>(cells));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return aggregate(std::move(runs));
}

AggregateReport aggregate(std::vector<RunRecord> runs) {
    AggregateReport r;
    std::vector<std::string> order;
    for (const auto& run : runs) {
        if (std::find(order.begin(), order.end(), run.dispatcher) == order.end()) order.push_back(run.dispatcher);
    }
    auto rank_of = [&](const std::string& d) { return std::find(order.begin(), order.end(), d) - order.begin(); };
    std::stable_sort(runs.begin(), runs.end(), [&](const RunRecord& a, const RunRecord& b) {
        return std::pair(rank_of(a.dispatcher), a.seed) < std::pair(rank_of(b.dispatcher), b.seed);
    });

    for (const auto& d : order) {
        std::vector<double> cost, finished, wip;
        std::vector<std::int64_t> latency_ns;
        std::map<LotType, std::pair<std::vector<double>, std::vector<double>>> per_type;
        for (const auto& run : runs) {
            if (run.dispatcher != d) continue;
            cost.push_back(run.cost.total);
            finished.push_back(run.cost.finished);
            wip.push_back(run.cost.wip);
            latency_ns.push_back(std::llround(run.median_decision_us * 1000.0));
            for (const auto& k : run.kpis) {
                auto& [on_time, cycle] = per_type[k.type];
                if (!std::isnan(k.on_time_pct)) on_time.push_back(k.on_time_pct);
                if (!std::isnan(k.mean_cycle_days)) cycle.push_back(k.mean_cycle_days);
            }
        }
        const Moments c = moments(cost);
        r.costs.push_back({d, c.mean, c.std, moments(finished).mean, moments(wip).mean, c.n, median(latency_ns) / 1000.0});
        for (const auto& [type, samples] : per_type) {
            const Moments on = moments(samples.first);
            const Moments cy = moments(samples.second);
            r.types.push_back({d, type, on.mean, on.std, cy.mean, cy.std, on.n});
        }
    }
    r.runs = std::move(runs);
    return r;
}

void write_report(const AggregateReport& r, const std::filesystem::path& dir, const Scenario* s) {
    std::filesystem::create_directories(dir);
    std::ostringstream kpis, cost, runs, run_kpis;
    kpis << kKpiCsvHeader << '\n';
    for (const auto& t : r.types) {
        kpis << t.dispatcher << ',' << to_string(t.type) << ',' << num(t.on_time_mean) << ',' << num(t.on_time_std)
             << ',' << num(t.cycle_mean) << ',' << num(t.cycle_std) << ',' << t.count << '\n';
    }
    cost << kCostCsvHeader << '\n';
    for (const auto& c : r.costs) {
        cost << c.dispatcher << ',' << num(c.cost_mean) << ',' << num(c.cost_std) << ',' << num(c.finished_mean) << ','
             << num(c.wip_mean) << ',' << c.seeds << ',' << num(c.median_decision_us) << '\n';
    }
    runs << kRunsCsvHeader << '\n';
    run_kpis << kRunKpisCsvHeader << '\n';
    for (const auto& run : r.runs) {
        runs << run.dispatcher << ',' << run.seed << ',' << num(run.cost.total) << ',' << num(run.cost.finished) << ','
             << num(run.cost.wip) << ',' << run.cqt_violations << ',' << run.decisions << ','
             << num(run.median_decision_us) << '\n';
        for (const auto& k : run.kpis) {
            run_kpis << run.dispatcher << ',' << run.seed << ',' << to_string(k.type) << ',' << num(k.on_time_pct) << ','
                     << num(k.mean_cycle_days) << ',' << k.count << '\n';
        }
    }
    write_file(dir / "kpis.csv", kpis.str());
    write_file(dir / "cost.csv", cost.str());
    write_file(dir / "runs.csv", runs.str());
    write_file(dir / "run_kpis.csv", run_kpis.str());
    write_file(dir / "report.txt", format_report(r, s));
}

AggregateReport read_report(const std::filesystem::path& dir) {
    AggregateReport r;
    for (const auto& row : read_csv(dir / "kpis.csv", kKpiCsvHeader)) {
        r.types.push_back({row[0], parse_type(row[1]), parse_num(row[2]), parse_num(row[3]), parse_num(row[4]),
                           parse_num(row[5]), std::stoll(row[6])});
    }
    for (const auto& row : read_csv(dir / "cost.csv", kCostCsvHeader)) {
        r.costs.push_back({row[0], parse_num(row[1]), parse_num(row[2]), parse_num(row[3]), parse_num(row[4]),
                           std::stoll(row[5]), parse_num(row[6])});
    }
    std::map<std::pair<std::string, std::uint64_t>, std::size_t> index;
    for (const auto& row : read_csv(dir / "runs.csv", kRunsCsvHeader)) {
        RunRecord rec;
        rec.dispatcher = row[0];
        rec.seed = std::stoull(row[1]);
        rec.cost = {parse_num(row[3]), parse_num(row[4]), parse_num(row[2])};
        rec.cqt_violations = std::stoll(row[5]);
        rec.decisions = std::stoll(row[6]);
        rec.median_decision_us = parse_num(row[7]);
        index[{rec.dispatcher, rec.seed}] = r.runs.size();
        r.runs.push_back(std::move(rec));
    }
    for (const auto& row : read_csv(dir / "run_kpis.csv", kRunKpisCsvHeader)) {
        const auto it = index.find({row[0], std::stoull(row[1])});
        if (it == index.end()) throw std::runtime_error("run_kpis.csv names a run missing from runs.csv");
        r.runs[it->second].kpis.push_back({parse_type(row[2]), std::stoll(row[5]), parse_num(row[3]), parse_num(row[4])});
    }
    return r;
}

std::string format_report(const AggregateReport& r, const Scenario* s) {
    std::vector<std::string> dispatchers;
    for (const auto& c : r.costs) dispatchers.push_back(c.dispatcher);
    std::map<std::pair<LotType, std::string>, const TypeAggregate*> cell;
    std::map<Priority, std::vector<ProductId>> products;
    for (const auto& t : r.types) {
        cell[{t.type, t.dispatcher}] = &t;
        auto& list = products[t.type.priority];
        if (std::find(list.begin(), list.end(), t.type.product) == list.end()) list.push_back(t.type.product);
    }

    constexpr int kLabel = 18;
    constexpr int kCol = 36;
    std::ostringstream os;
    os << std::left << std::setw(kLabel) << "lot type";
    for (const auto& d : dispatchers) os << std::setw(kCol) << d;
    os << '\n' << std::setw(kLabel) << "";
    for (std::size_t i = 0; i < dispatchers.size(); ++i) os << std::setw(kCol) << "on-time %    | cycle time (days)";
    os << '\n';
    for (Priority pr : {Priority::super_hot, Priority::hot, Priority::regular}) {
        auto it = products.find(pr);
        if (it == products.end()) continue;
        std::sort(it->second.begin(), it->second.end());
        os << to_string(pr) << '\n';
        for (ProductId p : it->second) {
            std::string label = "  ";
            if (s && p >= 0 && static_cast<std::size_t>(p) < s->products.size()) {
                label += s->products[static_cast<std::size_t>(p)].name;
            } else {
                label += "product " + std::to_string(p);
            }
            os << std::setw(kLabel) << label;
            for (const auto& d : dispatchers) {
                const auto found = cell.find({LotType{p, pr}, d});
                std::string text = "-";
                if (found != cell.end()) {
                    text = pm(found->second->on_time_mean, found->second->on_time_std, 1) + " | " +
                           pm(found->second->cycle_mean, found->second->cycle_std, 2);
                }
                os << std::setw(kCol) << text;
            }
            os << '\n';
        }
    }
    os << '\n' << std::setw(kLabel) << "cost";
    for (const auto& c : r.costs) os << std::setw(kCol) << pm(c.cost_mean, c.cost_std, 2);
    os << '\n' << std::setw(kLabel) << "seeds";
    for (const auto& c : r.costs) os << std::setw(kCol) << c.seeds;
    os << '\n' << std::setw(kLabel) << "decision (us)";
    for (const auto& c : r.costs) {
        std::ostringstream v;
        v << std::fixed << std::setprecision(1) << c.median_decision_us;
        os << std::setw(kCol) << v.str();
    }
    os << '\n';
    return os.str();
}

std::string report_json(const AggregateReport& r) {
    auto jnum = [](double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); };
    nlohmann::json costs = nlohmann::json::array();
    for (const auto& c : r.costs) {
        costs.push_back({{"dispatcher", c.dispatcher},
                         {"cost_mean", jnum(c.cost_mean)},
                         {"cost_std", jnum(c.cost_std)},
                         {"finished_mean", jnum(c.finished_mean)},
                         {"wip_mean", jnum(c.wip_mean)},
                         {"seeds", c.seeds},
                         {"median_decision_us", jnum(c.median_decision_us)}});
    }
    nlohmann::json types = nlohmann::json::array();
    for (const auto& t : r.types) {
        types.push_back({{"dispatcher", t.dispatcher},
                         {"lot_type", to_string(t.type)},
                         {"on_time_mean", jnum(t.on_time_mean)},
                         {"on_time_std", jnum(t.on_time_std)},
                         {"cycle_mean", jnum(t.cycle_mean)},
                         {"cycle_std", jnum(t.cycle_std)},
                         {"count", t.count}});
    }
    return nlohmann::json{{"costs", costs}, {"types", types}}.dump(2) + "\n";
}

}  // namespace fabsched
