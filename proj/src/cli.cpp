#include "fabsched/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fabsched/dispatch.hpp"
#include "fabsched/harness.hpp"
#include "fabsched/nes.hpp"
#include "fabsched/objective.hpp"
#include "fabsched/scenario.hpp"
#include "fabsched/sim.hpp"
#include "fabsched/ssl.hpp"

namespace fabsched {

namespace {

namespace fs = std::filesystem;

Minutes days(double d) { return static_cast<Minutes>(std::llround(d * static_cast<double>(kMinutesPerDay))); }

/// Options every subcommand shares.
struct Common {
    std::uint64_t seed = 0;
    std::optional<double> horizon_days;
    bool json = false;

    void attach(CLI::App* app, const std::string& horizon_help = {}) {
        app->add_option("--seed", seed, "Random seed");
        if (!horizon_help.empty()) {
            app->add_option("--horizon-days", horizon_days, horizon_help)->check(CLI::NonNegativeNumber);
        }
        app->add_flag("--json", json, "Structured output");
    }
    Minutes horizon(double fallback_days) const { return days(horizon_days.value_or(fallback_days)); }
};

std::optional<Normalizer> maybe_normalizer(const std::string& path) {
    if (path.empty()) return std::nullopt;
    return load_normalizer(path);
}

void print_kpis(std::ostream& out, const KpiReport& k) {
    out << std::left << std::setw(16) << "lot type" << std::setw(12) << "on-time %" << std::setw(14) << "cycle (days)"
        << "finished\n";
    for (const auto& row : k.rows) {
        auto fmt = [](double x, int p) {
            if (std::isnan(x)) return std::string("-");
            std::ostringstream os;
            os << std::fixed << std::setprecision(p) << x;
            return os.str();
        };
        out << std::setw(16) << to_string(row.type) << std::setw(12) << fmt(row.on_time_pct, 1) << std::setw(14)
            << fmt(row.mean_cycle_days, 2) << row.count << '\n';
    }
    out << "cost " << k.cost.total << " (finished " << k.cost.finished << ", wip " << k.cost.wip << "), cqt violations "
        << k.cqt_violations << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fab dispatching simulator, policy trainer and benchmark harness", "fabsched"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Write a generated desk-scale fab scenario");
    Common gen_c;
    gen_c.attach(gen);
    GeneratorConfig gcfg;
    std::string gen_out;
    gen->add_option("--out", gen_out, "Scenario file to write")->required();
    gen->add_option("--families", gcfg.families)->check(CLI::PositiveNumber);
    gen->add_option("--groups-per-family", gcfg.groups_per_family)->check(CLI::PositiveNumber);
    gen->add_option("--products", gcfg.products)->check(CLI::PositiveNumber);
    gen->add_option("--route-length", gcfg.route_length);
    gen->add_option("--utilization", gcfg.target_utilization);
    gen->add_option("--lots-per-day", gcfg.lots_per_day);
    gen->add_option("--flow-factor", gcfg.flow_factor);
    gen->add_option("--initial-wip", gcfg.initial_wip);

    // validate
    auto* val = app.add_subcommand("validate", "Check a scenario file; violations go to standard error");
    Common val_c;
    val_c.attach(val);
    std::string val_path;
    val->add_option("--scenario", val_path)->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run one rollout and print its KPIs");
    Common sim_c;
    sim_c.attach(sim, "Simulated days (default 180)");
    std::string sim_path, sim_dispatcher, sim_trace, sim_norm;
    sim->add_option("--scenario", sim_path)->required();
    sim->add_option("--dispatcher", sim_dispatcher, "Heuristic name or agent:<params file> (default: scenario rule)");
    sim->add_option("--trace-out", sim_trace, "Write the event trace as JSON lines");
    sim->add_option("--normalizer", sim_norm, "Normalizer for agent files without one");

    // fit-normalizer
    auto* fit = app.add_subcommand("fit-normalizer", "Fit feature normalization on a heuristic rollout");
    Common fit_c;
    fit_c.attach(fit, "Rollout days (default 60)");
    std::string fit_path, fit_out, fit_dispatcher;
    fit->add_option("--scenario", fit_path)->required();
    fit->add_option("--out", fit_out)->required();
    fit->add_option("--dispatcher", fit_dispatcher, "Heuristic for the rollout (default: scenario rule)");

    // train-ssl
    auto* ssl = app.add_subcommand("train-ssl", "Pretrain the tool-family encoding");
    Common ssl_c;
    ssl_c.attach(ssl, "Dataset rollout days (default 60)");
    std::string ssl_path, ssl_out, ssl_norm, ssl_cache, ssl_dispatcher;
    std::optional<std::uint64_t> ssl_heldout;
    std::uint64_t ssl_init_seed = 0;
    SslConfig scfg;
    ssl->add_option("--scenario", ssl_path)->required();
    ssl->add_option("--out", ssl_out, "Parameter file to write")->required();
    ssl->add_option("--normalizer", ssl_norm, "Normalizer file (fitted on the fly when absent)");
    ssl->add_option("--dispatcher", ssl_dispatcher, "Heuristic that drives dataset collection (default: scenario rule)");
    ssl->add_option("--cache-dir", ssl_cache, "Dataset cache directory");
    ssl->add_option("--heldout-seed", ssl_heldout, "Report accuracy on a dataset from this seed");
    ssl->add_option("--init-seed", ssl_init_seed, "Weight initialization seed");
    ssl->add_option("--lambda", scfg.lambda)->check(CLI::NonNegativeNumber);
    ssl->add_option("--lr", scfg.learning_rate);
    ssl->add_option("--epochs", scfg.max_epochs)->check(CLI::NonNegativeNumber);

    // train-nes
    auto* nes = app.add_subcommand("train-nes", "Train the dispatching policy with evolution strategies");
    Common nes_c;
    nes_c.attach(nes, "Training rollout days (default 180)");
    std::string nes_path, nes_params, nes_out, nes_history, nes_ckpt;
    NesConfig ncfg;
    nes->add_option("--scenario", nes_path)->required();
    nes->add_option("--ssl-params", nes_params, "Pretrained parameter file with a normalizer")->required();
    nes->add_option("--out", nes_out)->required();
    nes->add_option("--history", nes_history, "Training history CSV");
    nes->add_option("--checkpoint-dir", nes_ckpt, "Write parameters after every iteration");
    nes->add_option("--population", ncfg.population);
    nes->add_option("--iterations", ncfg.iterations);
    nes->add_option("--sigma", ncfg.sigma);
    nes->add_option("--sigma-decay", ncfg.sigma_decay);
    nes->add_option("--lr-max", ncfg.lr_max);
    nes->add_option("--eval-seed", ncfg.eval_seed);
    nes->add_option("--threads", ncfg.threads);
    nes->add_flag("--antithetic", ncfg.antithetic);
    nes->add_flag("--raw-fitness", "Use raw fitness instead of centered ranks");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Benchmark dispatchers over paired seeds");
    Common ev_c;
    ev_c.attach(ev, "Simulated days (default 180)");
    std::string ev_path, ev_out, ev_norm;
    BenchmarkConfig bcfg;
    ev->add_option("--scenario", ev_path)->required();
    ev->add_option("--dispatchers", bcfg.dispatchers, "Comma-separated dispatcher names")->delimiter(',')->required();
    ev->add_option("--seeds", bcfg.seeds, "Seeds per dispatcher")->check(CLI::PositiveNumber);
    ev->add_option("--out", ev_out, "Report directory");
    ev->add_option("--normalizer", ev_norm, "Normalizer for agent files without one");
    ev->add_option("--threads", bcfg.threads);

    // report
    auto* rep = app.add_subcommand("report", "Print a report directory written by evaluate");
    Common rep_c;
    rep_c.attach(rep);
    std::string rep_dir, rep_scenario;
    rep->add_option("--in", rep_dir)->required();
    rep->add_option("--scenario", rep_scenario, "Scenario for product names");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (gen->parsed()) {
            gcfg.seed = gen_c.seed;
            const Scenario s = generate_minifab(gcfg);
            save_scenario(s, gen_out);
            if (gen_c.json) {
                out << nlohmann::json{{"path", gen_out}, {"machines", s.machine_count()}, {"hash", scenario_hash(s)}}.dump()
                    << '\n';
            } else {
                out << "wrote " << gen_out << " (" << s.machine_count() << " machines, " << s.products.size()
                    << " products)\n";
            }
        } else if (val->parsed()) {
            const Scenario s = load_scenario(val_path);  // throws ScenarioValidationError with every violation
            if (val_c.json) {
                out << nlohmann::json{{"valid", true}, {"hash", scenario_hash(s)}}.dump() << '\n';
            } else {
                out << val_path << ": valid (" << s.machine_count() << " machines, " << s.products.size()
                    << " products)\n";
            }
        } else if (sim->parsed()) {
            const Scenario s = load_scenario(sim_path);
            const auto d = make_dispatcher(sim_dispatcher.empty() ? s.default_rule : sim_dispatcher,
                                           maybe_normalizer(sim_norm));
            RunOptions opts;
            opts.trace_level = sim_trace.empty() ? TraceLevel::outcomes : TraceLevel::full;
            const RunResult r = run(s, sim_c.seed, *d, sim_c.horizon(180), opts);
            if (!sim_trace.empty()) write_trace(r.trace, sim_trace);
            const KpiReport k = evaluate_run(r.state, r.trace, ObjectiveConfig::from(s));
            if (sim_c.json) {
                out << kpi_summary_json(k);
            } else {
                print_kpis(out, k);
            }
        } else if (fit->parsed()) {
            const Scenario s = load_scenario(fit_path);
            const auto heuristic = make_dispatcher(fit_dispatcher.empty() ? s.default_rule : fit_dispatcher);
            const Normalizer n = fit_normalizer(s, *heuristic, fit_c.horizon(60), fit_c.seed);
            save_normalizer(n, fit_out);
            out << "wrote " << fit_out << '\n';
        } else if (ssl->parsed()) {
            const Scenario s = load_scenario(ssl_path);
            const auto heuristic = make_dispatcher(ssl_dispatcher.empty() ? s.default_rule : ssl_dispatcher);
            const Normalizer n = ssl_norm.empty() ? fit_normalizer(s, *heuristic, kNormalizerHorizon, ssl_c.seed)
                                                  : load_normalizer(ssl_norm);
            const Minutes horizon = ssl_c.horizon(60);
            auto collect = [&](std::uint64_t seed) {
                return ssl_cache.empty() ? collect_dataset(s, *heuristic, n, horizon, seed)
                                         : collect_dataset_cached(ssl_cache, s, *heuristic, n, horizon, seed);
            };
            const PretextDataset d = collect(ssl_c.seed);
            scfg.shuffle_seed = ssl_c.seed;
            const PretextResult r = train_pretext(d, init_params(ssl_init_seed, s.family_count()), scfg);
            save_params(ssl_out, r.downstream, n);
            nlohmann::json j{{"batches", d.size()},
                             {"epochs", r.epoch_loss.size()},
                             {"final_loss", r.epoch_loss.back()},
                             {"train_accuracy", pretext_accuracy(r.pretext, d)}};
            if (ssl_heldout) j["heldout_accuracy"] = pretext_accuracy(r.pretext, collect(*ssl_heldout));
            if (ssl_c.json) {
                out << j.dump(2) << '\n';
            } else {
                out << "pretext: " << d.size() << " batches, " << r.epoch_loss.size() << " epochs, loss "
                    << r.epoch_loss.back() << ", train accuracy " << j["train_accuracy"].get<double>();
                if (ssl_heldout) out << ", held-out accuracy " << j["heldout_accuracy"].get<double>();
                out << "\nwrote " << ssl_out << '\n';
            }
        } else if (nes->parsed()) {
            const Scenario s = load_scenario(nes_path);
            const ParamsFile pf = load_params(nes_params);
            if (!pf.normalizer) throw std::runtime_error(nes_params + " carries no normalizer");
            ncfg.master_seed = nes_c.seed;
            ncfg.horizon = nes_c.horizon(180);
            if (nes->count("--raw-fitness") > 0) ncfg.shaping = FitnessShaping::raw;
            if (!nes_ckpt.empty()) fs::create_directories(nes_ckpt);
            const TrainResult r = train(s, pf.params, *pf.normalizer, ncfg, [&](const NesHistoryRow& row, const PolicyParams& p) {
                if (!nes_ckpt.empty()) {
                    std::ostringstream name;
                    name << "iter_" << std::setw(4) << std::setfill('0') << row.iteration << ".json";
                    save_params(fs::path(nes_ckpt) / name.str(), p, pf.normalizer);
                }
                if (!nes_c.json) {
                    out << "iteration " << row.iteration << ": center cost " << -row.center_fitness << ", mean "
                        << -row.mean_fitness << ", best " << -row.max_fitness << std::endl;
                }
            });
            save_params(nes_out, r.params, pf.normalizer);
            if (!nes_history.empty()) {
                std::ofstream h(nes_history);
                if (!h) throw std::runtime_error("cannot write " + nes_history);
                h << history_csv(r.history);
            }
            if (nes_c.json) {
                out << nlohmann::json{{"final_center_cost", r.final_center_cost}, {"iterations", r.history.size()}}.dump()
                    << '\n';
            } else {
                out << "final center cost " << r.final_center_cost << "\nwrote " << nes_out << '\n';
            }
        } else if (ev->parsed()) {
            const Scenario s = load_scenario(ev_path);
            bcfg.base_seed = ev_c.seed;
            bcfg.horizon = ev_c.horizon(180);
            bcfg.normalizer = maybe_normalizer(ev_norm);
            const AggregateReport r = run_benchmark(s, bcfg);
            if (!ev_out.empty()) write_report(r, ev_out, &s);
            out << (ev_c.json ? report_json(r) : format_report(r, &s));
        } else if (rep->parsed()) {
            const AggregateReport r = read_report(rep_dir);
            std::optional<Scenario> s;
            if (!rep_scenario.empty()) s = load_scenario(rep_scenario);
            out << (rep_c.json ? report_json(r) : format_report(r, s ? &*s : nullptr));
        }
    } catch (const ScenarioValidationError& e) {
        for (const auto& v : e.violations()) err << v << '\n';
        return kExitValidation;
    } catch (const ScenarioParseError& e) {
        err << e.what() << '\n';
        return kExitValidation;
    } catch (const UnknownDispatcherError& e) {
        err << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace fabsched
