// safelink: command-line front end for the E-Stop link simulator.
//
// Exit codes: 0 success, 1 usage or input error, 2 aborted experiment.

#include "safelink/calibration.hpp"
#include "safelink/channels.hpp"
#include "safelink/harness.hpp"
#include "safelink/power_gate.hpp"
#include "safelink/power_plane.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace
{

using namespace safelink;

constexpr int kExitUsage = 1;
constexpr int kExitAborted = 2;

std::uint64_t default_seed()
{
    if (const char* env = std::getenv("SAFELINK_SEED"); env != nullptr && *env != '\0')
    {
        try
        {
            return std::stoull(env);
        }
        catch (const std::exception&)
        {
            std::cerr << "warning: ignoring malformed SAFELINK_SEED '" << env << "'\n";
        }
    }
    return 1;
}

void write_output(const std::string& text, const std::string& path)
{
    if (path.empty() || path == "-")
    {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
    {
        throw std::runtime_error("cannot write " + path);
    }
    out << text;
}

std::vector<channels::ScenarioSpec> resolve_all(const std::vector<std::string>& names)
{
    std::vector<channels::ScenarioSpec> specs;
    for (const auto& n : names)
    {
        if (n == "all")
        {
            for (const auto s : channels::kAllScenarios)
            {
                specs.push_back(channels::preset(s));
            }
            continue;
        }
        specs.push_back(n == "ideal" ? channels::ideal_scenario() : channels::resolve_scenario(n));
    }
    return specs;
}

gate::GateConfig gate_from(const std::string& path)
{
    return path.empty() ? gate::GateConfig{} : gate::load_gate_config(path);
}

struct RunOptions
{
    std::vector<std::string> scenarios{"all"};
    std::size_t toggles = 1000;
    std::uint64_t seed = 1;
    std::string format = "json";
    std::string out;
    std::string measure = "both";
    std::string gate_config;
    bool samples = false;
    bool serial = false;
};

int cmd_run(const RunOptions& o)
{
    const auto measure = harness::measure_from_string(o.measure);
    if (!measure)
    {
        std::cerr << "error: --measure must be release, activate or both\n";
        return kExitUsage;
    }
    const auto gate_cfg = gate_from(o.gate_config);
    std::vector<harness::ExperimentConfig> configs;
    for (auto& spec : resolve_all(o.scenarios))
    {
        harness::ExperimentConfig c;
        c.scenario = std::move(spec);
        c.toggles = o.toggles;
        c.seed = o.seed;
        c.measure = *measure;
        c.gate = gate_cfg;
        c.keep_samples = o.samples;
        configs.push_back(std::move(c));
    }
    const auto reports =
        harness::run_experiments(configs, o.serial ? harness::ExecPolicy::Serial : harness::ExecPolicy::Parallel);
    const auto fmt = o.format == "csv" ? harness::ExportFormat::Csv : harness::ExportFormat::Json;
    write_output(reports.size() == 1 ? harness::export_report(reports.front(), fmt)
                                     : harness::export_reports(reports, fmt),
                 o.out);
    int rc = 0;
    for (const auto& r : reports)
    {
        if (r.aborted)
        {
            std::cerr << r.scenario << ": aborted: " << r.diagnostic << "\n";
            rc = kExitAborted;
        }
    }
    return rc;
}

struct CalibrateOptions
{
    std::string scenario;
    std::string targets;
    std::size_t max_iters = 40;
    std::uint64_t seed = 20250301;
    std::size_t toggles = 1000;
    std::size_t replicas = 4;
    std::string out;
};

int cmd_calibrate(const CalibrateOptions& o)
{
    const auto name = channels::scenario_from_string(o.scenario);
    if (!name)
    {
        std::cerr << "error: calibration needs a preset scenario name\n";
        return kExitUsage;
    }
    channels::CalibrationConfig cfg;
    cfg.scenario = *name;
    cfg.start = channels::preset(*name);
    cfg.initial = channels::extract_fit(cfg.start, *name);
    cfg.targets = channels::measured_targets(*name);
    if (!o.targets.empty())
    {
        std::ifstream in(o.targets);
        if (!in)
        {
            throw std::runtime_error("cannot open targets file " + o.targets);
        }
        cfg.targets = channels::targets_from_json(nlohmann::json::parse(in));
    }
    cfg.max_iterations = o.max_iters;
    cfg.seed = o.seed;
    cfg.toggles_per_eval = o.toggles;
    cfg.replicas = o.replicas;
    const auto fit = channels::calibrate_scenario(cfg);
    std::fprintf(stderr, "%s: %s after %zu sweeps / %zu evaluations, fit_error %.6f\n", o.scenario.c_str(),
                 fit.converged ? "converged" : "stopped", fit.iterations, fit.evaluations, fit.fit_error);
    std::fprintf(stderr, "  achieved mean %.2f std %.2f max %.2f ms (target %.1f / %.1f / %.1f)\n",
                 fit.achieved.mean_ms, fit.achieved.std_ms, fit.achieved.max_ms, cfg.targets.mean_ms,
                 cfg.targets.std_ms, cfg.targets.max_ms);
    write_output(channels::to_json(fit.scenario).dump(2) + "\n", o.out);
    return 0;
}

struct ProbeOptions
{
    std::string scenario = "LineOfSight12m";
    std::size_t probes = 1000;
    std::uint64_t seed = 1;
    double silence_ms = 600.0;
    bool after_delivery = false;
    std::string out;
};

int cmd_probe(const ProbeOptions& o)
{
    harness::ProbeConfig cfg;
    cfg.scenario = resolve_all({o.scenario}).front();
    cfg.probes = o.probes;
    cfg.seed = o.seed;
    cfg.silence = sim::SimTime{static_cast<std::int64_t>(o.silence_ms * 1000.0)};
    cfg.phase = o.after_delivery ? harness::ProbePhase::AfterDelivery : harness::ProbePhase::Random;
    const auto report = harness::run_watchdog_probe(cfg);
    write_output(harness::to_json(report).dump(2) + "\n", o.out);
    if (report.aborted)
    {
        std::cerr << "aborted: " << report.diagnostic << "\n";
        return kExitAborted;
    }
    return 0;
}

int cmd_list()
{
    for (const auto name : channels::kAllScenarios)
    {
        const auto spec = channels::preset(name);
        const auto t = channels::measured_targets(name);
        std::printf("%-16s %5.1f m  target %.0f +- %.0f ms (max %.0f)  channels:", spec.name.c_str(), spec.distance_m,
                    t.mean_ms, t.std_ms, t.max_ms);
        for (const auto& c : spec.channels)
        {
            if (c.enabled)
            {
                std::printf(" %s", std::string(protocol::to_string(c.channel)).c_str());
            }
        }
        std::printf("\n");
    }
    return 0;
}

int cmd_fuzz(std::size_t traces, std::uint64_t seed)
{
    harness::FailSafeFuzzConfig cfg;
    cfg.traces = traces;
    cfg.seed = seed;
    const auto r = harness::fuzz_failsafe(cfg);
    std::printf("traces %zu deliveries %llu silent_windows %llu watchdog_trips %llu violations %llu\n", r.traces,
                static_cast<unsigned long long>(r.deliveries), static_cast<unsigned long long>(r.silent_windows),
                static_cast<unsigned long long>(r.watchdog_trips), static_cast<unsigned long long>(r.violations));
    return r.violations == 0 ? 0 : kExitAborted;
}

int cmd_gate_trace(const std::string& gate_config, double duration_ms, const std::string& out)
{
    gate::PowerGate g(gate_from(gate_config));
    g.record_trace(true);
    g.apply(protocol::EStopCommand::Run, sim::SimTime{0});
    g.advance_to(sim::SimTime{static_cast<std::int64_t>(duration_ms * 1000.0)});
    write_output(gate::transient_csv(g.trace()), out);
    return 0;
}

int cmd_pdb_trace(std::size_t steps, std::uint64_t seed, const std::string& out)
{
    pdb::PowerTraceConfig cfg;
    cfg.steps = steps;
    cfg.seed = seed;
    write_output(pdb::trace_csv(pdb::simulate_power_trace(cfg).rows), out);
    return 0;
}

int cmd_defaults(const std::string& which, const std::string& out)
{
    nlohmann::ordered_json j;
    if (which == "gate")
    {
        j = gate::to_json(gate::GateConfig{});
    }
    else
    {
        j["pack"] = pdb::to_json(pdb::PackConfig{});
        j["pdb"] = pdb::to_json(pdb::PdbConfig{});
    }
    write_output(j.dump(2) + "\n", out);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Remote E-Stop link simulator"};
    app.require_subcommand(1);
    const std::uint64_t seed0 = default_seed();

    RunOptions run;
    run.seed = seed0;
    auto* run_cmd = app.add_subcommand("run", "toggle experiment over one or more scenarios");
    run_cmd->add_option("--scenario", run.scenarios, "preset name, scenario JSON path, 'ideal' or 'all'");
    run_cmd->add_option("--toggles", run.toggles)->check(CLI::PositiveNumber);
    run_cmd->add_option("--seed", run.seed, "defaults to $SAFELINK_SEED, else 1");
    run_cmd->add_option("--format", run.format)->check(CLI::IsMember({"json", "csv"}));
    run_cmd->add_option("--out", run.out, "output file (stdout if omitted)");
    run_cmd->add_option("--measure", run.measure)->check(CLI::IsMember({"release", "activate", "both"}));
    run_cmd->add_option("--gate-config", run.gate_config, "gate constants JSON");
    run_cmd->add_flag("--samples", run.samples, "include every sample in the JSON report");
    run_cmd->add_flag("--serial", run.serial, "run scenarios one after another");

    CalibrateOptions cal;
    auto* cal_cmd = app.add_subcommand("calibrate", "fit a preset's link parameters to latency targets");
    cal_cmd->add_option("--scenario", cal.scenario)->required();
    cal_cmd->add_option("--targets", cal.targets, "JSON {mean_ms, std_ms, max_ms}; defaults to the measured table");
    cal_cmd->add_option("--max-iters", cal.max_iters, "0 evaluates the preset without searching")
        ->check(CLI::NonNegativeNumber);
    cal_cmd->add_option("--seed", cal.seed);
    cal_cmd->add_option("--toggles", cal.toggles, "toggles per evaluation")->check(CLI::PositiveNumber);
    cal_cmd->add_option("--replicas", cal.replicas, "independent runs averaged per evaluation")
        ->check(CLI::PositiveNumber);
    cal_cmd->add_option("--out", cal.out, "fitted scenario JSON (stdout if omitted)");

    ProbeOptions probe;
    probe.seed = seed0;
    auto* probe_cmd = app.add_subcommand("probe-watchdog", "silence every link and time the fail-safe");
    probe_cmd->add_option("--scenario", probe.scenario);
    probe_cmd->add_option("--probes", probe.probes)->check(CLI::PositiveNumber);
    probe_cmd->add_option("--seed", probe.seed);
    probe_cmd->add_option("--silence-ms", probe.silence_ms)->check(CLI::PositiveNumber);
    probe_cmd->add_flag("--after-delivery", probe.after_delivery, "start each silence at a delivery");
    probe_cmd->add_option("--out", probe.out);

    auto* list_cmd = app.add_subcommand("list-scenarios", "shipped presets");

    std::size_t traces = 10000;
    std::uint64_t fuzz_seed = seed0;
    auto* fuzz_cmd = app.add_subcommand("fuzz-failsafe", "randomized traces checked against the watchdog rule");
    fuzz_cmd->add_option("--traces", traces)->check(CLI::PositiveNumber);
    fuzz_cmd->add_option("--seed", fuzz_seed);

    std::string gate_cfg;
    std::string gate_out;
    double gate_ms = 300.0;
    auto* gate_cmd = app.add_subcommand("gate-trace", "switch-on transient of every branch as CSV");
    gate_cmd->add_option("--gate-config", gate_cfg);
    gate_cmd->add_option("--duration-ms", gate_ms)->check(CLI::PositiveNumber);
    gate_cmd->add_option("--out", gate_out);

    std::size_t pdb_steps = 10000;
    std::uint64_t pdb_seed = seed0;
    std::string pdb_out;
    auto* pdb_cmd = app.add_subcommand("pdb-trace", "randomized source-selection trace as CSV");
    pdb_cmd->add_option("--steps", pdb_steps)->check(CLI::PositiveNumber);
    pdb_cmd->add_option("--seed", pdb_seed);
    pdb_cmd->add_option("--out", pdb_out);

    std::string defaults_which;
    std::string defaults_out;
    auto* defaults_cmd = app.add_subcommand("defaults", "built-in gate or power-plane constants as JSON");
    defaults_cmd->add_option("which", defaults_which)->required()->check(CLI::IsMember({"gate", "pdb"}));
    defaults_cmd->add_option("--out", defaults_out);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try
    {
        if (*run_cmd)
        {
            return cmd_run(run);
        }
        if (*cal_cmd)
        {
            return cmd_calibrate(cal);
        }
        if (*probe_cmd)
        {
            return cmd_probe(probe);
        }
        if (*list_cmd)
        {
            return cmd_list();
        }
        if (*fuzz_cmd)
        {
            return cmd_fuzz(traces, fuzz_seed);
        }
        if (*gate_cmd)
        {
            return cmd_gate_trace(gate_cfg, gate_ms, gate_out);
        }
        if (*pdb_cmd)
        {
            return cmd_pdb_trace(pdb_steps, pdb_seed, pdb_out);
        }
        if (*defaults_cmd)
        {
            return cmd_defaults(defaults_which, defaults_out);
        }
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
