// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include "safelink/calibration.hpp"
#include "safelink/channels.hpp"
#include "safelink/harness.hpp"
#include "safelink/power_gate.hpp"
#include "safelink/power_plane.hpp"
#include "safelink/protocol.hpp"
#include "safelink/random.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

using namespace safelink;
using namespace std::chrono_literals;
using sim::SimTime;

namespace
{

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail)
{
    std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    failures += pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---- 1 ----------------------------------------------------------------------

void failsafe_fuzz()
{
    harness::FailSafeFuzzConfig c;
    c.traces = 10000;
    c.seed = 20250301;
    const auto t0 = Clock::now();
    const auto r = harness::fuzz_failsafe(c);
    const double secs = seconds_since(t0);
    report(1, r.violations == 0 && r.traces == 10000 && secs < 30.0,
           fmt("traces=%zu windows=%llu deliveries=%llu violations=%llu trips=%llu runtime=%.2fs", r.traces,
               static_cast<unsigned long long>(r.silent_windows), static_cast<unsigned long long>(r.deliveries),
               static_cast<unsigned long long>(r.violations), static_cast<unsigned long long>(r.watchdog_trips),
               secs));
}

// ---- 2 ----------------------------------------------------------------------

void watchdog_exactness()
{
    harness::ProbeConfig p;
    p.scenario = channels::preset(channels::ScenarioName::LineOfSight12m);
    p.probes = 1000;
    p.seed = 20250301;
    p.keep_samples = true;
    const auto r = harness::run_watchdog_probe(p);
    std::size_t bad = 0;
    for (const auto us : r.trip.samples_us)
    {
        bad += (us > 300'000 && us <= 301'000) ? 0 : 1;
    }
    // a frame still in flight can re-power the output inside a silence, so a
    // probe may trip more than once; every probe must trip at least once
    const bool pass = !r.aborted && r.probes_without_trip == 0 && r.trips_in_silence >= 1000 &&
                      r.trips_outside_silence == 0 && bad == 0;
    report(2, pass,
           fmt("probes=1000 trips=%zu untripped=%llu min=%.3fms max=%.3fms outside=%zu spurious=%llu%s", r.trip.count,
               static_cast<unsigned long long>(r.probes_without_trip), r.trip.min_ms, r.trip.max_ms, bad,
               static_cast<unsigned long long>(r.trips_outside_silence),
               r.aborted ? (" aborted: " + r.diagnostic).c_str() : ""));
}

// ---- 3 ----------------------------------------------------------------------

void table_reproduction()
{
    std::vector<harness::ExperimentConfig> cfgs;
    for (const auto n : channels::kAllScenarios)
    {
        harness::ExperimentConfig c;
        c.scenario = channels::preset(n);
        c.toggles = 1000;
        c.seed = 1;
        c.measure = harness::Measure::ReleaseLatency;
        cfgs.push_back(c);
    }
    const auto t0 = Clock::now();
    const auto reports = harness::run_experiments(cfgs);
    const double secs = seconds_since(t0);

    bool pass = secs < 10.0;
    std::string detail;
    std::array<double, 5> mean{};
    for (std::size_t i = 0; i < reports.size(); ++i)
    {
        const auto n = channels::kAllScenarios[i];
        const auto target = channels::measured_targets(n);
        const auto& r = reports[i];
        const bool ok = !r.aborted && r.release && r.release->count == 1000 &&
                        std::abs(r.release->mean_ms - target.mean_ms) <= 0.2 * target.mean_ms &&
                        r.release->max_ms <= 2.0 * target.max_ms;
        pass = pass && ok;
        mean[i] = r.release ? r.release->mean_ms : 0.0;
        detail += fmt("%s=%.2f/%.2f(max %.1f) ", std::string(channels::to_string(n)).c_str(), mean[i],
                      target.mean_ms, r.release ? r.release->max_ms : 0.0);
    }
    using channels::ScenarioName;
    const auto m = [&](ScenarioName n) {
        const auto it = std::find(channels::kAllScenarios.begin(), channels::kAllScenarios.end(), n);
        return mean[static_cast<std::size_t>(it - channels::kAllScenarios.begin())];
    };
    const double fast_max =
        std::max({m(ScenarioName::LineOfSight12m), m(ScenarioName::Obstructed3m), m(ScenarioName::GlassDoor12m)});
    const bool ordered = fast_max < m(ScenarioName::StoneWall12m) &&
                         m(ScenarioName::StoneWall12m) < m(ScenarioName::LoRaOnly12m);
    pass = pass && ordered;
    report(3, pass, detail + fmt("ordered=%s runtime=%.2fs", ordered ? "yes" : "no", secs));
}

// ---- 4 ----------------------------------------------------------------------

void ideal_channel()
{
    harness::ExperimentConfig c;
    c.scenario = channels::ideal_scenario();
    c.toggles = 1000;
    c.keep_samples = true;
    const auto r = harness::run_toggle_experiment(c);
    const auto settle = gate::settling_time(c.gate).count();
    std::size_t bad = 0;
    for (const auto us : r.release->samples_us)
    {
        bad += us == settle ? 0 : 1;
    }
    report(4, !r.aborted && r.release->count == 1000 && bad == 0,
           fmt("toggles=%zu settling=%lldus mismatches=%zu", r.release->count, static_cast<long long>(settle), bad));
}

// ---- 5 ----------------------------------------------------------------------

void freshness()
{
    using protocol::EStopCommand;
    sim::RandomSource rng(5);
    std::size_t orders = 0;
    std::size_t bad = 0;
    constexpr std::array<EStopCommand, 3> kCmds{EStopCommand::Run, EStopCommand::SoftStop, EStopCommand::HardStop};
    for (int set = 0; set < 200; ++set)
    {
        std::array<protocol::StatusFrame, 5> frames{};
        std::uint32_t next = static_cast<std::uint32_t>(rng.uniform_int(1, 1000));
        for (auto& f : frames)
        {
            f.seq = next;
            next += static_cast<std::uint32_t>(rng.uniform_int(1, 50));
            f.command = kCmds[static_cast<std::size_t>(rng.uniform_int(0, 2))];
            f.channel = protocol::kAllChannels[static_cast<std::size_t>(rng.uniform_int(0, 2))];
        }
        const EStopCommand expected = frames.back().command;
        std::array<std::size_t, 5> perm{0, 1, 2, 3, 4};
        do
        {
            protocol::Receiver rx(protocol::ScheduleConfig{}, protocol::WatchdogConfig{});
            SimTime t{0};
            for (const auto i : perm)
            {
                t += SimTime{1000};
                (void)rx.on_frame(frames[i], t);
            }
            ++orders;
            bad += (rx.latched_command() == expected && rx.effective_command() == expected) ? 0 : 1;
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
    report(5, bad == 0 && orders == 200 * 120, fmt("frame_sets=200 orders=%zu mismatches=%zu", orders, bad));
}

// ---- 6 ----------------------------------------------------------------------

void gate_safety()
{
    using gate::Branch;
    using protocol::EStopCommand;
    sim::RandomSource rng(6);
    gate::PowerGate g;
    const std::size_t buttons = g.config().hardware_buttons;

    // independent model of the enable chain
    bool pin = false;
    std::vector<bool> pressed(buttons, false);
    std::array<bool, gate::kBranchCount> injected{};
    SimTime now{0};
    std::size_t violations = 0;
    std::size_t soft_interruptions = 0;
    std::size_t soft_checks = 0;

    const auto check = [&] {
        const bool chain = pin && std::none_of(pressed.begin(), pressed.end(), [](bool b) { return b; });
        for (const auto b : gate::kAllBranches)
        {
            const auto s = g.switch_state(b);
            if (s.conducting && (!chain || injected[gate::index(b)] || s.latched_fault))
            {
                ++violations;
            }
        }
    };

    constexpr std::size_t kSteps = 100'000;
    for (std::size_t i = 0; i < kSteps; ++i)
    {
        now += SimTime{rng.uniform_int(0, 3000)};
        g.advance_to(now);
        check();
        switch (rng.uniform_int(0, 9))
        {
        case 0:
        case 1:
        case 2: {
            g.apply(EStopCommand::Run, now);
            pin = true;
            break;
        }
        case 3:
        case 4: {
            std::array<bool, gate::kBranchCount> before{};
            for (const auto b : gate::kAllBranches)
            {
                before[gate::index(b)] = g.switch_state(b).conducting;
            }
            g.apply(EStopCommand::SoftStop, now);
            for (const auto b : gate::kAllBranches)
            {
                ++soft_checks;
                soft_interruptions += (before[gate::index(b)] && !g.switch_state(b).conducting) ? 1 : 0;
            }
            break;
        }
        case 5: {
            g.apply(EStopCommand::HardStop, now);
            pin = false;
            break;
        }
        case 6:
        case 7: {
            const auto k = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(buttons) - 1));
            const bool p = rng.bernoulli(0.3);
            g.set_button(k, p, now);
            pressed[k] = p;
            break;
        }
        case 8: {
            const auto b = gate::kAllBranches[static_cast<std::size_t>(rng.uniform_int(0, 2))];
            if (rng.bernoulli(0.3))
            {
                g.inject_fault(b, now);
                injected[gate::index(b)] = true;
            }
            else
            {
                g.reset_fault(b, now);
                injected[gate::index(b)] = false;
            }
            break;
        }
        default:
            break;
        }
        check();
    }

    // dedicated SoftStop cycling from a settled Run state
    gate::PowerGate h;
    h.apply(EStopCommand::Run, 0ms);
    h.advance_to(1s);
    bool continuous = h.output_on();
    SimTime t = 1s;
    for (int cycle = 0; cycle < 1000; ++cycle)
    {
        h.apply(cycle % 2 == 0 ? EStopCommand::SoftStop : EStopCommand::Run, t);
        for (int k = 0; k < 10; ++k)
        {
            t += 100us;
            h.advance_to(t);
            for (const auto b : gate::kAllBranches)
            {
                continuous = continuous && h.switch_state(b).conducting;
            }
            continuous = continuous && h.output_on();
        }
    }
    report(6, violations == 0 && soft_interruptions == 0 && continuous,
           fmt("steps=%zu violations=%zu softstop_checks=%zu interruptions=%zu cycling_continuous=%s", kSteps,
               violations, soft_checks, soft_interruptions, continuous ? "yes" : "no"));
}

// ---- 7 ----------------------------------------------------------------------

void inrush()
{
    using gate::Branch;
    gate::GateConfig unlimited;
    unlimited.loads[gate::index(Branch::Drive)] = gate::BranchLoad{4700e-6, 4.8, false};
    gate::PowerGate u(unlimited);
    u.apply(protocol::EStopCommand::Run, 0ms);
    u.advance_to(50ms);
    const bool unlimited_trips = u.switch_state(Branch::Drive).latched_fault;

    gate::PowerGate l;
    l.apply(protocol::EStopCommand::Run, 0ms);
    l.advance_to(1s);
    const double cap = l.config().bus_voltage_v / l.config().limiter.r_cold_ohm;
    bool limited_ok = true;
    double peak = 0.0;
    for (const auto b : {Branch::Flippers, Branch::Manipulator})
    {
        limited_ok = limited_ok && !l.switch_state(b).latched_fault && l.switch_state(b).conducting;
        peak = std::max(peak, l.inrush_peak_current(b));
    }
    report(7, unlimited_trips && limited_ok && peak <= cap,
           fmt("unlimited_trip=%s limited_trip=%s limited_inrush_peak=%.4fA bound=%.2fA", unlimited_trips ? "yes" : "no",
               limited_ok ? "no" : "yes", peak, cap));
}

// ---- 8 ----------------------------------------------------------------------

std::optional<pdb::PackId> pack_of(pdb::SourceSelection s)
{
    if (s == pdb::SourceSelection::PackA)
    {
        return pdb::PackId::A;
    }
    if (s == pdb::SourceSelection::PackB)
    {
        return pdb::PackId::B;
    }
    return std::nullopt;
}

void power_plane()
{
    using namespace pdb;
    const PdbConfig cfg;
    sim::RandomSource rng(8);

    const auto ok = [&](const BatteryPack& p) {
        const auto cells = p.cell_voltages();
        return *std::min_element(cells.begin(), cells.end()) >= cfg.cell_cutoff_v;
    };

    std::size_t hysteresis = 0;
    std::size_t dwell = 0;
    std::size_t priority = 0;
    std::size_t eligibility = 0;
    std::size_t charge = 0;
    std::size_t switches = 0;
    std::size_t forced = 0;

    for (int trace = 0; trace < 4; ++trace)
    {
        std::array<BatteryPack, 2> packs{BatteryPack::full(PackId::A), BatteryPack::full(PackId::B)};
        for (auto& p : packs)
        {
            p.charge_nc = rng.uniform_int(p.capacity_nc / 20, p.capacity_nc);
        }
        const std::array<std::int64_t, 2> initial{packs[0].charge_nc, packs[1].charge_nc};
        std::array<std::int64_t, 2> drawn{};
        PdbState state;
        bool external = rng.bernoulli(0.5);
        std::optional<PackId> last;
        std::optional<SimTime> last_change;
        SimTime t{0};
        for (std::size_t i = 0; i < 10'000; ++i)
        {
            if (rng.bernoulli(0.05))
            {
                external = !external;
            }
            if (rng.bernoulli(0.01))
            {
                packs[static_cast<std::size_t>(rng.uniform_int(0, 1))]
                    .cell_offsets_v[static_cast<std::size_t>(rng.uniform_int(0, 7))] = -rng.uniform01() * 1.0;
            }
            if (rng.bernoulli(0.005))
            {
                packs[static_cast<std::size_t>(rng.uniform_int(0, 1))].cell_offsets_v.fill(0.0);
            }
            const double load = rng.uniform01() * 40.0;
            const SimTime dt{rng.uniform_int(10'000, 500'000)};

            const std::array<bool, 2> el{ok(packs[0]), ok(packs[1])};
            const std::array<double, 2> v{packs[0].pack_voltage(), packs[1].pack_voltage()};
            const auto prev = state.selection;
            state = select_source(state, packs, external, t, cfg);
            const auto sel = state.selection;

            if (external != (sel == SourceSelection::External24V))
            {
                ++priority;
            }
            const auto now_pack = pack_of(sel);
            if (!external)
            {
                if ((sel == SourceSelection::NoSource) != (!el[0] && !el[1]))
                {
                    ++eligibility;
                }
                if (now_pack && !el[static_cast<std::size_t>(*now_pack)])
                {
                    ++eligibility;
                }
            }
            if (now_pack)
            {
                const auto cur = static_cast<std::size_t>(*now_pack);
                if (last && *last != *now_pack)
                {
                    ++switches;
                    const auto old = static_cast<std::size_t>(*last);
                    const bool is_forced = !el[old];
                    forced += is_forced ? 1 : 0;
                    if (!is_forced && last_change && t - *last_change < cfg.min_dwell)
                    {
                        ++dwell;
                    }
                    // a direct pack-to-pack move needs the lead to exceed the hysteresis
                    if (!is_forced && pack_of(prev) && v[cur] - v[old] <= cfg.switch_hysteresis_v)
                    {
                        ++hysteresis;
                    }
                }
                // staying put while the other pack clearly leads is also a violation
                if (pack_of(prev) == now_pack)
                {
                    const std::size_t alt = 1 - cur;
                    const bool dwell_over = !last_change || t - *last_change >= cfg.min_dwell;
                    if (el[cur] && el[alt] && v[alt] - v[cur] > cfg.switch_hysteresis_v && dwell_over)
                    {
                        ++hysteresis;
                    }
                }
                if (last != now_pack)
                {
                    last_change = t;
                }
                last = now_pack;
            }

            for (std::size_t p = 0; p < 2; ++p)
            {
                const bool loaded = now_pack && static_cast<std::size_t>(*now_pack) == p;
                const std::int64_t before = packs[p].charge_nc;
                const std::int64_t want =
                    loaded ? std::llround(load * static_cast<double>(dt.count()) * 1000.0) : 0;
                packs[p] = discharge_step(packs[p], loaded ? load : 0.0, dt);
                const std::int64_t removed = before - packs[p].charge_nc;
                drawn[p] += removed;
                charge += removed == std::min(want, before) ? 0 : 1;
            }
            t += dt;
        }
        for (std::size_t p = 0; p < 2; ++p)
        {
            charge += (initial[p] - packs[p].charge_nc == drawn[p] && packs[p].drawn_nc == drawn[p]) ? 0 : 1;
        }
    }

    // shipped trace generator: priority and conservation on its own output
    PowerTraceConfig tc;
    tc.seed = 20250301;
    const auto tr = simulate_power_trace(tc);
    std::array<std::int64_t, 2> sum{};
    for (const auto& row : tr.rows)
    {
        priority += row.external_present != (row.selection == SourceSelection::External24V) ? 1 : 0;
        sum[0] += row.drawn_nc[0];
        sum[1] += row.drawn_nc[1];
    }
    for (std::size_t p = 0; p < 2; ++p)
    {
        charge += sum[p] == tr.initial_packs[p].charge_nc - tr.final_packs[p].charge_nc ? 0 : 1;
    }

    // full pack, 0.1C, trapezoid on terminal voltage
    double wh = 0.0;
    {
        auto p = BatteryPack::full(PackId::A);
        const double i = 0.675;
        while (p.charge_nc > 0)
        {
            auto loaded = p;
            loaded.load_current_a = i;
            const double v0 = loaded.pack_voltage();
            const auto before = p.charge_nc;
            p = discharge_step(p, i, 1s);
            wh += 0.5 * (v0 + p.pack_voltage()) * static_cast<double>(before - p.charge_nc) / 3.6e12;
        }
    }
    const bool energy_ok = std::abs(wh - 210.0) <= 21.0;
    report(8,
           hysteresis == 0 && dwell == 0 && priority == 0 && eligibility == 0 && charge == 0 && energy_ok &&
               switches > 0,
           fmt("steps=40000 switches=%zu forced=%zu hysteresis=%zu dwell=%zu priority=%zu eligibility=%zu "
               "charge_mismatch=%zu energy=%.2fWh",
               switches, forced, hysteresis, dwell, priority, eligibility, charge, wh));
}

// ---- 9 ----------------------------------------------------------------------

void determinism()
{
    std::size_t compared = 0;
    std::size_t differ = 0;
    for (const auto n : channels::kAllScenarios)
    {
        harness::ExperimentConfig c;
        c.scenario = channels::preset(n);
        c.toggles = 200;
        c.seed = 99;
        c.keep_samples = true;
        const auto a = harness::export_report(harness::run_toggle_experiment(c), harness::ExportFormat::Json);
        const auto b = harness::export_report(harness::run_toggle_experiment(c), harness::ExportFormat::Json);
        ++compared;
        differ += a == b ? 0 : 1;
    }
    harness::ProbeConfig p;
    p.scenario = channels::preset(channels::ScenarioName::StoneWall12m);
    p.probes = 100;
    p.keep_samples = true;
    const auto pa = harness::to_json(harness::run_watchdog_probe(p)).dump();
    const auto pb = harness::to_json(harness::run_watchdog_probe(p)).dump();
    ++compared;
    differ += pa == pb ? 0 : 1;

    harness::FailSafeFuzzConfig f;
    f.traces = 500;
    ++compared;
    differ += harness::fuzz_failsafe(f, harness::ExecPolicy::Serial) ==
                      harness::fuzz_failsafe(f, harness::ExecPolicy::Parallel)
                  ? 0
                  : 1;
    report(9, differ == 0, fmt("reports_compared=%zu differing=%zu", compared, differ));
}

} // namespace

int main()
{
    failsafe_fuzz();
    watchdog_exactness();
    table_reproduction();
    ideal_channel();
    freshness();
    gate_safety();
    inrush();
    power_plane();
    determinism();
    std::printf("%s (%d failing)\n", failures == 0 ? "ALL PASS" : "SOME FAILED", failures);
    return failures == 0 ? 0 : 1;
}
