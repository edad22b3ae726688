#include "safelink/harness.hpp"

#include "link_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace safelink::harness
{

using detail::LinkObserver;
using detail::LinkSim;
using detail::LinkSimConfig;

std::string_view to_string(Measure m) noexcept
{
    switch (m)
    {
    case Measure::ReleaseLatency: return "release";
    case Measure::ActivateLatency: return "activate";
    case Measure::Both: return "both";
    }
    return "?";
}

std::optional<Measure> measure_from_string(std::string_view s) noexcept
{
    for (const auto m : {Measure::ReleaseLatency, Measure::ActivateLatency, Measure::Both})
    {
        if (to_string(m) == s)
        {
            return m;
        }
    }
    return std::nullopt;
}

void ExperimentConfig::validate() const
{
    if (toggles == 0)
    {
        throw std::invalid_argument("ExperimentConfig: toggles must be positive");
    }
    if (dwell_min > dwell_max)
    {
        throw std::invalid_argument("ExperimentConfig: dwell_min exceeds dwell_max");
    }
    if (dwell_min <= watchdog.timeout)
    {
        throw std::invalid_argument("ExperimentConfig: dwell_min must exceed the watchdog timeout");
    }
    if (completion_timeout <= SimTime{0})
    {
        throw std::invalid_argument("ExperimentConfig: completion_timeout must be positive");
    }
    scenario.validate();
    schedule.validate();
    watchdog.validate();
    gate.validate();
}

LatencyStats LatencyStats::from_samples(std::span<const SimTime> samples, bool keep_samples)
{
    LatencyStats s;
    s.count = samples.size();
    if (samples.empty())
    {
        return s;
    }
    double sum = 0.0;
    std::int64_t lo = samples.front().count();
    std::int64_t hi = lo;
    for (const SimTime x : samples)
    {
        sum += static_cast<double>(x.count());
        lo = std::min(lo, x.count());
        hi = std::max(hi, x.count());
    }
    const double mean = sum / static_cast<double>(samples.size());
    double ss = 0.0;
    for (const SimTime x : samples)
    {
        const double d = static_cast<double>(x.count()) - mean;
        ss += d * d;
    }
    s.mean_ms = mean / 1000.0;
    s.std_ms = std::sqrt(ss / static_cast<double>(samples.size())) / 1000.0;
    s.min_ms = static_cast<double>(lo) / 1000.0;
    s.max_ms = static_cast<double>(hi) / 1000.0;
    if (keep_samples)
    {
        s.samples_us.reserve(samples.size());
        for (const SimTime x : samples)
        {
            s.samples_us.push_back(x.count());
        }
    }
    return s;
}

// ---- toggle experiment ---------------------------------------------------------

namespace
{

class ToggleController final : public LinkObserver
{
public:
    ToggleController(LinkSim& sim, const ExperimentConfig& config)
        : sim_(sim), config_(config), dwell_rng_(sim::RandomSource(config.seed).fork("dwell"))
    {
    }

    void begin() { start_toggle(); }

    bool aborted() const noexcept { return aborted_; }
    const std::string& diagnostic() const noexcept { return diagnostic_; }
    const std::vector<SimTime>& release() const noexcept { return release_; }
    const std::vector<SimTime>& activate() const noexcept { return activate_; }

    void on_output_change(bool on, SimTime now) override
    {
        output_on_ = on;
        if (!on && phase_ == Phase::WaitOff)
        {
            activate_.push_back(now - t_command_);
            sim_.cancel(timeout_);
            enter_dwell(Phase::DwellOff);
        }
        else if (on && phase_ == Phase::WaitOn)
        {
            release_.push_back(now - t_command_);
            sim_.cancel(timeout_);
            enter_dwell(Phase::DwellOn);
        }
    }

    void on_timer(int tag, SimTime now) override
    {
        if (tag == kTimeoutTag)
        {
            aborted_ = true;
            diagnostic_ = std::string(phase_ == Phase::WaitOn ? "release" : "activation") + " of toggle " +
                          std::to_string(completed_ + 1) + " did not complete within " +
                          std::to_string(config_.completion_timeout.count() / 1000) + " ms (commanded at " +
                          std::to_string(t_command_.count()) + " us)";
            phase_ = Phase::Done;
            sim_.stop();
            return;
        }
        if (phase_ == Phase::DwellOff)
        {
            t_command_ = now;
            sim_.command(EStopCommand::Run);
            phase_ = Phase::WaitOn;
            timeout_ = sim_.timer(now + config_.completion_timeout, kTimeoutTag);
        }
        else if (phase_ == Phase::DwellOn)
        {
            if (++completed_ == config_.toggles)
            {
                phase_ = Phase::Done;
                sim_.stop();
                return;
            }
            start_toggle();
        }
    }

private:
    enum class Phase : std::uint8_t
    {
        WaitOff,
        DwellOff,
        WaitOn,
        DwellOn,
        Done,
    };

    static constexpr int kDwellTag = 1;
    static constexpr int kTimeoutTag = 2;

    void start_toggle()
    {
        t_command_ = sim_.now();
        sim_.command(EStopCommand::HardStop);
        if (!output_on_)
        {
            enter_dwell(Phase::DwellOff);
            return;
        }
        phase_ = Phase::WaitOff;
        timeout_ = sim_.timer(sim_.now() + config_.completion_timeout, kTimeoutTag);
    }

    void enter_dwell(Phase phase)
    {
        phase_ = phase;
        const SimTime dwell{dwell_rng_.uniform_int(config_.dwell_min.count(), config_.dwell_max.count())};
        sim_.timer(sim_.now() + dwell, kDwellTag);
    }

    LinkSim& sim_;
    const ExperimentConfig& config_;
    sim::RandomSource dwell_rng_;
    Phase phase_ = Phase::WaitOff;
    bool output_on_ = false;
    SimTime t_command_{0};
    sim::EventHandle timeout_{};
    std::size_t completed_ = 0;
    bool aborted_ = false;
    std::string diagnostic_;
    std::vector<SimTime> release_;
    std::vector<SimTime> activate_;
};

SimTime run_bound(std::size_t count, SimTime per_item) { return per_item * static_cast<std::int64_t>(count) + 10s; }

} // namespace

ExperimentReport run_toggle_experiment(const ExperimentConfig& config)
{
    config.validate();
    LinkSimConfig lc{config.scenario, config.schedule, config.watchdog, config.gate, config.seed, nullptr};
    LinkSim sim(lc);
    ToggleController controller(sim, config);
    sim.set_observer(&controller);
    controller.begin();
    sim.run_until(run_bound(config.toggles, 2 * (config.dwell_max + config.completion_timeout)));

    ExperimentReport r;
    r.scenario = config.scenario.name;
    r.toggles = config.toggles;
    r.seed = config.seed;
    r.dwell_min = config.dwell_min;
    r.dwell_max = config.dwell_max;
    r.measure = config.measure;
    if (config.measure != Measure::ActivateLatency)
    {
        r.release = LatencyStats::from_samples(controller.release(), config.keep_samples);
    }
    if (config.measure != Measure::ReleaseLatency)
    {
        r.activate = LatencyStats::from_samples(controller.activate(), config.keep_samples);
    }
    r.channels = sim.counters();
    r.engine_events = sim.engine().processed();
    r.sim_duration = sim.now();
    r.watchdog_trips = sim.watchdog_trips();
    r.aborted = controller.aborted();
    r.diagnostic = controller.diagnostic();
    return r;
}

std::vector<ExperimentReport> run_experiments(std::span<const ExperimentConfig> configs, ExecPolicy policy)
{
    std::vector<ExperimentReport> reports(configs.size());
    const auto n = static_cast<std::ptrdiff_t>(configs.size());
    if (policy == ExecPolicy::Serial)
    {
        for (std::ptrdiff_t i = 0; i < n; ++i)
        {
            reports[i] = run_toggle_experiment(configs[i]);
        }
        return reports;
    }
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < n; ++i)
    {
        reports[i] = run_toggle_experiment(configs[i]);
    }
    return reports;
}

// ---- watchdog probe ----------------------------------------------------------

void ProbeConfig::validate() const
{
    if (probes == 0)
    {
        throw std::invalid_argument("ProbeConfig: probes must be positive");
    }
    if (silence <= SimTime{0} || settle < SimTime{0} || phase_max < SimTime{0})
    {
        throw std::invalid_argument("ProbeConfig: silence must be positive, settle and phase non-negative");
    }
    scenario.validate();
    schedule.validate();
    watchdog.validate();
    gate.validate();
}

namespace
{

class ProbeController final : public LinkObserver
{
public:
    ProbeController(LinkSim& sim, const ProbeConfig& config)
        : sim_(sim), config_(config), rng_(sim::RandomSource(config.seed).fork("probe"))
    {
    }

    void begin()
    {
        sim_.command(EStopCommand::Run);
        wait_for_power();
    }

    bool aborted() const noexcept { return aborted_; }
    const std::string& diagnostic() const noexcept { return diagnostic_; }
    const std::vector<SimTime>& samples() const noexcept { return samples_; }
    std::uint64_t in_silence() const noexcept { return in_silence_; }
    std::uint64_t outside_silence() const noexcept { return outside_silence_; }
    std::uint64_t without_trip() const noexcept { return without_trip_; }

    void on_delivery(SimTime now) override
    {
        if (phase_ == Phase::Armed)
        {
            start_silence(now);
        }
    }

    void on_output_change(bool on, SimTime now) override
    {
        output_on_ = on;
        if (!on)
        {
            const auto last = sim_.receiver().last_rx_time();
            samples_.push_back(last ? now - *last : now);
            if (phase_ == Phase::Silent)
            {
                ++in_silence_;
                tripped_ = true;
                return;
            }
            ++outside_silence_;
            if (phase_ == Phase::Settle || phase_ == Phase::Armed)
            {
                sim_.cancel(timer_);
                wait_for_power();
            }
            return;
        }
        if (phase_ == Phase::WaitOn)
        {
            sim_.cancel(timer_);
            settle(now);
        }
        else if (phase_ == Phase::Restore)
        {
            sim_.cancel(timer_);
            finish_probe(now);
        }
    }

    void on_timer(int tag, SimTime now) override
    {
        switch (tag)
        {
        case kTimeoutTag:
            aborted_ = true;
            diagnostic_ = "drive output did not come back within 10 s at probe " + std::to_string(done_ + 1);
            sim_.stop();
            break;
        case kSettleTag:
            if (config_.phase == ProbePhase::Random)
            {
                start_silence(now);
            }
            else
            {
                phase_ = Phase::Armed;
            }
            break;
        case kSilenceEndTag:
            if (const auto last = sim_.receiver().last_rx_time();
                output_on_ && last && *last > silence_start_ && *last + config_.silence > now)
            {
                // a frame already in flight landed inside the silence; keep the
                // link quiet for a full silence after it
                timer_ = sim_.timer(*last + config_.silence, kSilenceEndTag);
                break;
            }
            sim_.set_silenced(false);
            sim_.resend();
            if (output_on_)
            {
                finish_probe(now);
            }
            else
            {
                phase_ = Phase::Restore;
                timer_ = sim_.timer(now + 10s, kTimeoutTag);
            }
            break;
        default: break;
        }
    }

private:
    enum class Phase : std::uint8_t
    {
        WaitOn,
        Settle,
        Armed,
        Silent,
        Restore,
        Done,
    };

    static constexpr int kTimeoutTag = 1;
    static constexpr int kSettleTag = 2;
    static constexpr int kSilenceEndTag = 3;

    void wait_for_power()
    {
        phase_ = Phase::WaitOn;
        timer_ = sim_.timer(sim_.now() + 10s, kTimeoutTag);
    }

    void settle(SimTime now)
    {
        phase_ = Phase::Settle;
        SimTime delay = config_.settle;
        if (config_.phase == ProbePhase::Random)
        {
            delay += SimTime{rng_.uniform_int(0, config_.phase_max.count())};
        }
        timer_ = sim_.timer(now + delay, kSettleTag);
    }

    void start_silence(SimTime now)
    {
        phase_ = Phase::Silent;
        silence_start_ = now;
        sim_.set_silenced(true);
        timer_ = sim_.timer(now + config_.silence, kSilenceEndTag);
    }

    void finish_probe(SimTime now)
    {
        without_trip_ += tripped_ ? 0 : 1;
        tripped_ = false;
        if (++done_ == config_.probes)
        {
            phase_ = Phase::Done;
            sim_.stop();
            return;
        }
        settle(now);
    }

    LinkSim& sim_;
    const ProbeConfig& config_;
    sim::RandomSource rng_;
    Phase phase_ = Phase::WaitOn;
    bool output_on_ = false;
    sim::EventHandle timer_{};
    SimTime silence_start_{0};
    bool tripped_ = false;
    std::uint64_t without_trip_ = 0;
    std::size_t done_ = 0;
    bool aborted_ = false;
    std::string diagnostic_;
    std::vector<SimTime> samples_;
    std::uint64_t in_silence_ = 0;
    std::uint64_t outside_silence_ = 0;
};

} // namespace

ProbeReport run_watchdog_probe(const ProbeConfig& config)
{
    config.validate();
    LinkSimConfig lc{config.scenario, config.schedule, config.watchdog, config.gate, config.seed, nullptr};
    LinkSim sim(lc);
    ProbeController controller(sim, config);
    sim.set_observer(&controller);
    controller.begin();
    sim.run_until(run_bound(config.probes, config.settle + config.phase_max + config.silence + 20s));

    ProbeReport r;
    r.scenario = config.scenario.name;
    r.probes = config.probes;
    r.seed = config.seed;
    r.trip = LatencyStats::from_samples(controller.samples(), config.keep_samples);
    r.trips_in_silence = controller.in_silence();
    r.trips_outside_silence = controller.outside_silence();
    r.probes_without_trip = controller.without_trip();
    r.aborted = controller.aborted();
    r.diagnostic = controller.diagnostic();
    return r;
}

// ---- fail-safe fuzzing ---------------------------------------------------------

namespace
{

class FuzzRecorder final : public LinkObserver
{
public:
    FuzzRecorder(LinkSim& sim, std::vector<std::pair<SimTime, EStopCommand>> commands)
        : sim_(sim), commands_(std::move(commands))
    {
    }

    std::vector<SimTime> deliveries;
    std::vector<std::pair<SimTime, EStopCommand>> transitions;

    void on_delivery(SimTime now) override { deliveries.push_back(now); }
    void on_effective_change(EStopCommand cmd, SimTime now) override { transitions.emplace_back(now, cmd); }

    void on_timer(int tag, SimTime) override
    {
        if (tag >= kCommandBase)
        {
            sim_.command(commands_[static_cast<std::size_t>(tag - kCommandBase)].second);
        }
        else if (tag == kSilenceOn)
        {
            sim_.set_silenced(++silence_depth_ > 0);
        }
        else if (tag == kSilenceOff)
        {
            sim_.set_silenced(--silence_depth_ > 0);
        }
    }

    static constexpr int kSilenceOn = 1;
    static constexpr int kSilenceOff = 2;
    static constexpr int kCommandBase = 16;

private:
    LinkSim& sim_;
    std::vector<std::pair<SimTime, EStopCommand>> commands_;
    int silence_depth_ = 0;
};

} // namespace

FuzzTrace generate_fuzz_trace(std::uint64_t seed, const FailSafeFuzzConfig& config)
{
    sim::RandomSource rng(seed);
    FuzzTrace trace;
    trace.scenario.name = "fuzz";
    for (const ChannelId ch : protocol::kAllChannels)
    {
        channels::ChannelSpec c;
        c.channel = ch;
        c.enabled = rng.bernoulli(0.8);
        const double u = rng.uniform01();
        c.loss_probability = u < 0.1 ? 0.0 : (u < 0.2 ? 1.0 : rng.uniform01());
        c.base_latency = SimTime{rng.uniform_int(0, 400'000)};
        c.jitter_sigma = rng.uniform01() * 1.5;
        c.jitter_scale = SimTime{rng.uniform_int(0, 80'000)};
        c.airtime = SimTime{rng.uniform_int(0, 60'000)};
        trace.scenario.channel(ch) = c;
    }

    const auto random_time = [&] { return SimTime{rng.uniform_int(0, config.duration.count())}; };
    std::vector<std::pair<SimTime, EStopCommand>> commands;
    const auto n_commands = rng.uniform_int(0, 8);
    for (std::int64_t i = 0; i < n_commands; ++i)
    {
        commands.emplace_back(random_time(), static_cast<EStopCommand>(rng.uniform_int(0, 2)));
    }

    LinkSimConfig lc{trace.scenario, config.schedule, config.watchdog, std::nullopt, seed, nullptr};
    LinkSim sim(lc);
    FuzzRecorder recorder(sim, commands);
    sim.set_observer(&recorder);
    // the handheld boots and immediately reports Run
    sim.command(EStopCommand::Run);
    for (std::size_t i = 0; i < commands.size(); ++i)
    {
        sim.timer(commands[i].first, FuzzRecorder::kCommandBase + static_cast<int>(i));
    }
    const auto n_silences = rng.uniform_int(0, 4);
    for (std::int64_t i = 0; i < n_silences; ++i)
    {
        const SimTime start = random_time();
        sim.timer(start, FuzzRecorder::kSilenceOn);
        sim.timer(start + SimTime{rng.uniform_int(0, 900'000)}, FuzzRecorder::kSilenceOff);
    }
    sim.run_until(config.duration);

    trace.deliveries = std::move(recorder.deliveries);
    trace.transitions = std::move(recorder.transitions);
    trace.end = config.duration;
    trace.watchdog_trips = sim.watchdog_trips();
    return trace;
}

std::pair<std::uint64_t, std::uint64_t> check_failsafe(const FuzzTrace& trace, SimTime timeout)
{
    // command in force at time t: last transition at or before t, HardStop before any
    const auto command_at = [&](SimTime t) {
        EStopCommand cmd = EStopCommand::HardStop;
        for (const auto& [when, to] : trace.transitions)
        {
            if (when > t)
            {
                break;
            }
            cmd = to;
        }
        return cmd;
    };
    const auto check_window = [&](SimTime from, SimTime to, bool closed) -> std::uint64_t {
        std::uint64_t bad = command_at(from) != EStopCommand::HardStop ? 1 : 0;
        for (const auto& [when, cmd] : trace.transitions)
        {
            const bool inside = when > from && (closed ? when <= to : when < to);
            if (inside && cmd != EStopCommand::HardStop)
            {
                ++bad;
            }
        }
        return bad;
    };

    std::uint64_t windows = 0;
    std::uint64_t violations = 0;
    const auto& d = trace.deliveries;
    if (d.empty())
    {
        ++windows;
        violations += check_window(SimTime{0}, trace.end, true);
        return {windows, violations};
    }
    if (d.front() > SimTime{0})
    {
        ++windows;
        violations += check_window(SimTime{0}, d.front(), false);
    }
    for (std::size_t i = 0; i + 1 < d.size(); ++i)
    {
        if (d[i] + timeout < d[i + 1])
        {
            ++windows;
            violations += check_window(d[i] + timeout, d[i + 1], false);
        }
    }
    if (d.back() + timeout <= trace.end)
    {
        ++windows;
        violations += check_window(d.back() + timeout, trace.end, true);
    }
    return {windows, violations};
}

FailSafeReport fuzz_failsafe(const FailSafeFuzzConfig& config, ExecPolicy policy)
{
    const sim::RandomSource root(config.seed);
    const auto n = static_cast<std::ptrdiff_t>(config.traces);
    std::vector<FailSafeReport> partial(config.traces);
    const auto one = [&](std::ptrdiff_t i) {
        const std::uint64_t trace_seed = root.fork(static_cast<std::uint64_t>(i)).next_u64();
        const FuzzTrace trace = generate_fuzz_trace(trace_seed, config);
        const auto [windows, violations] = check_failsafe(trace, config.watchdog.timeout);
        auto& p = partial[static_cast<std::size_t>(i)];
        p.traces = 1;
        p.deliveries = trace.deliveries.size();
        p.silent_windows = windows;
        p.violations = violations;
        p.watchdog_trips = trace.watchdog_trips;
    };
    if (policy == ExecPolicy::Serial)
    {
        for (std::ptrdiff_t i = 0; i < n; ++i)
        {
            one(i);
        }
    }
    else
    {
#pragma omp parallel for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < n; ++i)
        {
            one(i);
        }
    }
    FailSafeReport total;
    for (const auto& p : partial)
    {
        total.traces += p.traces;
        total.deliveries += p.deliveries;
        total.silent_windows += p.silent_windows;
        total.violations += p.violations;
        total.watchdog_trips += p.watchdog_trips;
    }
    return total;
}

// ---- export ------------------------------------------------------------------

nlohmann::ordered_json to_json(const LatencyStats& s)
{
    nlohmann::ordered_json j;
    j["count"] = s.count;
    j["mean_ms"] = s.mean_ms;
    j["std_ms"] = s.std_ms;
    j["max_ms"] = s.max_ms;
    j["min_ms"] = s.min_ms;
    if (!s.samples_us.empty())
    {
        j["samples_us"] = s.samples_us;
    }
    return j;
}

LatencyStats stats_from_json(const nlohmann::json& j)
{
    LatencyStats s;
    s.count = j.at("count").get<std::size_t>();
    s.mean_ms = j.at("mean_ms").get<double>();
    s.std_ms = j.at("std_ms").get<double>();
    s.max_ms = j.at("max_ms").get<double>();
    s.min_ms = j.at("min_ms").get<double>();
    if (j.contains("samples_us"))
    {
        s.samples_us = j.at("samples_us").get<std::vector<std::int64_t>>();
    }
    return s;
}

namespace
{

nlohmann::ordered_json to_json(const LinkCounters& c)
{
    nlohmann::ordered_json j;
    j["sent"] = c.sent;
    j["delivered"] = c.delivered;
    j["lost"] = c.lost;
    return j;
}

LinkCounters counters_from_json(const nlohmann::json& j)
{
    return LinkCounters{j.at("sent").get<std::uint64_t>(), j.at("delivered").get<std::uint64_t>(),
                        j.at("lost").get<std::uint64_t>()};
}

} // namespace

nlohmann::ordered_json to_json(const ExperimentReport& r)
{
    nlohmann::ordered_json j;
    j["schema"] = kReportSchema;
    nlohmann::ordered_json cfg;
    cfg["scenario"] = r.scenario;
    cfg["toggles"] = r.toggles;
    cfg["seed"] = r.seed;
    cfg["dwell_min_us"] = r.dwell_min.count();
    cfg["dwell_max_us"] = r.dwell_max.count();
    cfg["measure"] = to_string(r.measure);
    j["config"] = std::move(cfg);
    if (r.release)
    {
        j["release"] = to_json(*r.release);
    }
    if (r.activate)
    {
        j["activate"] = to_json(*r.activate);
    }
    nlohmann::ordered_json chans = nlohmann::ordered_json::array();
    for (const auto& c : r.channels)
    {
        nlohmann::ordered_json cj;
        cj["id"] = protocol::to_string(c.channel);
        cj["forward"] = to_json(c.forward);
        cj["echo"] = to_json(c.echo);
        chans.push_back(std::move(cj));
    }
    j["channels"] = std::move(chans);
    j["engine_events"] = r.engine_events;
    j["sim_duration_us"] = r.sim_duration.count();
    j["watchdog_trips"] = r.watchdog_trips;
    j["aborted"] = r.aborted;
    j["diagnostic"] = r.diagnostic;
    return j;
}

ExperimentReport report_from_json(const nlohmann::json& j)
{
    if (j.at("schema").get<std::string>() != kReportSchema)
    {
        throw std::invalid_argument("report: unsupported schema " + j.at("schema").dump());
    }
    ExperimentReport r;
    const auto& cfg = j.at("config");
    r.scenario = cfg.at("scenario").get<std::string>();
    r.toggles = cfg.at("toggles").get<std::size_t>();
    r.seed = cfg.at("seed").get<std::uint64_t>();
    r.dwell_min = SimTime{cfg.at("dwell_min_us").get<std::int64_t>()};
    r.dwell_max = SimTime{cfg.at("dwell_max_us").get<std::int64_t>()};
    const auto m = measure_from_string(cfg.at("measure").get<std::string>());
    if (!m)
    {
        throw std::invalid_argument("report: unknown measure");
    }
    r.measure = *m;
    if (j.contains("release"))
    {
        r.release = stats_from_json(j.at("release"));
    }
    if (j.contains("activate"))
    {
        r.activate = stats_from_json(j.at("activate"));
    }
    const auto& chans = j.at("channels");
    if (chans.size() != protocol::kChannelCount)
    {
        throw std::invalid_argument("report: expected one entry per channel");
    }
    for (const auto& cj : chans)
    {
        const auto id = protocol::channel_from_string(cj.at("id").get<std::string>());
        if (!id)
        {
            throw std::invalid_argument("report: unknown channel id");
        }
        auto& c = r.channels[protocol::index(*id)];
        c.channel = *id;
        c.forward = counters_from_json(cj.at("forward"));
        c.echo = counters_from_json(cj.at("echo"));
    }
    r.engine_events = j.at("engine_events").get<std::uint64_t>();
    r.sim_duration = SimTime{j.at("sim_duration_us").get<std::int64_t>()};
    r.watchdog_trips = j.at("watchdog_trips").get<std::uint64_t>();
    r.aborted = j.at("aborted").get<bool>();
    r.diagnostic = j.at("diagnostic").get<std::string>();
    return r;
}

nlohmann::ordered_json to_json(const ProbeReport& r)
{
    nlohmann::ordered_json j;
    j["schema"] = "safelink.probe/1";
    j["scenario"] = r.scenario;
    j["probes"] = r.probes;
    j["seed"] = r.seed;
    j["trip"] = to_json(r.trip);
    j["trips_in_silence"] = r.trips_in_silence;
    j["probes_without_trip"] = r.probes_without_trip;
    j["trips_outside_silence"] = r.trips_outside_silence;
    j["aborted"] = r.aborted;
    j["diagnostic"] = r.diagnostic;
    return j;
}

namespace
{

std::string csv_row(const ExperimentReport& r)
{
    const LatencyStats empty;
    const LatencyStats& s = r.release ? *r.release : (r.activate ? *r.activate : empty);
    char line[256];
    std::snprintf(line, sizeof line, "%s,%.1f,%.1f,%.1f,%.1f,%zu,%llu\n", r.scenario.c_str(), s.mean_ms, s.std_ms,
                  s.max_ms, s.min_ms, s.count, static_cast<unsigned long long>(r.seed));
    return line;
}

constexpr std::string_view kCsvHeader = "scenario,mean_ms,std_ms,max_ms,min_ms,count,seed\n";

} // namespace

std::string export_report(const ExperimentReport& report, ExportFormat format)
{
    if (format == ExportFormat::Json)
    {
        return to_json(report).dump(2) + "\n";
    }
    return std::string(kCsvHeader) + csv_row(report);
}

std::string export_reports(std::span<const ExperimentReport> reports, ExportFormat format)
{
    if (format == ExportFormat::Json)
    {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : reports)
        {
            arr.push_back(to_json(r));
        }
        return arr.dump(2) + "\n";
    }
    std::string out(kCsvHeader);
    for (const auto& r : reports)
    {
        out += csv_row(r);
    }
    return out;
}

} // namespace safelink::harness
