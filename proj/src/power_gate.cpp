#include "safelink/power_gate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace safelink::gate
{

namespace
{

double seconds(SimTime t) noexcept { return static_cast<double>(t.count()) * 1e-6; }

} // namespace

std::string_view to_string(Branch b) noexcept
{
    switch (b)
    {
    case Branch::Drive: return "Drive";
    case Branch::Flippers: return "Flippers";
    case Branch::Manipulator: return "Manipulator";
    }
    return "?";
}

void GateConfig::validate() const
{
    if (!(bus_voltage_v > 0.0) || !(source_resistance_ohm > 0.0) || !(trip_threshold_a > 0.0))
    {
        throw std::invalid_argument("GateConfig: bus voltage, source resistance and trip threshold must be positive");
    }
    if (trip_time <= SimTime{0} || step <= SimTime{0} || limiter.tau <= SimTime{0})
    {
        throw std::invalid_argument("GateConfig: trip_time, step and limiter tau must be positive");
    }
    if (!(limiter.r_hot_ohm >= 0.0) || !(limiter.r_cold_ohm >= limiter.r_hot_ohm))
    {
        throw std::invalid_argument("GateConfig: limiter needs 0 <= r_hot <= r_cold");
    }
    for (const auto& load : loads)
    {
        if (!(load.capacitance_f > 0.0) || !(load.resistance_ohm > 0.0))
        {
            throw std::invalid_argument("GateConfig: load capacitance and resistance must be positive");
        }
    }
    if (!(output_threshold > 0.0 && output_threshold < 1.0))
    {
        throw std::invalid_argument("GateConfig: output_threshold must be in (0, 1)");
    }
}

nlohmann::ordered_json to_json(const GateConfig& c)
{
    nlohmann::ordered_json j;
    j["bus_voltage_v"] = c.bus_voltage_v;
    j["source_resistance_ohm"] = c.source_resistance_ohm;
    j["trip_threshold_a"] = c.trip_threshold_a;
    j["trip_time_us"] = c.trip_time.count();
    j["limiter"] = {{"r_cold_ohm", c.limiter.r_cold_ohm},
                    {"r_hot_ohm", c.limiter.r_hot_ohm},
                    {"tau_us", c.limiter.tau.count()}};
    nlohmann::ordered_json loads = nlohmann::ordered_json::array();
    for (const Branch b : kAllBranches)
    {
        const auto& l = c.loads[index(b)];
        nlohmann::ordered_json lj;
        lj["branch"] = to_string(b);
        lj["capacitance_f"] = l.capacitance_f;
        lj["resistance_ohm"] = l.resistance_ohm;
        lj["has_limiter"] = l.has_limiter;
        loads.push_back(std::move(lj));
    }
    j["loads"] = std::move(loads);
    j["step_us"] = c.step.count();
    j["output_threshold"] = c.output_threshold;
    j["hardware_buttons"] = c.hardware_buttons;
    return j;
}

GateConfig gate_config_from_json(const nlohmann::json& j)
{
    GateConfig c;
    c.bus_voltage_v = j.value("bus_voltage_v", c.bus_voltage_v);
    c.source_resistance_ohm = j.value("source_resistance_ohm", c.source_resistance_ohm);
    c.trip_threshold_a = j.value("trip_threshold_a", c.trip_threshold_a);
    c.trip_time = SimTime{j.value("trip_time_us", c.trip_time.count())};
    if (j.contains("limiter"))
    {
        const auto& l = j.at("limiter");
        c.limiter.r_cold_ohm = l.value("r_cold_ohm", c.limiter.r_cold_ohm);
        c.limiter.r_hot_ohm = l.value("r_hot_ohm", c.limiter.r_hot_ohm);
        c.limiter.tau = SimTime{l.value("tau_us", c.limiter.tau.count())};
    }
    if (j.contains("loads"))
    {
        for (const auto& lj : j.at("loads"))
        {
            const auto name = lj.at("branch").get<std::string>();
            const auto it = std::find_if(kAllBranches.begin(), kAllBranches.end(),
                                         [&](Branch b) { return to_string(b) == name; });
            if (it == kAllBranches.end())
            {
                throw std::invalid_argument("gate config: unknown branch " + name);
            }
            auto& l = c.loads[index(*it)];
            l.capacitance_f = lj.value("capacitance_f", l.capacitance_f);
            l.resistance_ohm = lj.value("resistance_ohm", l.resistance_ohm);
            l.has_limiter = lj.value("has_limiter", l.has_limiter);
        }
    }
    c.step = SimTime{j.value("step_us", c.step.count())};
    c.output_threshold = j.value("output_threshold", c.output_threshold);
    c.hardware_buttons = j.value("hardware_buttons", c.hardware_buttons);
    c.validate();
    return c;
}

GateConfig load_gate_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw std::runtime_error("cannot open gate config " + path.string());
    }
    return gate_config_from_json(nlohmann::json::parse(in));
}

double limiter_resistance(const LimiterConfig& limiter, SimTime since_on) noexcept
{
    const double t = std::max(0.0, seconds(since_on));
    return limiter.r_hot_ohm + (limiter.r_cold_ohm - limiter.r_hot_ohm) * std::exp(-t / seconds(limiter.tau));
}

std::string transient_csv(const std::vector<TransientSample>& samples)
{
    std::string out = "time_us,branch,current_a,voltage_v\n";
    char line[128];
    for (const auto& s : samples)
    {
        std::snprintf(line, sizeof line, "%lld,%s,%.6f,%.6f\n", static_cast<long long>(s.time.count()),
                      std::string(to_string(s.branch)).c_str(), s.current_a, s.voltage_v);
        out += line;
    }
    return out;
}

PowerGate::PowerGate(GateConfig config) : config_(config), buttons_(config.hardware_buttons, false)
{
    config_.validate();
}

double PowerGate::path_resistance(Branch branch, SimTime t) const noexcept
{
    const auto& b = branches_[index(branch)];
    double r = config_.source_resistance_ohm;
    if (config_.loads[index(branch)].has_limiter)
    {
        r += limiter_resistance(config_.limiter, t - b.on_since);
    }
    return r;
}

double PowerGate::quasi_static_voltage(Branch branch, SimTime t) const noexcept
{
    const double rl = config_.loads[index(branch)].resistance_ohm;
    return config_.bus_voltage_v * rl / (rl + path_resistance(branch, t));
}

double PowerGate::voltage_at(Branch branch, SimTime t) const noexcept
{
    const auto& b = branches_[index(branch)];
    switch (b.mode)
    {
    case Mode::Stepped: return b.v;
    case Mode::Tracking: return quasi_static_voltage(branch, t);
    case Mode::Off:
    {
        const auto& load = config_.loads[index(branch)];
        const double tau = load.resistance_ohm * load.capacitance_f;
        return b.v * std::exp(-seconds(t - b.v_time) / tau);
    }
    }
    return 0.0;
}

double PowerGate::output_voltage(Branch branch) const { return voltage_at(branch, now_); }

bool PowerGate::conduction_permitted() const noexcept
{
    return pin_ && command_ != EStopCommand::HardStop &&
           std::none_of(buttons_.begin(), buttons_.end(), [](bool pressed) { return pressed; });
}

void PowerGate::switch_on(Branch branch)
{
    auto& b = branches_[index(branch)];
    b.v = voltage_at(branch, now_);
    b.v_time = now_;
    b.mode = Mode::Stepped;
    b.on_since = now_;
    b.over_since.reset();
    b.current = (config_.bus_voltage_v - b.v) / path_resistance(branch, now_);
    b.peak = b.current;
    b.inrush_peak = b.current - b.v / config_.loads[index(branch)].resistance_ohm;
    if (b.current > config_.trip_threshold_a)
    {
        b.over_since = now_;
    }
}

void PowerGate::switch_off(Branch branch)
{
    auto& b = branches_[index(branch)];
    b.v = voltage_at(branch, now_);
    b.v_time = now_;
    b.mode = Mode::Off;
    b.current = 0.0;
    b.over_since.reset();
}

void PowerGate::update_conduction()
{
    const bool permitted = conduction_permitted();
    for (const Branch br : kAllBranches)
    {
        auto& b = branches_[index(br)];
        const bool want = permitted && !b.latched_fault;
        if (want && !conducting(b))
        {
            switch_on(br);
        }
        else if (!want && conducting(b))
        {
            switch_off(br);
        }
    }
}

GateState PowerGate::apply(EStopCommand cmd, SimTime now)
{
    advance_to(now);
    command_ = cmd;
    switch (cmd)
    {
    case EStopCommand::HardStop:
        pin_ = false;
        motion_inhibit_ = true;
        break;
    case EStopCommand::SoftStop:
        motion_inhibit_ = true;
        break;
    case EStopCommand::Run:
        pin_ = true;
        motion_inhibit_ = false;
        break;
    }
    update_conduction();
    sample_trace();
    return state();
}

GateState PowerGate::set_button(std::size_t button, bool pressed, SimTime now)
{
    if (button >= buttons_.size())
    {
        throw std::out_of_range("PowerGate::set_button: no such button");
    }
    advance_to(now);
    buttons_[button] = pressed;
    update_conduction();
    sample_trace();
    return state();
}

SwitchState PowerGate::reset_fault(Branch branch, SimTime now)
{
    advance_to(now);
    branches_[index(branch)].latched_fault = false;
    update_conduction();
    sample_trace();
    return switch_state(branch);
}

void PowerGate::inject_fault(Branch branch, SimTime now)
{
    advance_to(now);
    auto& b = branches_[index(branch)];
    b.latched_fault = true;
    if (conducting(b))
    {
        switch_off(branch);
    }
    sample_trace();
}

void PowerGate::check_trip(Branch branch)
{
    auto& b = branches_[index(branch)];
    if (b.current > config_.trip_threshold_a)
    {
        if (!b.over_since)
        {
            b.over_since = now_;
        }
        if (now_ - *b.over_since >= config_.trip_time)
        {
            b.latched_fault = true;
            switch_off(branch);
        }
    }
    else
    {
        b.over_since.reset();
    }
}

std::array<double, kBranchCount> PowerGate::step(SimTime dt)
{
    if (dt <= SimTime{0})
    {
        throw std::invalid_argument("PowerGate::step: dt must be positive");
    }
    const SimTime t0 = now_;
    const SimTime t1 = now_ + dt;
    const double v_bus = config_.bus_voltage_v;
    for (const Branch br : kAllBranches)
    {
        auto& b = branches_[index(br)];
        const auto& load = config_.loads[index(br)];
        if (b.mode == Mode::Stepped)
        {
            // exact update for the path resistance frozen at mid-step
            const double rp = path_resistance(br, t0 + dt / 2);
            const double v_inf = v_bus * load.resistance_ohm / (load.resistance_ohm + rp);
            const double tau = load.capacitance_f * rp * load.resistance_ohm / (rp + load.resistance_ohm);
            b.v = v_inf + (b.v - v_inf) * std::exp(-seconds(dt) / tau);
            b.v_time = t1;
        }
    }
    now_ = t1;
    std::array<double, kBranchCount> currents{};
    for (const Branch br : kAllBranches)
    {
        auto& b = branches_[index(br)];
        if (!conducting(b))
        {
            b.current = 0.0;
            continue;
        }
        b.current = (v_bus - voltage_at(br, now_)) / path_resistance(br, now_);
        b.peak = std::max(b.peak, b.current);
        b.inrush_peak =
            std::max(b.inrush_peak, b.current - voltage_at(br, now_) / config_.loads[index(br)].resistance_ohm);
        check_trip(br);
        if (b.mode == Mode::Stepped && b.current < 0.5 * config_.trip_threshold_a &&
            std::abs(b.v - quasi_static_voltage(br, now_)) < 0.01 * v_bus)
        {
            b.mode = Mode::Tracking;
        }
        currents[index(br)] = b.current;
    }
    update_output_sense();
    sample_trace();
    return currents;
}

void PowerGate::advance_to(SimTime now)
{
    if (now < now_)
    {
        throw std::logic_error("PowerGate::advance_to: time went backwards");
    }
    const bool any_stepped = std::any_of(branches_.begin(), branches_.end(),
                                         [](const BranchSim& b) { return b.mode == Mode::Stepped; });
    if (!any_stepped)
    {
        // analytic modes only; currents follow the quasi-static point
        now_ = now;
        for (const Branch br : kAllBranches)
        {
            auto& b = branches_[index(br)];
            b.current = conducting(b) ? (config_.bus_voltage_v - voltage_at(br, now_)) / path_resistance(br, now_)
                                      : 0.0;
        }
        update_output_sense();
        return;
    }
    while (now_ < now)
    {
        step(std::min(config_.step, now - now_));
    }
}

void PowerGate::update_output_sense()
{
    const auto& drive = branches_[index(Branch::Drive)];
    const bool above = voltage_at(Branch::Drive, now_) >= config_.output_threshold * config_.bus_voltage_v;
    if (!output_on_ && conducting(drive) && above)
    {
        output_on_ = true;
        last_output_change_ = now_;
    }
    else if (output_on_ && !above)
    {
        output_on_ = false;
        last_output_change_ = now_;
    }
}

bool PowerGate::needs_step() const
{
    const auto& drive = branches_[index(Branch::Drive)];
    if (std::any_of(branches_.begin(), branches_.end(), [](const BranchSim& b) { return b.mode == Mode::Stepped; }))
    {
        return true;
    }
    const bool above = voltage_at(Branch::Drive, now_) >= config_.output_threshold * config_.bus_voltage_v;
    if (output_on_)
    {
        return !conducting(drive) || !above;
    }
    return conducting(drive) && above;
}

SwitchState PowerGate::switch_state(Branch branch) const
{
    const auto& b = branches_[index(branch)];
    SwitchState s;
    s.branch = branch;
    s.conducting = conducting(b);
    s.latched_fault = b.latched_fault;
    s.reported_current_a = s.conducting ? b.current : 0.0;
    s.output_voltage_v = voltage_at(branch, now_);
    if (config_.loads[index(branch)].has_limiter)
    {
        const double r = s.conducting ? limiter_resistance(config_.limiter, now_ - b.on_since)
                                      : config_.limiter.r_cold_ohm;
        s.limiter = InrushLimiterState{r};
    }
    return s;
}

GateState PowerGate::state() const
{
    GateState g;
    g.mcu_enable_pin = pin_;
    g.hw_buttons = buttons_;
    g.motion_inhibit = motion_inhibit_;
    g.command = command_;
    for (const Branch br : kAllBranches)
    {
        g.branches[index(br)] = switch_state(br);
    }
    return g;
}

void PowerGate::sample_trace()
{
    if (!tracing_)
    {
        return;
    }
    for (const Branch br : kAllBranches)
    {
        const auto& b = branches_[index(br)];
        trace_.push_back(TransientSample{now_, br, conducting(b) ? b.current : 0.0, voltage_at(br, now_)});
    }
}

SimTime settling_time(const GateConfig& config)
{
    PowerGate gate(config);
    gate.apply(EStopCommand::Run, SimTime{0});
    while (!gate.output_on())
    {
        if (!gate.needs_step())
        {
            throw std::runtime_error("settling_time: drive output never reaches the detection threshold");
        }
        gate.step(config.step);
    }
    return gate.now();
}

} // namespace safelink::gate
