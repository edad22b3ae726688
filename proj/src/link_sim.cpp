#include "link_sim.hpp"

#include <string>

namespace safelink::harness::detail
{

namespace
{

sim::RandomSource stream(const sim::RandomSource& root, std::string_view prefix, ChannelId ch)
{
    return root.fork(std::string(prefix) + std::string(protocol::to_string(ch)));
}

} // namespace

LinkSim::LinkSim(const LinkSimConfig& config)
    : scenario_(config.scenario),
      sender_(config.schedule, config.watchdog, config.scenario.enabled_mask(), SimTime{0},
              EStopCommand::HardStop, config.log),
      receiver_(config.schedule, config.watchdog, config.log)
{
    scenario_.validate();
    if (config.gate)
    {
        gate_.emplace(*config.gate);
    }
    const sim::RandomSource root(config.seed);
    for (const ChannelId ch : protocol::kAllChannels)
    {
        forward_rng_[protocol::index(ch)] = stream(root, "forward.", ch);
        echo_rng_[protocol::index(ch)] = stream(root, "echo.", ch);
        counters_[protocol::index(ch)].channel = ch;
    }
    reschedule_poll();
}

void LinkSim::reschedule_poll()
{
    if (poll_handle_)
    {
        engine_.cancel(*poll_handle_);
        poll_handle_.reset();
    }
    if (const auto next = sender_.next_emission())
    {
        poll_handle_ = engine_.schedule(*next, kSenderEntity, PollEvent{});
    }
}

void LinkSim::command(EStopCommand cmd)
{
    for (const auto& frame : sender_.set_command(cmd, engine_.now()))
    {
        send(frame);
    }
    reschedule_poll();
}

sim::EventHandle LinkSim::timer(SimTime at, int tag)
{
    return engine_.schedule(at, kControllerEntity, TimerEvent{tag});
}

void LinkSim::run_until(SimTime t_end)
{
    engine_.run_until(t_end, [this](const LinkEngine::event_type& ev) { dispatch(ev); });
}

void LinkSim::send(const protocol::StatusFrame& frame)
{
    const auto i = protocol::index(frame.channel);
    const bool echo = frame.direction == protocol::Direction::ReceiverToSender;
    auto& counter = echo ? counters_[i].echo : counters_[i].forward;
    auto& rng = echo ? echo_rng_[i] : forward_rng_[i];
    ++counter.sent;
    // draw even when silenced so the loss/jitter streams stay aligned
    const auto arrival = channels::transmit(frame, scenario_.channels[i], engine_.now(), rng);
    if (!arrival || silenced_)
    {
        ++counter.lost;
        return;
    }
    ++counter.delivered;
    engine_.schedule(*arrival, echo ? kSenderEntity : kReceiverEntity, DeliverEvent{frame});
}

void LinkSim::apply_effective(EStopCommand before)
{
    const EStopCommand after = receiver_.effective_command();
    if (after == before)
    {
        return;
    }
    if (gate_)
    {
        gate_->apply(after, engine_.now());
        schedule_gate_step(true);
    }
    if (observer_ != nullptr)
    {
        observer_->on_effective_change(after, engine_.now());
    }
}

void LinkSim::schedule_gate_step(bool realign)
{
    if (gate_step_handle_ && engine_.is_pending(*gate_step_handle_))
    {
        if (!realign)
        {
            return;
        }
        engine_.cancel(*gate_step_handle_);
    }
    gate_step_handle_.reset();
    if (gate_->needs_step())
    {
        gate_step_handle_ = engine_.schedule(engine_.now() + gate_->config().step, kGateEntity, GateStepEvent{});
    }
}

void LinkSim::dispatch(const LinkEngine::event_type& ev)
{
    const SimTime now = ev.fire_time;
    if (std::holds_alternative<PollEvent>(ev.payload))
    {
        poll_handle_.reset();
        for (const auto& frame : sender_.poll(now))
        {
            send(frame);
        }
        reschedule_poll();
    }
    else if (const auto* d = std::get_if<DeliverEvent>(&ev.payload))
    {
        if (d->frame.direction == protocol::Direction::ReceiverToSender)
        {
            sender_.on_echo(d->frame, now);
            return;
        }
        const EStopCommand before = receiver_.effective_command();
        const auto echo = receiver_.on_frame(d->frame, now);
        if (watchdog_handle_)
        {
            engine_.cancel(*watchdog_handle_);
        }
        watchdog_handle_ = engine_.schedule(*receiver_.watchdog_deadline(), kReceiverEntity, WatchdogEvent{});
        if (observer_ != nullptr)
        {
            observer_->on_delivery(now);
        }
        apply_effective(before);
        if (echo)
        {
            send(*echo);
        }
    }
    else if (std::holds_alternative<WatchdogEvent>(ev.payload))
    {
        watchdog_handle_.reset();
        const EStopCommand before = receiver_.effective_command();
        receiver_.watchdog_fire(now);
        if (before != EStopCommand::HardStop)
        {
            ++watchdog_trips_;
        }
        apply_effective(before);
    }
    else if (std::holds_alternative<GateStepEvent>(ev.payload))
    {
        gate_step_handle_.reset();
        gate_->advance_to(now);
        if (gate_->output_on() != output_on_)
        {
            output_on_ = gate_->output_on();
            if (observer_ != nullptr)
            {
                observer_->on_output_change(output_on_, now);
            }
        }
        schedule_gate_step(false);
    }
    else if (const auto* t = std::get_if<TimerEvent>(&ev.payload))
    {
        if (observer_ != nullptr)
        {
            observer_->on_timer(t->tag, now);
        }
    }
}

} // namespace safelink::harness::detail
