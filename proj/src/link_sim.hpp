#pragma once

// Wiring of sender -> channels -> receiver -> power gate on one engine. Shared
// by the experiment drivers; not part of the public interface.

#include "safelink/channels.hpp"
#include "safelink/harness.hpp"
#include "safelink/power_gate.hpp"
#include "safelink/protocol.hpp"
#include "safelink/random.hpp"
#include "safelink/sim.hpp"

#include <array>
#include <optional>
#include <variant>

namespace safelink::harness::detail
{

struct PollEvent
{
};

struct DeliverEvent
{
    protocol::StatusFrame frame;
};

struct WatchdogEvent
{
};

struct GateStepEvent
{
};

struct TimerEvent
{
    int tag = 0;
};

using Payload = std::variant<PollEvent, DeliverEvent, WatchdogEvent, GateStepEvent, TimerEvent>;
using LinkEngine = sim::Engine<Payload>;

enum Entity : sim::EntityId
{
    kSenderEntity = 1,
    kReceiverEntity = 2,
    kGateEntity = 3,
    kControllerEntity = 4,
};

class LinkObserver
{
public:
    virtual ~LinkObserver() = default;
    virtual void on_delivery(SimTime /*now*/) {}
    virtual void on_effective_change(EStopCommand /*cmd*/, SimTime /*now*/) {}
    virtual void on_output_change(bool /*on*/, SimTime /*now*/) {}
    virtual void on_timer(int /*tag*/, SimTime /*now*/) {}
};

struct LinkSimConfig
{
    ScenarioSpec scenario;
    protocol::ScheduleConfig schedule;
    protocol::WatchdogConfig watchdog;
    std::optional<gate::GateConfig> gate;
    std::uint64_t seed = 1;
    protocol::TransitionLog* log = nullptr;
};

class LinkSim
{
public:
    explicit LinkSim(const LinkSimConfig& config);

    LinkSim(const LinkSim&) = delete;
    LinkSim& operator=(const LinkSim&) = delete;

    void set_observer(LinkObserver* observer) noexcept { observer_ = observer; }

    SimTime now() const noexcept { return engine_.now(); }
    void command(EStopCommand cmd);
    /// Immediate re-send of the current state (as after a button press).
    void resend() { command(sender_.current_command()); }
    void set_silenced(bool silenced) noexcept { silenced_ = silenced; }
    bool silenced() const noexcept { return silenced_; }

    sim::EventHandle timer(SimTime at, int tag);
    bool cancel(sim::EventHandle handle) { return engine_.cancel(handle); }
    void run_until(SimTime t_end);
    void stop() noexcept { engine_.stop(); }

    const LinkEngine& engine() const noexcept { return engine_; }
    const protocol::Sender& sender() const noexcept { return sender_; }
    const protocol::Receiver& receiver() const noexcept { return receiver_; }
    const gate::PowerGate* gate() const noexcept { return gate_ ? &*gate_ : nullptr; }
    const std::array<ChannelCounters, protocol::kChannelCount>& counters() const noexcept { return counters_; }
    std::uint64_t watchdog_trips() const noexcept { return watchdog_trips_; }

private:
    void dispatch(const LinkEngine::event_type& ev);
    void send(const protocol::StatusFrame& frame);
    void reschedule_poll();
    void apply_effective(EStopCommand before);
    void schedule_gate_step(bool realign);

    ScenarioSpec scenario_;
    LinkEngine engine_;
    protocol::Sender sender_;
    protocol::Receiver receiver_;
    std::optional<gate::PowerGate> gate_;
    std::array<sim::RandomSource, protocol::kChannelCount> forward_rng_;
    std::array<sim::RandomSource, protocol::kChannelCount> echo_rng_;
    std::array<ChannelCounters, protocol::kChannelCount> counters_{};
    std::optional<sim::EventHandle> poll_handle_;
    std::optional<sim::EventHandle> watchdog_handle_;
    std::optional<sim::EventHandle> gate_step_handle_;
    LinkObserver* observer_ = nullptr;
    bool silenced_ = false;
    bool output_on_ = false;
    std::uint64_t watchdog_trips_ = 0;
};

} // namespace safelink::harness::detail
