#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace safelink::sim
{

/// Simulation time: integer microseconds since simulation start.
using SimTime = std::chrono::microseconds;

using namespace std::chrono_literals;

using EntityId = std::uint32_t;

struct EventHandle
{
    std::uint64_t id = 0;

    friend bool operator==(EventHandle, EventHandle) = default;
};

template <class Payload>
struct Event
{
    SimTime fire_time{};
    EntityId target = 0;
    Payload payload{};
    std::uint64_t tiebreak = 0;
};

/// Single-threaded discrete-event engine. Events fire in (fire_time, insertion
/// order) order; cancelled events are dropped lazily when they reach the head
/// of the queue.
template <class Payload>
class Engine
{
public:
    using event_type = Event<Payload>;

    SimTime now() const noexcept { return now_; }
    std::uint64_t processed() const noexcept { return processed_; }
    std::size_t pending() const noexcept { return pending_.size(); }

    /// FNV-1a digest over (fire_time, tiebreak, target) of every processed
    /// event. Two runs of the same event program compare equal iff their
    /// processing traces match.
    std::uint64_t trace_digest() const noexcept { return digest_; }

    EventHandle schedule(SimTime fire_time, EntityId target, Payload payload)
    {
        if (fire_time < now_)
        {
            throw std::logic_error("schedule: fire_time " + std::to_string(fire_time.count()) +
                                   "us precedes clock " + std::to_string(now_.count()) + "us");
        }
        const std::uint64_t id = next_seq_++;
        queue_.push(event_type{fire_time, target, std::move(payload), id});
        pending_.insert(id);
        return EventHandle{id};
    }

    EventHandle schedule_after(SimTime delay, EntityId target, Payload payload)
    {
        return schedule(now_ + delay, target, std::move(payload));
    }

    /// Returns whether the event was still pending.
    bool cancel(EventHandle handle) { return pending_.erase(handle.id) > 0; }

    bool is_pending(EventHandle handle) const { return pending_.contains(handle.id); }

    /// Ask run_until to return after the event currently being handled.
    void stop() noexcept { stop_requested_ = true; }

    std::optional<SimTime> next_time()
    {
        drop_cancelled();
        if (queue_.empty())
        {
            return std::nullopt;
        }
        return queue_.top().fire_time;
    }

    /// Processes every event with fire_time <= t_end and advances the clock to
    /// t_end. If the handler calls stop(), returns early with the clock at the
    /// stopping event's time.
    template <class Handler>
    std::size_t run_until(SimTime t_end, Handler&& handler)
    {
        if (t_end < now_)
        {
            throw std::logic_error("run_until: t_end precedes clock");
        }
        stop_requested_ = false;
        std::size_t count = 0;
        while (true)
        {
            drop_cancelled();
            if (queue_.empty() || queue_.top().fire_time > t_end)
            {
                break;
            }
            event_type ev = queue_.top();
            queue_.pop();
            pending_.erase(ev.tiebreak);
            now_ = ev.fire_time;
            ++processed_;
            ++count;
            mix(static_cast<std::uint64_t>(ev.fire_time.count()));
            mix(ev.tiebreak);
            mix(ev.target);
            handler(static_cast<const event_type&>(ev));
            if (stop_requested_)
            {
                stop_requested_ = false;
                return count;
            }
        }
        now_ = t_end;
        return count;
    }

private:
    struct Later
    {
        bool operator()(const event_type& a, const event_type& b) const noexcept
        {
            if (a.fire_time != b.fire_time)
            {
                return a.fire_time > b.fire_time;
            }
            return a.tiebreak > b.tiebreak;
        }
    };

    void drop_cancelled()
    {
        while (!queue_.empty() && !pending_.contains(queue_.top().tiebreak))
        {
            queue_.pop();
        }
    }

    void mix(std::uint64_t v) noexcept
    {
        for (int i = 0; i < 8; ++i)
        {
            digest_ ^= (v >> (8 * i)) & 0xffU;
            digest_ *= 0x100000001b3ULL;
        }
    }

    std::priority_queue<event_type, std::vector<event_type>, Later> queue_;
    std::unordered_set<std::uint64_t> pending_;
    SimTime now_{0};
    std::uint64_t next_seq_ = 0;
    std::uint64_t processed_ = 0;
    std::uint64_t digest_ = 0xcbf29ce484222325ULL;
    bool stop_requested_ = false;
};

} // namespace safelink::sim
