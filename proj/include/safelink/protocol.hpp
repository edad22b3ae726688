#pragma once

#include "safelink/sim.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace safelink::protocol
{

using sim::SimTime;
using namespace std::chrono_literals;

/// Three-valued safety state. HardStop cuts motor power, SoftStop keeps power
/// but inhibits motion, Run enables both.
enum class EStopCommand : std::uint8_t
{
    HardStop = 0,
    SoftStop = 1,
    Run = 2,
};

/// FastA: BLE-like link, FastB: ESP-NOW-like link, Slow: LoRa-like link.
enum class ChannelId : std::uint8_t
{
    FastA = 0,
    FastB = 1,
    Slow = 2,
};

inline constexpr std::size_t kChannelCount = 3;
inline constexpr std::array<ChannelId, kChannelCount> kAllChannels{ChannelId::FastA, ChannelId::FastB,
                                                                   ChannelId::Slow};

constexpr std::size_t index(ChannelId ch) noexcept { return static_cast<std::size_t>(ch); }
constexpr bool is_bidirectional(ChannelId ch) noexcept { return ch != ChannelId::Slow; }

enum class Direction : std::uint8_t
{
    SenderToReceiver = 0,
    ReceiverToSender = 1,
};

enum class LinkHealth : std::uint8_t
{
    Alive,
    Dead,
};

std::string_view to_string(EStopCommand cmd) noexcept;
std::string_view to_string(ChannelId ch) noexcept;
std::string_view to_string(Direction dir) noexcept;
std::string_view to_string(LinkHealth h) noexcept;
std::optional<EStopCommand> command_from_string(std::string_view s) noexcept;
std::optional<ChannelId> channel_from_string(std::string_view s) noexcept;

struct StatusFrame
{
    std::uint32_t seq = 0;
    EStopCommand command = EStopCommand::HardStop;
    SimTime origin_time{0};
    ChannelId channel = ChannelId::FastA;
    Direction direction = Direction::SenderToReceiver;
};

/// On-air frame size; drives the airtime model.
inline constexpr std::size_t kFramePayloadBytes = 8;

/// Wire layout: seq (u32 little endian), command (u8), flags (u8: bits 0-1
/// channel, bit 2 direction), CRC-16/CCITT-FALSE over the first six bytes
/// (u16 little endian). origin_time is simulation metadata and not encoded.
std::array<std::uint8_t, kFramePayloadBytes> encode_frame(const StatusFrame& frame) noexcept;
/// nullopt on checksum mismatch or out-of-range fields.
std::optional<StatusFrame> decode_frame(std::span<const std::uint8_t, kFramePayloadBytes> bytes) noexcept;
std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data) noexcept;

struct ScheduleConfig
{
    SimTime fast_period = 50ms;   // 20 Hz base rate
    SimTime slow_period = 111ms;  // ~9 Hz
    SimTime echo_period = 50ms;
    /// First slow emission happens at start + slow_phase + slow_period.
    SimTime slow_phase = 0ms;

    void validate() const;
};

struct WatchdogConfig
{
    SimTime timeout = 300ms;

    void validate() const;
};

using ChannelMask = std::array<bool, kChannelCount>;
inline constexpr ChannelMask kAllEnabled{true, true, true};

struct TransitionRecord
{
    SimTime time{0};
    std::string entity;
    std::string from;
    std::string to;
    std::string trigger;
};

/// Append-only record of state-machine transitions, exportable as JSON lines.
class TransitionLog
{
public:
    void record(SimTime time, std::string_view entity, std::string_view from, std::string_view to,
                std::string_view trigger);

    const std::vector<TransitionRecord>& records() const noexcept { return records_; }
    bool empty() const noexcept { return records_.empty(); }
    void clear() noexcept { records_.clear(); }

    /// One JSON object per line: {"time_us","entity","from","to","trigger"}.
    std::string to_jsonl() const;

private:
    std::vector<TransitionRecord> records_;
};

/// Handheld side: holds the commanded state, emits it on every enabled channel
/// at its period, immediately on change, and tracks echo-based link health of
/// the bidirectional channels.
class Sender
{
public:
    Sender(ScheduleConfig schedule, WatchdogConfig watchdog, ChannelMask enabled, SimTime start = SimTime{0},
           EStopCommand initial = EStopCommand::HardStop, TransitionLog* log = nullptr);

    /// Emits one frame per enabled channel at `now`, all sharing one fresh
    /// seq, and restarts every channel's periodic schedule at now + period.
    std::vector<StatusFrame> set_command(EStopCommand cmd, SimTime now);

    /// Emits a frame on each channel whose scheduled emission is due.
    std::vector<StatusFrame> poll(SimTime now);

    /// Earliest pending periodic emission over enabled channels; nullopt when
    /// no channel is enabled.
    std::optional<SimTime> next_emission() const noexcept;
    SimTime next_emission(ChannelId ch) const noexcept { return next_emit_[index(ch)]; }

    /// Throws std::invalid_argument for echoes on the unidirectional channel
    /// or frames travelling the wrong way.
    LinkHealth on_echo(const StatusFrame& frame, SimTime now);

    /// Alive iff an echo arrived within the watchdog timeout.
    LinkHealth link_health(ChannelId ch, SimTime now) const noexcept;
    std::optional<EStopCommand> confirmed_command(ChannelId ch) const noexcept
    {
        return last_echo_cmd_[index(ch)];
    }

    EStopCommand current_command() const noexcept { return command_; }
    std::uint32_t next_seq() const noexcept { return next_seq_; }
    bool enabled(ChannelId ch) const noexcept { return enabled_[index(ch)]; }
    const ScheduleConfig& schedule() const noexcept { return schedule_; }

private:
    SimTime period(ChannelId ch) const noexcept;
    StatusFrame make_frame(std::uint32_t seq, ChannelId ch, SimTime now) const noexcept;

    ScheduleConfig schedule_;
    WatchdogConfig watchdog_;
    ChannelMask enabled_;
    EStopCommand command_;
    std::uint32_t next_seq_ = 0;
    std::array<SimTime, kChannelCount> next_emit_{};
    std::array<std::optional<SimTime>, kChannelCount> last_echo_{};
    std::array<std::optional<EStopCommand>, kChannelCount> last_echo_cmd_{};
    std::array<LinkHealth, kChannelCount> reported_health_{LinkHealth::Dead, LinkHealth::Dead, LinkHealth::Dead};
    TransitionLog* log_;
};

/// Robot side: latches the freshest command, runs the global watchdog and
/// answers on bidirectional channels with echo frames.
///
/// Boots in HardStop with no reception history. The watchdog deadline is
/// exposed so the owning scheduler can keep one timer armed at
/// last_rx_time + timeout.
class Receiver
{
public:
    Receiver(ScheduleConfig schedule, WatchdogConfig watchdog, TransitionLog* log = nullptr);

    /// Updates freshness state and returns an echo for bidirectional channels
    /// when the echo schedule allows it or the effective command changed.
    std::optional<StatusFrame> on_frame(const StatusFrame& frame, SimTime now);

    /// Forces HardStop. Requires now - last_rx_time >= timeout (or no frame
    /// ever received); throws std::logic_error otherwise.
    EStopCommand watchdog_fire(SimTime now);

    std::optional<SimTime> watchdog_deadline() const noexcept;

    EStopCommand effective_command() const noexcept { return effective_; }
    EStopCommand latched_command() const noexcept { return latched_; }
    std::optional<SimTime> last_rx_time() const noexcept { return last_rx_; }
    std::optional<std::uint32_t> highest_seq_seen() const noexcept { return highest_seq_; }
    bool watchdog_tripped() const noexcept { return tripped_; }

private:
    void set_effective(EStopCommand cmd, SimTime now, std::string_view trigger);

    ScheduleConfig schedule_;
    WatchdogConfig watchdog_;
    std::optional<SimTime> last_rx_;
    std::optional<std::uint32_t> highest_seq_;
    EStopCommand latched_ = EStopCommand::HardStop;
    EStopCommand effective_ = EStopCommand::HardStop;
    bool tripped_ = false;
    std::uint32_t echo_seq_ = 0;
    std::array<std::optional<SimTime>, kChannelCount> last_echo_sent_{};
    std::array<EStopCommand, kChannelCount> last_echo_cmd_{};
    TransitionLog* log_;
};

} // namespace safelink::protocol
