#include "safelink/protocol.hpp"

#include "json.hpp"

#include <stdexcept>

namespace safelink::protocol
{

std::string_view to_string(EStopCommand cmd) noexcept
{
    switch (cmd)
    {
    case EStopCommand::HardStop: return "HardStop";
    case EStopCommand::SoftStop: return "SoftStop";
    case EStopCommand::Run: return "Run";
    }
    return "?";
}

std::string_view to_string(ChannelId ch) noexcept
{
    switch (ch)
    {
    case ChannelId::FastA: return "FastA";
    case ChannelId::FastB: return "FastB";
    case ChannelId::Slow: return "Slow";
    }
    return "?";
}

std::string_view to_string(Direction dir) noexcept
{
    return dir == Direction::SenderToReceiver ? "SenderToReceiver" : "ReceiverToSender";
}

std::string_view to_string(LinkHealth h) noexcept { return h == LinkHealth::Alive ? "Alive" : "Dead"; }

std::optional<EStopCommand> command_from_string(std::string_view s) noexcept
{
    for (auto cmd : {EStopCommand::HardStop, EStopCommand::SoftStop, EStopCommand::Run})
    {
        if (to_string(cmd) == s)
        {
            return cmd;
        }
    }
    return std::nullopt;
}

std::optional<ChannelId> channel_from_string(std::string_view s) noexcept
{
    for (auto ch : kAllChannels)
    {
        if (to_string(ch) == s)
        {
            return ch;
        }
    }
    return std::nullopt;
}

// ---- wire format ----------------------------------------------------------

std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data) noexcept
{
    std::uint16_t crc = 0xffff;
    for (const std::uint8_t byte : data)
    {
        crc ^= static_cast<std::uint16_t>(byte) << 8;
        for (int bit = 0; bit < 8; ++bit)
        {
            crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021) : static_cast<std::uint16_t>(crc << 1);
        }
    }
    return crc;
}

std::array<std::uint8_t, kFramePayloadBytes> encode_frame(const StatusFrame& frame) noexcept
{
    std::array<std::uint8_t, kFramePayloadBytes> out{};
    for (int i = 0; i < 4; ++i)
    {
        out[i] = static_cast<std::uint8_t>(frame.seq >> (8 * i));
    }
    out[4] = static_cast<std::uint8_t>(frame.command);
    out[5] = static_cast<std::uint8_t>(static_cast<unsigned>(frame.channel) |
                                       (frame.direction == Direction::ReceiverToSender ? 0x4U : 0x0U));
    const std::uint16_t crc = crc16_ccitt(std::span<const std::uint8_t>(out.data(), 6));
    out[6] = static_cast<std::uint8_t>(crc & 0xff);
    out[7] = static_cast<std::uint8_t>(crc >> 8);
    return out;
}

std::optional<StatusFrame> decode_frame(std::span<const std::uint8_t, kFramePayloadBytes> bytes) noexcept
{
    const std::uint16_t crc = crc16_ccitt(bytes.first<6>());
    if (bytes[6] != (crc & 0xff) || bytes[7] != (crc >> 8))
    {
        return std::nullopt;
    }
    if (bytes[4] > static_cast<std::uint8_t>(EStopCommand::Run) || (bytes[5] & 0x3) > 2 || (bytes[5] & ~0x7U) != 0)
    {
        return std::nullopt;
    }
    StatusFrame f;
    f.seq = 0;
    for (int i = 0; i < 4; ++i)
    {
        f.seq |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    }
    f.command = static_cast<EStopCommand>(bytes[4]);
    f.channel = static_cast<ChannelId>(bytes[5] & 0x3);
    f.direction = (bytes[5] & 0x4) ? Direction::ReceiverToSender : Direction::SenderToReceiver;
    return f;
}

// ---- configs ----------------------------------------------------------------

void ScheduleConfig::validate() const
{
    if (fast_period <= SimTime{0} || slow_period <= SimTime{0} || echo_period <= SimTime{0})
    {
        throw std::invalid_argument("ScheduleConfig: periods must be positive");
    }
    if (slow_phase < SimTime{0})
    {
        throw std::invalid_argument("ScheduleConfig: slow_phase must be non-negative");
    }
}

void WatchdogConfig::validate() const
{
    if (timeout <= SimTime{0})
    {
        throw std::invalid_argument("WatchdogConfig: timeout must be positive");
    }
}

// ---- transition log -----------------------------------------------------------

void TransitionLog::record(SimTime time, std::string_view entity, std::string_view from, std::string_view to,
                           std::string_view trigger)
{
    records_.push_back(TransitionRecord{time, std::string(entity), std::string(from), std::string(to),
                                        std::string(trigger)});
}

std::string TransitionLog::to_jsonl() const
{
    std::string out;
    for (const auto& r : records_)
    {
        nlohmann::ordered_json j;
        j["time_us"] = r.time.count();
        j["entity"] = r.entity;
        j["from"] = r.from;
        j["to"] = r.to;
        j["trigger"] = r.trigger;
        out += j.dump();
        out += '\n';
    }
    return out;
}

// ---- sender -----------------------------------------------------------------

Sender::Sender(ScheduleConfig schedule, WatchdogConfig watchdog, ChannelMask enabled, SimTime start,
               EStopCommand initial, TransitionLog* log)
    : schedule_(schedule), watchdog_(watchdog), enabled_(enabled), command_(initial), log_(log)
{
    schedule_.validate();
    watchdog_.validate();
    next_emit_[index(ChannelId::FastA)] = start + schedule_.fast_period;
    next_emit_[index(ChannelId::FastB)] = start + schedule_.fast_period;
    next_emit_[index(ChannelId::Slow)] = start + schedule_.slow_phase + schedule_.slow_period;
}

SimTime Sender::period(ChannelId ch) const noexcept
{
    return ch == ChannelId::Slow ? schedule_.slow_period : schedule_.fast_period;
}

StatusFrame Sender::make_frame(std::uint32_t seq, ChannelId ch, SimTime now) const noexcept
{
    return StatusFrame{seq, command_, now, ch, Direction::SenderToReceiver};
}

std::vector<StatusFrame> Sender::set_command(EStopCommand cmd, SimTime now)
{
    if (log_ != nullptr && cmd != command_)
    {
        log_->record(now, "sender", to_string(command_), to_string(cmd), "button");
    }
    command_ = cmd;
    const std::uint32_t seq = next_seq_++;
    std::vector<StatusFrame> frames;
    for (const ChannelId ch : kAllChannels)
    {
        if (enabled_[index(ch)])
        {
            frames.push_back(make_frame(seq, ch, now));
        }
        next_emit_[index(ch)] = now + period(ch);
    }
    return frames;
}

std::vector<StatusFrame> Sender::poll(SimTime now)
{
    std::vector<StatusFrame> frames;
    std::optional<std::uint32_t> seq;
    for (const ChannelId ch : kAllChannels)
    {
        auto& next = next_emit_[index(ch)];
        if (!enabled_[index(ch)] || next > now)
        {
            continue;
        }
        if (!seq)
        {
            seq = next_seq_++;
        }
        frames.push_back(make_frame(*seq, ch, now));
        while (next <= now)
        {
            next += period(ch);
        }
    }
    return frames;
}

std::optional<SimTime> Sender::next_emission() const noexcept
{
    std::optional<SimTime> best;
    for (const ChannelId ch : kAllChannels)
    {
        if (enabled_[index(ch)] && (!best || next_emit_[index(ch)] < *best))
        {
            best = next_emit_[index(ch)];
        }
    }
    return best;
}

LinkHealth Sender::on_echo(const StatusFrame& frame, SimTime now)
{
    if (frame.direction != Direction::ReceiverToSender)
    {
        throw std::invalid_argument("Sender::on_echo: frame is not an echo");
    }
    if (!is_bidirectional(frame.channel))
    {
        throw std::invalid_argument("Sender::on_echo: echo on unidirectional channel Slow");
    }
    const auto i = index(frame.channel);
    last_echo_[i] = now;
    last_echo_cmd_[i] = frame.command;
    const LinkHealth h = link_health(frame.channel, now);
    if (log_ != nullptr && h != reported_health_[i])
    {
        log_->record(now, std::string("sender.link.") + std::string(to_string(frame.channel)),
                     to_string(reported_health_[i]), to_string(h), "echo");
    }
    reported_health_[i] = h;
    return h;
}

LinkHealth Sender::link_health(ChannelId ch, SimTime now) const noexcept
{
    const auto& last = last_echo_[index(ch)];
    return (last && now - *last <= watchdog_.timeout) ? LinkHealth::Alive : LinkHealth::Dead;
}

// ---- receiver ---------------------------------------------------------------

Receiver::Receiver(ScheduleConfig schedule, WatchdogConfig watchdog, TransitionLog* log)
    : schedule_(schedule), watchdog_(watchdog), log_(log)
{
    schedule_.validate();
    watchdog_.validate();
    last_echo_cmd_.fill(EStopCommand::HardStop);
}

void Receiver::set_effective(EStopCommand cmd, SimTime now, std::string_view trigger)
{
    if (cmd == effective_)
    {
        return;
    }
    if (log_ != nullptr)
    {
        log_->record(now, "receiver", to_string(effective_), to_string(cmd), trigger);
    }
    effective_ = cmd;
}

std::optional<StatusFrame> Receiver::on_frame(const StatusFrame& frame, SimTime now)
{
    if (frame.direction != Direction::SenderToReceiver)
    {
        throw std::invalid_argument("Receiver::on_frame: echo frame delivered to receiver");
    }
    last_rx_ = now;
    if (!highest_seq_ || frame.seq > *highest_seq_)
    {
        highest_seq_ = frame.seq;
        latched_ = frame.command;
    }
    tripped_ = false;
    set_effective(latched_, now, "frame");

    if (!is_bidirectional(frame.channel))
    {
        return std::nullopt;
    }
    const auto i = index(frame.channel);
    const bool due = !last_echo_sent_[i] || now - *last_echo_sent_[i] >= schedule_.echo_period ||
                     last_echo_cmd_[i] != effective_;
    if (!due)
    {
        return std::nullopt;
    }
    last_echo_sent_[i] = now;
    last_echo_cmd_[i] = effective_;
    return StatusFrame{echo_seq_++, effective_, now, frame.channel, Direction::ReceiverToSender};
}

EStopCommand Receiver::watchdog_fire(SimTime now)
{
    if (last_rx_ && now - *last_rx_ < watchdog_.timeout)
    {
        throw std::logic_error("Receiver::watchdog_fire: deadline not reached");
    }
    tripped_ = true;
    set_effective(EStopCommand::HardStop, now, "watchdog");
    return effective_;
}

std::optional<SimTime> Receiver::watchdog_deadline() const noexcept
{
    if (!last_rx_)
    {
        return std::nullopt;
    }
    return *last_rx_ + watchdog_.timeout;
}

} // namespace safelink::protocol
