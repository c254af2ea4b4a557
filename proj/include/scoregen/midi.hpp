#ifndef SCOREGEN_MIDI_HPP
#define SCOREGEN_MIDI_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scoregen/errors.hpp"
#include "scoregen/report.hpp"
#include "scoregen/score.hpp"

namespace scoregen {

struct MidiParseResult {
    Score score;
    MidiImportReport report;
};

namespace midi_detail {

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ >= data_.size(); }

    std::uint8_t u8() {
        if (pos_ >= data_.size()) throw MalformedMidi(pos_, "unexpected end of data");
        return data_[pos_++];
    }

    std::uint8_t peek() const {
        if (pos_ >= data_.size()) throw MalformedMidi(pos_, "unexpected end of data");
        return data_[pos_];
    }

    std::uint16_t u16() { return static_cast<std::uint16_t>(u8() << 8 | u8()); }

    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | u8();
        return v;
    }

    // variable-length quantity, at most 4 bytes per the SMF spec
    std::uint32_t vlq() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = u8();
            v = v << 7 | (b & 0x7F);
            if (!(b & 0x80)) return v;
        }
        throw MalformedMidi(pos_, "variable-length quantity longer than 4 bytes");
    }

    void skip(std::size_t n) {
        if (n > remaining()) throw MalformedMidi(pos_, "length field exceeds data");
        pos_ += n;
    }

    void expect_magic(const char* magic) {
        for (int i = 0; i < 4; ++i)
            if (u8() != static_cast<std::uint8_t>(magic[i]))
                throw MalformedMidi(pos_ - 1, std::string("expected chunk '") + magic + "'");
    }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

// nearest slot of `rem`/`tpq` beats scaled to kResolution, ties rounding down
inline int quantize_slot(std::int64_t rem, int tpq) {
    const std::int64_t scaled = rem * kResolution;
    const std::int64_t q = scaled / tpq;
    const std::int64_t r = scaled % tpq;
    return static_cast<int>(q + (2 * r > tpq ? 1 : 0));
}

inline std::int64_t quantize_to_slots(std::int64_t tick, int tpq) {
    return (tick / tpq) * kResolution + quantize_slot(tick % tpq, tpq);
}

inline void write_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void write_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i) & 0xFF));
}

inline void write_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t bytes[4];
    int n = 0;
    do {
        bytes[n++] = static_cast<std::uint8_t>(v & 0x7F);
        v >>= 7;
    } while (v != 0);
    for (int i = n - 1; i > 0; --i) out.push_back(bytes[i] | 0x80);
    out.push_back(bytes[0]);
}

struct TrackEvent {
    std::int64_t tick;
    int order;  // offs sort before ons at the same tick
    std::uint8_t status;
    std::uint8_t d1;
    std::uint8_t d2;
    bool operator<(const TrackEvent& o) const {
        if (tick != o.tick) return tick < o.tick;
        if (order != o.order) return order < o.order;
        return d1 < o.d1;
    }
};

inline std::vector<std::uint8_t> render_track(std::vector<TrackEvent> events,
                                              const std::vector<std::uint8_t>& meta_prefix,
                                              std::int64_t end_tick) {
    std::sort(events.begin(), events.end());
    std::vector<std::uint8_t> body(meta_prefix);
    std::int64_t cursor = 0;
    for (const auto& e : events) {
        write_vlq(body, static_cast<std::uint32_t>(e.tick - cursor));
        cursor = e.tick;
        body.push_back(e.status);
        body.push_back(e.d1);
        if ((e.status & 0xF0) != 0xC0 && (e.status & 0xF0) != 0xD0) body.push_back(e.d2);
    }
    write_vlq(body, static_cast<std::uint32_t>(std::max<std::int64_t>(0, end_tick - cursor)));
    body.push_back(0xFF);
    body.push_back(0x2F);
    body.push_back(0x00);

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    write_u32(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

}  // namespace midi_detail

/// Parses a Standard MIDI File (format 0 or 1) into a canonical Score.
///
/// Note onsets and ends are quantized to the nearest of 12 slots per beat
/// (ties round down). Channel 10 notes become drum notes (program 128);
/// other notes take their channel's active program within the track. Among
/// overlapping same-pitch notes on one channel, a note-off closes the
/// earliest open note.
inline MidiParseResult parse_midi(std::span<const std::uint8_t> bytes) {
    using namespace midi_detail;
    ByteReader r(bytes);
    r.expect_magic("MThd");
    const std::uint32_t header_len = r.u32();
    if (header_len < 6) throw MalformedMidi(r.pos(), "header chunk shorter than 6 bytes");
    const std::uint16_t format = r.u16();
    const std::uint16_t declared_tracks = r.u16();
    const std::uint16_t division = r.u16();
    r.skip(header_len - 6);
    if (format == 2) throw UnsupportedFormat("SMF format 2 is not supported");
    if (format > 2) throw MalformedMidi(r.pos(), "unknown SMF format " + std::to_string(format));
    if (division & 0x8000) throw UnsupportedFormat("SMPTE time division is not supported");
    const int tpq = division;
    if (tpq == 0) throw MalformedMidi(r.pos(), "zero ticks per quarter note");

    MidiParseResult result;
    Score& score = result.score;
    MidiImportReport& report = result.report;
    bool tempo_seen = false;

    struct OpenNote {
        std::int64_t tick;
        int program;
    };

    int tracks_read = 0;
    while (!r.done() && tracks_read < declared_tracks) {
        r.expect_magic("MTrk");
        const std::uint32_t track_len = r.u32();
        if (track_len > r.remaining()) throw MalformedMidi(r.pos(), "track length exceeds data");
        const std::size_t track_end = r.pos() + track_len;

        std::int64_t tick = 0;
        std::uint8_t running_status = 0;
        int channel_program[16] = {};
        std::map<std::pair<int, int>, std::deque<OpenNote>> open;  // (channel, pitch)

        auto close_note = [&](int channel, int pitch, std::int64_t on_tick, std::int64_t off_tick,
                              int program) {
            const std::int64_t on_slots = quantize_to_slots(on_tick, tpq);
            const std::int64_t off_slots = quantize_to_slots(off_tick, tpq);
            const std::int64_t beat = on_slots / kResolution;
            if (beat > 0x7FFFFFF0) throw MalformedMidi(r.pos(), "event time out of range");
            Note n;
            n.beat = static_cast<int>(beat);
            n.position = static_cast<int>(on_slots % kResolution);
            n.pitch = pitch;
            if (channel == 9) {
                n.program = kDrumProgram;
                n.duration = 1;
            } else {
                n.program = program;
                std::int64_t dur = off_slots - on_slots;
                if (dur < 1) dur = 1;
                if (dur > kMaxDuration) {
                    dur = kMaxDuration;
                    ++report.notes_clipped_duration;
                }
                n.duration = static_cast<int>(dur);
            }
            score.notes.push_back(n);
            ++report.notes_kept;
        };

        while (r.pos() < track_end) {
            tick += r.vlq();
            if (tick > (std::int64_t{1} << 42)) throw MalformedMidi(r.pos(), "event time out of range");
            std::uint8_t status = r.peek();
            if (status & 0x80) {
                r.u8();
                if (status < 0xF0) running_status = status;
            } else {
                if (running_status == 0)
                    throw MalformedMidi(r.pos(), "data byte without running status");
                status = running_status;
            }

            if (status == 0xFF) {  // meta event
                const std::uint8_t type = r.u8();
                const std::uint32_t len = r.vlq();
                if (len > r.remaining()) throw MalformedMidi(r.pos(), "meta length exceeds data");
                if (type == 0x51 && len == 3) {
                    const std::uint32_t usec = static_cast<std::uint32_t>(r.u8()) << 16 |
                                               static_cast<std::uint32_t>(r.u8()) << 8 | r.u8();
                    if (!tempo_seen && usec > 0) {
                        score.metadata.tempo_qpm = 60000000.0 / usec;
                        tempo_seen = true;
                    }
                } else if (type == 0x58 && len >= 2) {
                    const std::uint8_t nn = r.u8();
                    const std::uint8_t dd = r.u8();
                    r.skip(len - 2);
                    if (nn >= 1 && dd <= 5) {
                        const std::int64_t beat = (tick + tpq / 2) / tpq;
                        if (beat <= 0x7FFFFFF0)
                            score.time_signatures.push_back(TimeSignature{
                                static_cast<int>(beat), nn, 1 << dd});
                    }
                } else if (type == 0x2F) {
                    r.skip(len);
                    break;
                } else {
                    r.skip(len);
                }
                continue;
            }
            if (status == 0xF0 || status == 0xF7) {  // sysex, skipped
                running_status = 0;
                const std::uint32_t len = r.vlq();
                r.skip(len);
                continue;
            }
            if (status < 0x80) throw MalformedMidi(r.pos(), "invalid status byte");

            const int kind = status & 0xF0;
            const int channel = status & 0x0F;
            const std::uint8_t d1 = r.u8();
            if (d1 & 0x80) throw MalformedMidi(r.pos(), "data byte with high bit set");
            std::uint8_t d2 = 0;
            if (kind != 0xC0 && kind != 0xD0) {
                d2 = r.u8();
                if (d2 & 0x80) throw MalformedMidi(r.pos(), "data byte with high bit set");
            }

            if (kind == 0xC0) {
                channel_program[channel] = d1;
            } else if (kind == 0x90 && d2 > 0) {
                open[{channel, d1}].push_back(OpenNote{tick, channel_program[channel]});
            } else if (kind == 0x80 || (kind == 0x90 && d2 == 0)) {
                auto it = open.find({channel, d1});
                if (it != open.end() && !it->second.empty()) {
                    const OpenNote on = it->second.front();
                    it->second.pop_front();
                    close_note(channel, d1, on.tick, tick, on.program);
                }
                // orphan note-off ignored
            }
        }
        // close anything still sounding at the end of the track
        for (auto& [key, queue] : open)
            for (const auto& on : queue) close_note(key.first, key.second, on.tick, tick, on.program);
        if (r.pos() > track_end) throw MalformedMidi(r.pos(), "event ran past track end");
        r.skip(track_end - r.pos());
        ++tracks_read;
    }

    result.score = canonicalize(std::move(result.score));
    return result;
}

inline MidiParseResult parse_midi(const std::vector<std::uint8_t>& bytes) {
    return parse_midi(std::span<const std::uint8_t>(bytes.data(), bytes.size()));
}

/// Renders a canonical Score as an SMF format 1 file: a conductor track with
/// tempo and time signatures, then one track per distinct program. Drums go
/// on channel 10. ticks_per_quarter must be divisible by 12.
inline std::vector<std::uint8_t> write_midi(const Score& score, int ticks_per_quarter = 480) {
    using namespace midi_detail;
    if (ticks_per_quarter <= 0 || ticks_per_quarter % kResolution != 0)
        throw InvalidResolution(ticks_per_quarter);
    const int tpq = ticks_per_quarter;
    const int ticks_per_slot = tpq / kResolution;

    const std::vector<int> programs = programs_of(score);

    // conductor track: tempo (when present) and time signatures
    std::vector<std::uint8_t> conductor_meta;
    std::int64_t conductor_end = 0;
    if (score.metadata.tempo_qpm) {
        std::int64_t usec = std::llround(60000000.0 / *score.metadata.tempo_qpm);
        usec = std::clamp<std::int64_t>(usec, 1, 0xFFFFFF);
        write_vlq(conductor_meta, 0);
        conductor_meta.insert(conductor_meta.end(),
                              {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(usec >> 16 & 0xFF),
                               static_cast<std::uint8_t>(usec >> 8 & 0xFF),
                               static_cast<std::uint8_t>(usec & 0xFF)});
    }
    std::int64_t ts_cursor = 0;
    for (const auto& ts : score.time_signatures) {
        if (ts.numerator > 255) throw OutOfRangeField("numerator", ts.numerator);
        std::uint8_t dd = 0;
        while ((1 << dd) < ts.denominator) ++dd;
        const std::int64_t tick = static_cast<std::int64_t>(ts.start_beat) * tpq;
        write_vlq(conductor_meta, static_cast<std::uint32_t>(tick - ts_cursor));
        ts_cursor = tick;
        const std::uint8_t clocks_per_click =
            static_cast<std::uint8_t>(std::max(1, 96 / ts.denominator));
        conductor_meta.insert(conductor_meta.end(),
                              {0xFF, 0x58, 0x04, static_cast<std::uint8_t>(ts.numerator), dd,
                               clocks_per_click, 0x08});
        conductor_end = tick;
    }

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    write_u32(out, 6);
    write_u16(out, 1);  // format 1
    write_u16(out, static_cast<std::uint16_t>(1 + programs.size()));
    write_u16(out, static_cast<std::uint16_t>(tpq));

    auto conductor = render_track({}, conductor_meta, conductor_end);
    out.insert(out.end(), conductor.begin(), conductor.end());

    static constexpr int kMelodicChannels[15] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 12, 13, 14, 15};
    int next_channel = 0;
    for (const int program : programs) {
        const int channel =
            program == kDrumProgram ? 9 : kMelodicChannels[next_channel++ % 15];

        std::vector<std::uint8_t> prefix;
        if (program != kDrumProgram) {
            write_vlq(prefix, 0);
            prefix.push_back(static_cast<std::uint8_t>(0xC0 | channel));
            prefix.push_back(static_cast<std::uint8_t>(program));
        }

        std::vector<TrackEvent> events;
        std::int64_t end_tick = 0;
        for (const auto& n : score.notes) {
            if (n.program != program) continue;
            const std::int64_t on =
                (static_cast<std::int64_t>(n.beat) * kResolution + n.position) * ticks_per_slot;
            const std::int64_t off = on + static_cast<std::int64_t>(n.duration) * ticks_per_slot;
            events.push_back(TrackEvent{on, 1, static_cast<std::uint8_t>(0x90 | channel),
                                        static_cast<std::uint8_t>(n.pitch), 0x40});
            events.push_back(TrackEvent{off, 0, static_cast<std::uint8_t>(0x80 | channel),
                                        static_cast<std::uint8_t>(n.pitch), 0x40});
            end_tick = std::max(end_tick, off);
        }
        auto track = render_track(std::move(events), prefix, end_tick);
        out.insert(out.end(), track.begin(), track.end());
    }
    return out;
}

}  // namespace scoregen

#endif  // SCOREGEN_MIDI_HPP
