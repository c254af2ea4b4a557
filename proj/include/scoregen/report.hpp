#ifndef SCOREGEN_REPORT_HPP
#define SCOREGEN_REPORT_HPP

#include <cstdint>

namespace scoregen {

/// Counters produced while ingesting a score from MIDI or JSON.
struct MidiImportReport {
    std::int64_t notes_kept = 0;
    std::int64_t notes_dropped_negative_pitch = 0;
    std::int64_t notes_clipped_duration = 0;
    std::int64_t tracks_dropped_non_gm = 0;
    bool operator==(const MidiImportReport&) const = default;
};

}  // namespace scoregen

#endif  // SCOREGEN_REPORT_HPP
