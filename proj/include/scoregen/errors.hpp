#ifndef SCOREGEN_ERRORS_HPP
#define SCOREGEN_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace scoregen {

/// Base class for all domain errors. `code()` is a stable machine-readable
/// identifier; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}
    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct OutOfRangeField : Error {
    OutOfRangeField(std::string_view field_name, long long v)
        : Error("out_of_range_field",
                std::string(field_name) + " out of range: " + std::to_string(v)),
          field(field_name), value(v) {}
    std::string field;
    long long value;
};

struct MalformedMidi : Error {
    MalformedMidi(std::size_t at, const std::string& why)
        : Error("malformed_midi",
                "malformed MIDI at byte " + std::to_string(at) + ": " + why),
          offset(at), reason(why) {}
    std::size_t offset;
    std::string reason;
};

struct UnsupportedFormat : Error {
    explicit UnsupportedFormat(const std::string& why)
        : Error("unsupported_format", why) {}
};

struct InvalidResolution : Error {
    explicit InvalidResolution(int tpq)
        : Error("invalid_resolution",
                "ticks_per_quarter must be divisible by 12, got " + std::to_string(tpq)) {}
};

struct DuplicateLabel : Error {
    explicit DuplicateLabel(const std::string& l)
        : Error("duplicate_label", "duplicate label: " + l), label(l) {}
    std::string label;
};

struct BeatOverflow : Error {
    explicit BeatOverflow(int b)
        : Error("beat_overflow", "beat " + std::to_string(b) + " exceeds the vocabulary limit"),
          beat(b) {}
    int beat;
};

struct UnknownGenre : Error {
    explicit UnknownGenre(const std::string& n)
        : Error("unknown_genre", "genre not in vocabulary: " + n), name(n) {}
    std::string name;
};

struct UnknownComposer : Error {
    explicit UnknownComposer(const std::string& n)
        : Error("unknown_composer", "composer not in vocabulary: " + n), name(n) {}
    std::string name;
};

struct UnknownTag : Error {
    explicit UnknownTag(const std::string& n)
        : Error("unknown_tag", "tag not in vocabulary: " + n), name(n) {}
    std::string name;
};

struct GrammarViolation : Error {
    GrammarViolation(std::size_t at, std::string want, std::string got)
        : Error("grammar_violation", "token " + std::to_string(at) + ": expected " + want +
                                         ", found " + got),
          index(at), expected(std::move(want)), found(std::move(got)) {}
    std::size_t index;
    std::string expected;
    std::string found;
};

struct DuplicateId : Error {
    explicit DuplicateId(const std::string& i)
        : Error("duplicate_id", "duplicate corpus id: " + i), id(i) {}
    std::string id;
};

struct MetricUndefined : Error {
    MetricUndefined(const std::string& m, const std::string& why)
        : Error("metric_undefined", m + " undefined: " + why), metric(m), reason(why) {}
    std::string metric;
    std::string reason;
};

struct InsufficientData : Error {
    explicit InsufficientData(const std::string& m)
        : Error("insufficient_data", "fewer than 2 defined values for metric: " + m), metric(m) {}
    std::string metric;
};

struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& why) : Error("invalid_config", why) {}
};

struct BadCheckpoint : Error {
    explicit BadCheckpoint(const std::string& why)
        : Error("bad_checkpoint", "checkpoint unreadable: " + why) {}
};

struct SequenceTooLong : Error {
    SequenceTooLong(std::size_t n, int limit)
        : Error("sequence_too_long", "sequence of " + std::to_string(n) +
                                         " tokens exceeds max_seq_len " + std::to_string(limit)) {}
};

struct ConditioningDimMismatch : Error {
    ConditioningDimMismatch(std::size_t got, int want)
        : Error("conditioning_dim_mismatch", "conditioning vector has dim " + std::to_string(got) +
                                                 ", model expects " + std::to_string(want)) {}
};

struct EmptyBatch : Error {
    EmptyBatch() : Error("empty_batch", "batch contains no sequences") {}
};

struct VocabMismatch : Error {
    explicit VocabMismatch(const std::string& why)
        : Error("vocab_mismatch", why) {}
};

struct EmptyValidationSet : Error {
    EmptyValidationSet() : Error("empty_validation_set", "validation set is empty") {}
};

struct EmbedderUnavailable : Error {
    explicit EmbedderUnavailable(const std::string& why)
        : Error("embedder_unavailable", why) {}
};

struct EmbeddingDimMismatch : Error {
    EmbeddingDimMismatch(std::size_t got, int want)
        : Error("embedding_dim_mismatch", "embedding has dim " + std::to_string(got) +
                                              ", expected " + std::to_string(want)) {}
};

struct BackendUnavailable : Error {
    explicit BackendUnavailable(const std::string& why)
        : Error("backend_unavailable", why) {}
};

struct IoError : Error {
    explicit IoError(const std::string& why) : Error("io_error", why) {}
};

}  // namespace scoregen

#endif  // SCOREGEN_ERRORS_HPP
