// Tag- and text-conditioned generation: the conditioning prefix is forced
// through the incremental decoder, then note tokens are drawn with
// grammar-constrained nucleus sampling until end-of-song or the token
// budget. Decoding the result in recovery mode yields a playable Score.
#ifndef SCOREGEN_GENERATE_HPP
#define SCOREGEN_GENERATE_HPP

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "scoregen/embed.hpp"
#include "scoregen/errors.hpp"
#include "scoregen/nn.hpp"
#include "scoregen/rng.hpp"
#include "scoregen/sampling.hpp"
#include "scoregen/score.hpp"
#include "scoregen/tokenizer.hpp"
#include "scoregen/vocab.hpp"

namespace scoregen {

struct GenerationResult {
    TokenSequence tokens;  // prompt + sampled tokens (end-of-song included when reached)
    Score score;           // recovery-decoded, so always strictly well formed
    TagSet tags;           // tags read back from the emitted prefix
};

namespace detail {

template <class S>
GenerationResult run_generation(const Model<S>& model, const VocabSpec& v, TokenSequence prompt,
                                const std::vector<float>& cond, const SamplerConfig& sampler) {
    sampler.validate();
    if (model.config().vocab_size != v.vocab_size)
        throw VocabMismatch("model expects " + std::to_string(model.config().vocab_size) +
                            " tokens, vocabulary has " + std::to_string(v.vocab_size));
    const int budget = std::min(sampler.max_tokens, model.config().max_seq_len);
    if (static_cast<int>(prompt.size()) > budget) throw SequenceTooLong(prompt.size(), budget);

    Decoder<S> dec(model, cond);
    GenerationResult out;
    out.tokens = std::move(prompt);
    Mat<S> logits;
    for (int t : out.tokens) logits = dec.step(t);

    Rng rng(sampler.seed);
    GrammarState grammar(v);
    while (static_cast<int>(out.tokens.size()) < budget) {
        const int tok = sample_from_logits(logits.row(0), grammar.allowed_mask(),
                                           sampler.temperature, sampler.top_p, rng);
        out.tokens.push_back(tok);
        if (tok == v.eos) break;
        grammar.advance(tok);
        if (static_cast<int>(out.tokens.size()) >= budget) break;
        logits = dec.step(tok);
    }

    DecodeResult decoded = decode(out.tokens, v);
    out.score = std::move(decoded.score);
    out.tags = std::move(decoded.tags);
    return out;
}

}  // namespace detail

/// Generates a piece whose conditioning prefix encodes `tags`. The prefix is
/// forced verbatim; only the note region is sampled.
template <class S>
GenerationResult generate_tags(const Model<S>& model, const VocabSpec& v, const TagSet& tags,
                               const SamplerConfig& sampler) {
    return detail::run_generation(model, v, tag_prefix(tags, v), {}, sampler);
}

/// Generates from a free-text description: the prompt is embedded and fed as
/// the conditioning vector while the token prefix carries the all-None tag
/// skeleton.
template <class S>
GenerationResult generate_text(const Model<S>& model, const VocabSpec& v,
                               const std::string& prompt, TextEmbedder& embedder,
                               const SamplerConfig& sampler) {
    const TextEmbedding emb = embedder.embed(prompt);
    if (static_cast<int>(emb.values.size()) != model.config().d_cond)
        throw EmbeddingDimMismatch(static_cast<int>(emb.values.size()), model.config().d_cond);
    std::vector<float> cond(emb.values.begin(), emb.values.end());
    return detail::run_generation(model, v, tag_prefix(TagSet{}, v), cond, sampler);
}

}  // namespace scoregen

#endif  // SCOREGEN_GENERATE_HPP
