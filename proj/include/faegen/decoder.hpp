#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "faegen/corpus.hpp"
#include "faegen/model.hpp"
#include "faegen/rng.hpp"

namespace faegen {

enum class DecodeMode { greedy, beam, sample };

std::string_view to_string(DecodeMode m);
DecodeMode parse_decode_mode(std::string_view s);

struct DecodeConfig {
    DecodeMode mode = DecodeMode::greedy;
    std::size_t beam_width = 3;
    std::size_t max_len = 30;
    double temperature = 1.0;
    std::uint64_t seed = 1;
    bool length_normalize = true;

    void validate() const;
};

struct Hypothesis {
    std::vector<std::size_t> tokens; // <eos>-terminated unless max_len was hit
    double log_prob = 0.0;
    // log_prob / tokens.size() when length-normalised, else log_prob.
    double score = 0.0;
};

// Argmax over emittable tokens; ties go to the lowest index. <pad> and <bos>
// are never emitted.
Hypothesis greedy_generate(const FaeGenParams& params, const FaeGenConfig& config,
                           std::span<const ViewObservation> observations, std::size_t topic, std::size_t max_len);

// Finished hypotheses occupy beam slots, so width 1 is exactly greedy.
// The result maximises score; ties go to the lexicographically smaller token
// sequence.
Hypothesis beam_generate(const FaeGenParams& params, const FaeGenConfig& config,
                         std::span<const ViewObservation> observations, std::size_t topic, std::size_t width,
                         std::size_t max_len, bool length_normalize = true);

Hypothesis sample_generate(const FaeGenParams& params, const FaeGenConfig& config,
                           std::span<const ViewObservation> observations, std::size_t topic, std::size_t max_len,
                           double temperature, SeededRng& rng);

// Draw from p^(1/temperature), renormalised (computed in log space).
std::size_t sample_token(const Vector& probs, SeededRng& rng, double temperature);

Hypothesis generate(const FaeGenParams& params, const FaeGenConfig& config,
                    std::span<const ViewObservation> observations, std::size_t topic, const DecodeConfig& decode,
                    SeededRng& rng);

struct TopicDescription {
    std::string text;
    double score = 0.0;
};

// One description per topic of the lexicon, keyed by topic name.
std::map<std::string, TopicDescription> generate_report(const FaeGenParams& params, const FaeGenConfig& config,
                                                        const Lexicon& lexicon,
                                                        std::span<const ViewObservation> observations,
                                                        const DecodeConfig& decode);

// Generation output: one JSON record per line {id, topic, hypothesis, score}.
struct HypothesisRecord {
    std::string id;
    std::string topic;
    std::string hypothesis;
    double score = 0.0;
};

std::string hypotheses_to_jsonl(std::span<const HypothesisRecord> records);
std::vector<HypothesisRecord> hypotheses_from_jsonl(std::string_view text);

} // namespace faegen
