#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faegen/linalg.hpp"

namespace faegen {

inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kUnk = 3;
inline constexpr std::size_t kNumReserved = 4;

enum class Condition { normal, vsd, asd };

std::string_view condition_name(Condition c);
Condition parse_condition(std::string_view name);

// One image: its predicted view distribution y and its morphological feature h^v.
struct ViewObservation {
    Vector view_probs;
    Vector features;

    bool operator==(const ViewObservation&) const = default;
};

struct Sample {
    std::string id;
    Condition condition = Condition::normal;
    // Generator metadata; -1 when unknown. Not used by the model.
    int severity = -1;
    std::vector<ViewObservation> observations;
    std::map<std::string, std::vector<std::string>> reports;

    bool operator==(const Sample&) const = default;
};

using Dataset = std::vector<Sample>;

// Lowercase + whitespace split.
std::vector<std::string> tokenize(std::string_view text);
std::string join_tokens(std::span<const std::string> tokens);

class Vocabulary {
  public:
    // Reserved tokens only.
    Vocabulary();
    // tokens[0..3] must be the reserved tokens.
    Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> counts);

    // Tokens with count >= min_count, ordered by count descending then
    // lexicographically, after the reserved tokens.
    static Vocabulary build(const Dataset& dataset, std::size_t min_count = 1);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::size_t index) const;
    std::size_t count(std::size_t index) const { return counts_.at(index); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::vector<std::size_t>& counts() const { return counts_; }
    // kUnk for unknown tokens.
    std::size_t index_of(std::string_view token) const;

    // Appends <eos>.
    std::vector<std::size_t> encode(std::span<const std::string> tokens) const;
    // Drops <pad>, <bos>, <eos>; <unk> is rendered as its literal.
    std::vector<std::string> decode(std::span<const std::size_t> indices) const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_ && counts_ == other.counts_; }

  private:
    std::vector<std::string> tokens_;
    std::vector<std::size_t> counts_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

// Vocabulary plus the ordered topic inventory that fixes topic indices.
struct Lexicon {
    Vocabulary vocab;
    std::vector<std::string> topics;

    std::optional<std::size_t> topic_index(std::string_view name) const;
};

struct TopicTarget {
    std::size_t topic = 0;
    std::vector<std::size_t> tokens; // <eos>-terminated
};

// A sample resolved against a lexicon: what the model consumes.
struct EncodedSample {
    std::string id;
    std::vector<ViewObservation> observations;
    std::vector<TopicTarget> targets; // ordered by topic index
};

EncodedSample encode_sample(const Sample& sample, const Lexicon& lexicon);

// Throws InputError on an off-simplex view distribution (tolerance 1e-6),
// negative/non-finite entries, or an empty observation list.
void validate_sample(const Sample& sample);

// JSON Lines, one sample per line.
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);
std::string dataset_to_jsonl(const Dataset& dataset);
Dataset dataset_from_jsonl(std::string_view text);

void save_lexicon(const std::string& path, const Lexicon& lexicon);
Lexicon load_lexicon(const std::string& path);

// Writes to a temporary sibling and renames over path.
void write_file_atomic(const std::string& path, std::string_view content);
std::string read_file(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic corpus.

struct SynthConfig {
    std::size_t num_train = 200;
    std::size_t num_test = 50;
    std::size_t num_topics = 4;
    std::size_t num_views = 5;
    std::size_t feature_dim = 32;
    double feature_noise = 0.3;
    double view_confidence = 4.0;
    double missing_prob = 0.15;
    double repeat_prob = 0.15;
    std::uint64_t seed = 7;

    void validate() const;
};

struct SynthCorpus {
    Dataset train;
    Dataset test;
    std::vector<std::string> topics;
};

inline constexpr int kNumSeverities = 6;

// Topic names: echo, motion, structure, flow, then section5, section6, ...
std::vector<std::string> synth_topic_names(std::size_t num_topics);

SynthCorpus synth_generate(const SynthConfig& cfg);

// Template text for (topic, condition, severity). Deterministic.
std::vector<std::string> render_report(std::string_view topic, Condition condition, int severity);

// Exact template classifier: the index into `topics` of the topic whose
// template family matches `tokens` exactly, if any.
std::optional<std::size_t> classify_template(std::span<const std::string> tokens,
                                             std::span<const std::string> topics);

} // namespace faegen
