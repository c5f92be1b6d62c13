#pragma once

// Corpus-level caption metrics over token strings: BLEU-1..4, METEOR (exact
// match only, "meteor_lite"), ROUGE-L and CIDEr.

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "faegen/corpus.hpp"
#include "faegen/decoder.hpp"

namespace faegen {

using Tokens = std::vector<std::string>;

struct EvalPair {
    std::string id;
    std::string topic;
    Tokens hypothesis;
    std::vector<Tokens> references; // at least one
};

// n-gram -> count for one n.
using NgramCounts = std::map<Tokens, std::size_t>;
NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n);

// B-1..B-max_n. Modified precision with per-reference clipping, pooled over
// the corpus; brevity penalty against the closest reference length (shorter
// wins ties). A zero precision at any order <= n makes B-n zero.
std::vector<double> bleu(std::span<const EvalPair> pairs, std::size_t max_n = 4);

// Mean over pairs of the best-reference LCS F-measure.
double rouge_l(std::span<const EvalPair> pairs, double beta = 1.2);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct CiderOptions {
    std::size_t max_n = 4;
    double scale = 10.0;
    // CIDEr-D: clipped hypothesis counts and a Gaussian length penalty.
    bool d_variant = false;
    double sigma = 6.0;
};

// idf = ln(N / df) with N the number of pairs and df the number of pairs
// whose references contain the n-gram (floored at 1).
double cider(std::span<const EvalPair> pairs, const CiderOptions& options = {});

struct MeteorOptions {
    double alpha = 0.9;
    double gamma = 0.5;
    double beta = 3.0;
};

struct MeteorAlignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
};

// Maximum exact unigram matching; among those, a left-to-right greedy that
// extends the current chunk when it can.
MeteorAlignment meteor_align(std::span<const std::string> hypothesis, std::span<const std::string> reference);
double meteor_sentence(std::span<const std::string> hypothesis, std::span<const std::string> reference,
                       const MeteorOptions& options = {});
double meteor_lite(std::span<const EvalPair> pairs, const MeteorOptions& options = {});

struct MetricScores {
    std::array<double, 4> bleu{};
    double meteor = 0.0;
    double rouge_l = 0.0;
    double cider = 0.0;
    std::size_t num_pairs = 0;
};

struct MetricOptions {
    double rouge_beta = 1.2;
    CiderOptions cider;
    MeteorOptions meteor;
};

MetricScores score_pairs(std::span<const EvalPair> pairs, const MetricOptions& options = {});

struct ScoreReport {
    MetricScores overall;
    std::map<std::string, MetricScores> per_topic;
    MetricOptions options;
};

// Resolves each hypothesis record against the reference dataset. Topics not in
// topic_filter are dropped (empty filter keeps everything). Throws InputError
// listing hypotheses whose (id, topic) has no reference.
std::vector<EvalPair> build_eval_pairs(std::span<const HypothesisRecord> hypotheses, const Dataset& references,
                                       std::span<const std::string> topic_filter = {});

ScoreReport evaluate(std::span<const HypothesisRecord> hypotheses, const Dataset& references,
                     std::span<const std::string> topic_filter = {}, bool per_topic = true,
                     const MetricOptions& options = {});

std::string score_report_to_json(const ScoreReport& report);
// "B-1 B-2 B-3 B-4 C M R" header plus one row.
std::string format_table_row(const std::string& label, const MetricScores& scores);
std::string format_table_header();

} // namespace faegen
