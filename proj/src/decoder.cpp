#include "faegen/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "faegen/errors.hpp"
#include "json.hpp"

namespace faegen {

namespace {

bool emittable(std::size_t token) { return token != kPad && token != kBos; }

// Tie-break order over tokens: content tokens by index, then the reserved
// tokens. A flat distribution therefore yields the first content token.
std::size_t tie_rank(std::size_t token, std::size_t vocab_size) {
    return token < kNumReserved ? vocab_size + token : token;
}

bool rank_less(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, std::size_t vocab_size) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [&](std::size_t x, std::size_t y) {
        return tie_rank(x, vocab_size) < tie_rank(y, vocab_size);
    });
}

double finish_score(double log_prob, std::size_t length, bool normalize) {
    return normalize ? log_prob / static_cast<double>(std::max<std::size_t>(length, 1)) : log_prob;
}

void require_topic(const FaeGenConfig& config, std::size_t topic) {
    if (topic >= config.num_topics) {
        throw InputError("topic " + std::to_string(topic) + " out of range (K = " + std::to_string(config.num_topics) +
                         ")");
    }
}

} // namespace

std::string_view to_string(DecodeMode m) {
    switch (m) {
    case DecodeMode::greedy:
        return "greedy";
    case DecodeMode::beam:
        return "beam";
    case DecodeMode::sample:
        return "sample";
    }
    return "greedy";
}

DecodeMode parse_decode_mode(std::string_view s) {
    if (s == "greedy") {
        return DecodeMode::greedy;
    }
    if (s == "beam") {
        return DecodeMode::beam;
    }
    if (s == "sample") {
        return DecodeMode::sample;
    }
    throw InputError("unknown decode mode '" + std::string(s) + "'");
}

void DecodeConfig::validate() const {
    if (beam_width < 1 || max_len < 1 || !(temperature > 0.0)) {
        throw InputError("DecodeConfig: beam width and max length must be >= 1, temperature > 0");
    }
}

Hypothesis greedy_generate(const FaeGenParams& params, const FaeGenConfig& config,
                           std::span<const ViewObservation> observations, std::size_t topic, std::size_t max_len) {
    require_topic(config, topic);
    const EncodedViews encoded = encode_views(params, config, observations);
    DecoderState state = DecoderState::initial(config);
    Hypothesis hyp;
    std::size_t prev = kBos;
    for (std::size_t t = 0; t < max_len; ++t) {
        StepOutput step = decode_step(params, config, topic, prev, state, encoded);
        const Vector lp = log_softmax(step.logits);
        std::size_t best = kEos;
        for (std::size_t i = 0; i < lp.dim(); ++i) {
            if (!emittable(i)) {
                continue;
            }
            if (lp[i] > lp[best] ||
                (lp[i] == lp[best] && tie_rank(i, config.vocab_size) < tie_rank(best, config.vocab_size))) {
                best = i;
            }
        }
        hyp.tokens.push_back(best);
        hyp.log_prob += lp[best];
        if (best == kEos) {
            break;
        }
        prev = best;
        state = std::move(step.state);
    }
    hyp.score = finish_score(hyp.log_prob, hyp.tokens.size(), true);
    return hyp;
}

Hypothesis beam_generate(const FaeGenParams& params, const FaeGenConfig& config,
                         std::span<const ViewObservation> observations, std::size_t topic, std::size_t width,
                         std::size_t max_len, bool length_normalize) {
    require_topic(config, topic);
    if (width < 1) {
        throw InputError("beam_generate: width must be >= 1");
    }
    struct Beam {
        std::vector<std::size_t> tokens;
        double log_prob = 0.0;
        DecoderState state;
    };
    struct Candidate {
        std::size_t parent;
        std::size_t token;
        double total;
        double step_lp;
    };

    const EncodedViews encoded = encode_views(params, config, observations);
    std::vector<Beam> alive{{{}, 0.0, DecoderState::initial(config)}};
    std::vector<Hypothesis> finished;

    for (std::size_t t = 0; t < max_len && !alive.empty(); ++t) {
        // Alive beams in lexicographic (tie-rank) order, so that candidate
        // ordering on equal totals follows the full token sequence.
        std::sort(alive.begin(), alive.end(),
                  [&](const Beam& a, const Beam& b) { return rank_less(a.tokens, b.tokens, config.vocab_size); });

        std::vector<DecoderState> next_states;
        std::vector<Candidate> candidates;
        for (std::size_t b = 0; b < alive.size(); ++b) {
            const std::size_t prev = alive[b].tokens.empty() ? kBos : alive[b].tokens.back();
            StepOutput step = decode_step(params, config, topic, prev, alive[b].state, encoded);
            const Vector lp = log_softmax(step.logits);
            for (std::size_t i = 0; i < lp.dim(); ++i) {
                if (emittable(i)) {
                    candidates.push_back({b, i, alive[b].log_prob + lp[i], lp[i]});
                }
            }
            next_states.push_back(std::move(step.state));
        }
        const std::size_t keep = std::min(width, candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                          [&](const Candidate& a, const Candidate& b) {
                              return std::make_tuple(-a.total, a.parent, -a.step_lp, tie_rank(a.token, config.vocab_size)) <
                                     std::make_tuple(-b.total, b.parent, -b.step_lp, tie_rank(b.token, config.vocab_size));
                          });

        std::vector<Beam> next;
        for (std::size_t c = 0; c < keep; ++c) {
            const Candidate& cand = candidates[c];
            std::vector<std::size_t> tokens = alive[cand.parent].tokens;
            tokens.push_back(cand.token);
            if (cand.token == kEos || t + 1 == max_len) {
                const double score = finish_score(cand.total, tokens.size(), length_normalize);
                finished.push_back({std::move(tokens), cand.total, score});
            } else {
                next.push_back({std::move(tokens), cand.total, next_states[cand.parent]});
            }
        }
        alive = std::move(next);
    }

    return *std::min_element(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return rank_less(a.tokens, b.tokens, config.vocab_size);
    });
}

std::size_t sample_token(const Vector& probs, SeededRng& rng, double temperature) {
    if (probs.empty() || !(temperature > 0.0)) {
        throw InputError("sample_token: empty distribution or non-positive temperature");
    }
    Vector logw(probs.dim());
    double max_logw = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < probs.dim(); ++i) {
        logw[i] = probs[i] > 0.0 ? std::log(probs[i]) / temperature : -std::numeric_limits<double>::infinity();
        max_logw = std::max(max_logw, logw[i]);
    }
    Vector weights(probs.dim());
    double total = 0.0;
    for (std::size_t i = 0; i < probs.dim(); ++i) {
        weights[i] = std::exp(logw[i] - max_logw);
        total += weights[i];
    }
    const double u = rng.uniform01() * total;
    double cumulative = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights.dim(); ++i) {
        if (weights[i] <= 0.0) {
            continue;
        }
        cumulative += weights[i];
        last = i;
        if (u < cumulative) {
            return i;
        }
    }
    return last;
}

Hypothesis sample_generate(const FaeGenParams& params, const FaeGenConfig& config,
                           std::span<const ViewObservation> observations, std::size_t topic, std::size_t max_len,
                           double temperature, SeededRng& rng) {
    require_topic(config, topic);
    const EncodedViews encoded = encode_views(params, config, observations);
    DecoderState state = DecoderState::initial(config);
    Hypothesis hyp;
    std::size_t prev = kBos;
    for (std::size_t t = 0; t < max_len; ++t) {
        StepOutput step = decode_step(params, config, topic, prev, state, encoded);
        Vector probs = step.probs;
        probs[kPad] = 0.0;
        probs[kBos] = 0.0;
        const std::size_t tok = sample_token(probs, rng, temperature);
        hyp.tokens.push_back(tok);
        hyp.log_prob += log_softmax(step.logits)[tok];
        if (tok == kEos) {
            break;
        }
        prev = tok;
        state = std::move(step.state);
    }
    hyp.score = finish_score(hyp.log_prob, hyp.tokens.size(), true);
    return hyp;
}

Hypothesis generate(const FaeGenParams& params, const FaeGenConfig& config,
                    std::span<const ViewObservation> observations, std::size_t topic, const DecodeConfig& decode,
                    SeededRng& rng) {
    decode.validate();
    switch (decode.mode) {
    case DecodeMode::greedy:
        return greedy_generate(params, config, observations, topic, decode.max_len);
    case DecodeMode::beam:
        return beam_generate(params, config, observations, topic, decode.beam_width, decode.max_len,
                             decode.length_normalize);
    case DecodeMode::sample:
        return sample_generate(params, config, observations, topic, decode.max_len, decode.temperature, rng);
    }
    return {};
}

std::map<std::string, TopicDescription> generate_report(const FaeGenParams& params, const FaeGenConfig& config,
                                                        const Lexicon& lexicon,
                                                        std::span<const ViewObservation> observations,
                                                        const DecodeConfig& decode) {
    SeededRng rng(decode.seed);
    std::map<std::string, TopicDescription> out;
    for (std::size_t k = 0; k < lexicon.topics.size(); ++k) {
        const Hypothesis hyp = generate(params, config, observations, k, decode, rng);
        const std::vector<std::string> words = lexicon.vocab.decode(hyp.tokens);
        out[lexicon.topics[k]] = {join_tokens(words), hyp.score};
    }
    return out;
}

std::string hypotheses_to_jsonl(std::span<const HypothesisRecord> records) {
    std::string out;
    for (const HypothesisRecord& r : records) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["topic"] = r.topic;
        j["hypothesis"] = r.hypothesis;
        j["score"] = r.score;
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<HypothesisRecord> hypotheses_from_jsonl(std::string_view text) {
    std::vector<HypothesisRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back({j.at("id").get<std::string>(), j.at("topic").get<std::string>(),
                           j.at("hypothesis").get<std::string>(), j.value("score", 0.0)});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed hypothesis record: ") + e.what(), line_no);
        }
    }
    return out;
}

} // namespace faegen
