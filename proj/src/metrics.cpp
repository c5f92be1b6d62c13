#include "faegen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "faegen/errors.hpp"
#include "json.hpp"

namespace faegen {

namespace {

// Mean of per-pair scores, summed in sorted order so that the result does not
// depend on the order of the pair list.
double order_free_mean(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return compensated_sum(values) / static_cast<double>(values.size());
}

} // namespace

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
    NgramCounts counts;
    if (n == 0 || tokens.size() < n) {
        return counts;
    }
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                        tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

// ---------------------------------------------------------------------------

std::vector<double> bleu(std::span<const EvalPair> pairs, std::size_t max_n) {
    if (pairs.empty()) {
        throw InputError("bleu: empty pair list");
    }
    std::vector<double> matched(max_n, 0.0), total(max_n, 0.0);
    double hyp_len = 0.0, ref_len = 0.0;
    for (const EvalPair& p : pairs) {
        const std::size_t c = p.hypothesis.size();
        hyp_len += static_cast<double>(c);
        std::size_t closest = p.references.front().size();
        for (const Tokens& r : p.references) {
            const auto diff = [c](std::size_t len) { return len > c ? len - c : c - len; };
            if (diff(r.size()) < diff(closest) || (diff(r.size()) == diff(closest) && r.size() < closest)) {
                closest = r.size();
            }
        }
        ref_len += static_cast<double>(closest);

        for (std::size_t n = 1; n <= max_n; ++n) {
            const NgramCounts hyp = count_ngrams(p.hypothesis, n);
            NgramCounts max_ref;
            for (const Tokens& r : p.references) {
                for (const auto& [gram, count] : count_ngrams(r, n)) {
                    std::size_t& m = max_ref[gram];
                    m = std::max(m, count);
                }
            }
            for (const auto& [gram, count] : hyp) {
                const auto it = max_ref.find(gram);
                matched[n - 1] += static_cast<double>(std::min(count, it == max_ref.end() ? 0 : it->second));
                total[n - 1] += static_cast<double>(count);
            }
        }
    }

    const double bp = hyp_len == 0.0 ? 0.0 : (hyp_len < ref_len ? std::exp(1.0 - ref_len / hyp_len) : 1.0);
    std::vector<double> scores(max_n, 0.0);
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 1; n <= max_n; ++n) {
        if (matched[n - 1] == 0.0 || total[n - 1] == 0.0) {
            zero = true;
        } else {
            log_sum += std::log(matched[n - 1] / total[n - 1]);
        }
        scores[n - 1] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n));
    }
    return scores;
}

// ---------------------------------------------------------------------------

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(std::span<const EvalPair> pairs, double beta) {
    if (pairs.empty()) {
        throw InputError("rouge_l: empty pair list");
    }
    std::vector<double> per_pair;
    const double b2 = beta * beta;
    for (const EvalPair& p : pairs) {
        double best = 0.0;
        for (const Tokens& r : p.references) {
            const auto lcs = static_cast<double>(lcs_length(p.hypothesis, r));
            if (lcs == 0.0) {
                continue;
            }
            const double recall = lcs / static_cast<double>(r.size());
            const double precision = lcs / static_cast<double>(p.hypothesis.size());
            best = std::max(best, (1.0 + b2) * recall * precision / (recall + b2 * precision));
        }
        per_pair.push_back(best);
    }
    return order_free_mean(std::move(per_pair));
}

// ---------------------------------------------------------------------------

namespace {

using TfIdf = std::map<Tokens, double>;

TfIdf tfidf_vector(const NgramCounts& counts, const std::map<Tokens, double>& df, double log_n) {
    TfIdf v;
    for (const auto& [gram, count] : counts) {
        const auto it = df.find(gram);
        const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
        v[gram] = static_cast<double>(count) * (log_n - std::log(d));
    }
    return v;
}

double norm(const TfIdf& v) {
    double s = 0.0;
    for (const auto& [gram, x] : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

} // namespace

double cider(std::span<const EvalPair> pairs, const CiderOptions& options) {
    if (pairs.empty()) {
        throw InputError("cider: empty pair list");
    }
    const std::size_t max_n = options.max_n;
    const double log_n = std::log(static_cast<double>(pairs.size()));

    // Document frequency over reference sets, one document per pair.
    std::vector<std::map<Tokens, double>> df(max_n + 1);
    std::vector<std::vector<std::vector<NgramCounts>>> ref_counts(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ref_counts[i].resize(max_n + 1);
        for (std::size_t n = 1; n <= max_n; ++n) {
            std::set<Tokens> seen;
            for (const Tokens& r : pairs[i].references) {
                ref_counts[i][n].push_back(count_ngrams(r, n));
                for (const auto& [gram, count] : ref_counts[i][n].back()) {
                    seen.insert(gram);
                }
            }
            for (const Tokens& gram : seen) {
                df[n][gram] += 1.0;
            }
        }
    }

    std::vector<double> per_pair;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const EvalPair& p = pairs[i];
        double pair_score = 0.0;
        for (std::size_t n = 1; n <= max_n; ++n) {
            const NgramCounts hyp_counts = count_ngrams(p.hypothesis, n);
            const TfIdf hyp_vec = tfidf_vector(hyp_counts, df[n], log_n);
            const double hyp_norm = norm(hyp_vec);
            double sim_sum = 0.0;
            for (std::size_t r = 0; r < p.references.size(); ++r) {
                const TfIdf ref_vec = tfidf_vector(ref_counts[i][n][r], df[n], log_n);
                const double ref_norm = norm(ref_vec);
                double dot_product = 0.0;
                for (const auto& [gram, hv] : hyp_vec) {
                    const auto it = ref_vec.find(gram);
                    if (it == ref_vec.end()) {
                        continue;
                    }
                    // CIDEr-D clips the hypothesis weight at the reference weight.
                    dot_product += (options.d_variant ? std::min(hv, it->second) : hv) * it->second;
                }
                double sim = hyp_norm > 0.0 && ref_norm > 0.0 ? dot_product / (hyp_norm * ref_norm) : 0.0;
                if (options.d_variant) {
                    const double delta =
                        static_cast<double>(p.hypothesis.size()) - static_cast<double>(p.references[r].size());
                    sim *= std::exp(-(delta * delta) / (2.0 * options.sigma * options.sigma));
                }
                sim_sum += sim;
            }
            pair_score += sim_sum / static_cast<double>(p.references.size());
        }
        per_pair.push_back(options.scale * pair_score / static_cast<double>(max_n));
    }
    return order_free_mean(std::move(per_pair));
}

// ---------------------------------------------------------------------------

MeteorAlignment meteor_align(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
    std::vector<bool> used(reference.size(), false);
    MeteorAlignment out;
    std::size_t prev_ref = 0;
    bool prev_matched = false;
    for (const std::string& word : hypothesis) {
        std::size_t pick = reference.size();
        if (prev_matched && prev_ref + 1 < reference.size() && !used[prev_ref + 1] && reference[prev_ref + 1] == word) {
            pick = prev_ref + 1;
        } else {
            for (std::size_t j = 0; j < reference.size(); ++j) {
                if (!used[j] && reference[j] == word) {
                    pick = j;
                    break;
                }
            }
        }
        if (pick == reference.size()) {
            prev_matched = false;
            continue;
        }
        used[pick] = true;
        ++out.matches;
        if (!(prev_matched && pick == prev_ref + 1)) {
            ++out.chunks;
        }
        prev_ref = pick;
        prev_matched = true;
    }
    return out;
}

double meteor_sentence(std::span<const std::string> hypothesis, std::span<const std::string> reference,
                       const MeteorOptions& options) {
    const MeteorAlignment a = meteor_align(hypothesis, reference);
    if (a.matches == 0) {
        return 0.0;
    }
    const auto m = static_cast<double>(a.matches);
    const double precision = m / static_cast<double>(hypothesis.size());
    const double recall = m / static_cast<double>(reference.size());
    const double fmean = precision * recall / (options.alpha * precision + (1.0 - options.alpha) * recall);
    const double penalty = options.gamma * std::pow(static_cast<double>(a.chunks) / m, options.beta);
    return fmean * (1.0 - penalty);
}

double meteor_lite(std::span<const EvalPair> pairs, const MeteorOptions& options) {
    if (pairs.empty()) {
        throw InputError("meteor_lite: empty pair list");
    }
    std::vector<double> per_pair;
    for (const EvalPair& p : pairs) {
        double best = 0.0;
        for (const Tokens& r : p.references) {
            best = std::max(best, meteor_sentence(p.hypothesis, r, options));
        }
        per_pair.push_back(best);
    }
    return order_free_mean(std::move(per_pair));
}

// ---------------------------------------------------------------------------

MetricScores score_pairs(std::span<const EvalPair> pairs, const MetricOptions& options) {
    MetricScores s;
    const std::vector<double> b = bleu(pairs, 4);
    std::copy(b.begin(), b.end(), s.bleu.begin());
    s.meteor = meteor_lite(pairs, options.meteor);
    s.rouge_l = rouge_l(pairs, options.rouge_beta);
    s.cider = cider(pairs, options.cider);
    s.num_pairs = pairs.size();
    return s;
}

std::vector<EvalPair> build_eval_pairs(std::span<const HypothesisRecord> hypotheses, const Dataset& references,
                                       std::span<const std::string> topic_filter) {
    std::map<std::string, const Sample*> by_id;
    for (const Sample& s : references) {
        by_id.emplace(s.id, &s);
    }
    std::vector<EvalPair> pairs;
    std::vector<std::string> missing;
    for (const HypothesisRecord& h : hypotheses) {
        if (!topic_filter.empty() && std::find(topic_filter.begin(), topic_filter.end(), h.topic) == topic_filter.end()) {
            continue;
        }
        const auto it = by_id.find(h.id);
        if (it == by_id.end() || !it->second->reports.contains(h.topic)) {
            missing.push_back(h.id + "/" + h.topic);
            continue;
        }
        pairs.push_back({h.id, h.topic, tokenize(h.hypothesis), {it->second->reports.at(h.topic)}});
    }
    if (!missing.empty()) {
        std::string list;
        for (const std::string& m : missing) {
            list += (list.empty() ? "" : ", ") + m;
        }
        throw InputError("no reference for hypotheses: " + list);
    }
    return pairs;
}

ScoreReport evaluate(std::span<const HypothesisRecord> hypotheses, const Dataset& references,
                     std::span<const std::string> topic_filter, bool per_topic, const MetricOptions& options) {
    const std::vector<EvalPair> pairs = build_eval_pairs(hypotheses, references, topic_filter);
    if (pairs.empty()) {
        throw InputError("evaluate: no hypothesis/reference pairs to score");
    }
    ScoreReport report;
    report.options = options;
    report.overall = score_pairs(pairs, options);
    if (per_topic) {
        std::map<std::string, std::vector<EvalPair>> grouped;
        for (const EvalPair& p : pairs) {
            grouped[p.topic].push_back(p);
        }
        for (const auto& [topic, group] : grouped) {
            report.per_topic[topic] = score_pairs(group, options);
        }
    }
    return report;
}

namespace {

nlohmann::ordered_json scores_json(const MetricScores& s) {
    nlohmann::ordered_json j;
    j["B-1"] = s.bleu[0];
    j["B-2"] = s.bleu[1];
    j["B-3"] = s.bleu[2];
    j["B-4"] = s.bleu[3];
    j["C"] = s.cider;
    j["M"] = s.meteor;
    j["R"] = s.rouge_l;
    j["pairs"] = s.num_pairs;
    return j;
}

} // namespace

std::string score_report_to_json(const ScoreReport& report) {
    nlohmann::ordered_json j;
    j["overall"] = scores_json(report.overall);
    nlohmann::ordered_json topics = nlohmann::ordered_json::object();
    for (const auto& [topic, s] : report.per_topic) {
        topics[topic] = scores_json(s);
    }
    j["per_topic"] = std::move(topics);

    nlohmann::ordered_json conv;
    conv["tokenization"] = "lowercase, whitespace split";
    conv["bleu"] = "corpus-level, max n 4, no smoothing, closest-reference brevity penalty";
    conv["meteor"] = {{"variant", "meteor_lite (exact unigram match only)"},
                      {"alpha", report.options.meteor.alpha},
                      {"gamma", report.options.meteor.gamma},
                      {"beta", report.options.meteor.beta}};
    conv["rouge_l"] = {{"beta", report.options.rouge_beta}};
    conv["cider"] = {{"variant", report.options.cider.d_variant ? "CIDEr-D" : "CIDEr"},
                     {"max_n", report.options.cider.max_n},
                     {"scale", report.options.cider.scale},
                     {"idf_corpus", "references of the evaluated pairs"}};
    if (report.options.cider.d_variant) {
        conv["cider"]["sigma"] = report.options.cider.sigma;
    }
    j["conventions"] = std::move(conv);
    return j.dump(2) + "\n";
}

std::string format_table_header() {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-12s %7s %7s %7s %7s %7s %7s %7s\n", "", "B-1", "B-2", "B-3", "B-4", "C", "M",
                  "R");
    return buf;
}

std::string format_table_row(const std::string& label, const MetricScores& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %7.3f %7.3f %7.3f %7.3f %7.3f %7.3f %7.3f\n", label.c_str(), s.bleu[0],
                  s.bleu[1], s.bleu[2], s.bleu[3], s.cider, s.meteor, s.rouge_l);
    return buf;
}

} // namespace faegen
