#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "doctest.h"
#include "faegen/errors.hpp"
#include "faegen/metrics.hpp"
#include "faegen/rng.hpp"

using namespace faegen;

namespace {

EvalPair pair_of(const std::string& hyp, std::vector<std::string> refs, const std::string& topic = "t",
                 const std::string& id = "s") {
    EvalPair p{id, topic, tokenize(hyp), {}};
    for (const std::string& r : refs) {
        p.references.push_back(tokenize(r));
    }
    return p;
}

Tokens random_tokens(SeededRng& rng, std::size_t max_len, std::size_t alphabet) {
    Tokens t(rng.index(max_len + 1));
    for (std::string& w : t) {
        w = std::string(1, static_cast<char>('a' + rng.index(alphabet)));
    }
    return t;
}

std::vector<EvalPair> random_corpus(SeededRng& rng, std::size_t pairs, std::size_t alphabet = 5) {
    std::vector<EvalPair> out;
    for (std::size_t i = 0; i < pairs; ++i) {
        EvalPair p{"s" + std::to_string(i), i % 2 ? "odd" : "even", random_tokens(rng, 8, alphabet), {}};
        const std::size_t refs = 1 + rng.index(3);
        for (std::size_t r = 0; r < refs; ++r) {
            Tokens ref = random_tokens(rng, 8, alphabet);
            if (ref.empty()) {
                ref.push_back("a");
            }
            p.references.push_back(ref);
        }
        out.push_back(std::move(p));
    }
    return out;
}

// --- independent reference implementations --------------------------------

std::unordered_map<std::string, int> grams(const Tokens& t, std::size_t n) {
    std::unordered_map<std::string, int> out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
        std::string key;
        for (std::size_t k = i; k < i + n; ++k) {
            key += t[k] + "\x1f";
        }
        ++out[key];
    }
    return out;
}

std::vector<double> oracle_bleu(const std::vector<EvalPair>& pairs) {
    long hits[5] = {}, counts[5] = {};
    long c_total = 0, r_total = 0;
    for (const EvalPair& p : pairs) {
        const long c = static_cast<long>(p.hypothesis.size());
        long best = -1;
        for (const Tokens& r : p.references) {
            const long len = static_cast<long>(r.size());
            if (best < 0 || std::labs(len - c) < std::labs(best - c) ||
                (std::labs(len - c) == std::labs(best - c) && len < best)) {
                best = len;
            }
        }
        c_total += c;
        r_total += best;
        for (std::size_t n = 1; n <= 4; ++n) {
            for (const auto& [g, k] : grams(p.hypothesis, n)) {
                int cap = 0;
                for (const Tokens& r : p.references) {
                    const auto rg = grams(r, n);
                    const auto it = rg.find(g);
                    cap = std::max(cap, it == rg.end() ? 0 : it->second);
                }
                hits[n] += std::min(k, cap);
                counts[n] += k;
            }
        }
    }
    std::vector<double> out;
    const double bp = c_total == 0 ? 0.0 : (c_total < r_total ? std::exp(1.0 - double(r_total) / c_total) : 1.0);
    for (std::size_t n = 1; n <= 4; ++n) {
        double prod = 1.0;
        bool zero = false;
        for (std::size_t k = 1; k <= n; ++k) {
            zero = zero || hits[k] == 0;
            prod *= counts[k] ? double(hits[k]) / counts[k] : 0.0;
        }
        out.push_back(zero ? 0.0 : bp * std::pow(prod, 1.0 / n));
    }
    return out;
}

// LCS by trying every subsequence of the shorter side.
std::size_t brute_lcs(const Tokens& a, const Tokens& b) {
    const Tokens& s = a.size() <= b.size() ? a : b;
    const Tokens& l = a.size() <= b.size() ? b : a;
    std::size_t best = 0;
    for (unsigned mask = 0; mask < (1u << s.size()); ++mask) {
        std::size_t j = 0, len = 0;
        bool ok = true;
        for (std::size_t i = 0; i < s.size() && ok; ++i) {
            if (!(mask & (1u << i))) {
                continue;
            }
            while (j < l.size() && l[j] != s[i]) {
                ++j;
            }
            if (j == l.size()) {
                ok = false;
            } else {
                ++j;
                ++len;
            }
        }
        if (ok) {
            best = std::max(best, len);
        }
    }
    return best;
}

double oracle_cider(const std::vector<EvalPair>& pairs) {
    const double big_n = static_cast<double>(pairs.size());
    double total = 0.0;
    std::vector<std::unordered_map<std::string, int>> df(5);
    for (const EvalPair& p : pairs) {
        for (std::size_t n = 1; n <= 4; ++n) {
            std::unordered_set<std::string> seen;
            for (const Tokens& r : p.references) {
                for (const auto& [g, k] : grams(r, n)) {
                    seen.insert(g);
                }
            }
            for (const std::string& g : seen) {
                ++df[n][g];
            }
        }
    }
    for (const EvalPair& p : pairs) {
        double per_n = 0.0;
        for (std::size_t n = 1; n <= 4; ++n) {
            auto weight = [&](const std::string& g, int k) {
                const auto it = df[n].find(g);
                const double d = it == df[n].end() ? 1.0 : it->second;
                return k * std::log(big_n / d);
            };
            const auto h = grams(p.hypothesis, n);
            double sims = 0.0;
            for (const Tokens& r : p.references) {
                const auto rg = grams(r, n);
                double dotp = 0.0, hn = 0.0, rn = 0.0;
                for (const auto& [g, k] : h) {
                    hn += weight(g, k) * weight(g, k);
                    const auto it = rg.find(g);
                    if (it != rg.end()) {
                        dotp += weight(g, k) * weight(g, it->second);
                    }
                }
                for (const auto& [g, k] : rg) {
                    rn += weight(g, k) * weight(g, k);
                }
                sims += hn > 0 && rn > 0 ? dotp / std::sqrt(hn * rn) : 0.0;
            }
            per_n += sims / p.references.size();
        }
        total += 10.0 * per_n / 4.0;
    }
    return total / big_n;
}

std::size_t multiset_overlap(const Tokens& a, const Tokens& b) {
    std::map<std::string, int> ca, cb;
    for (const auto& w : a) {
        ++ca[w];
    }
    for (const auto& w : b) {
        ++cb[w];
    }
    std::size_t m = 0;
    for (const auto& [w, k] : ca) {
        m += static_cast<std::size_t>(std::min(k, cb[w]));
    }
    return m;
}

template <class T>
void shuffle(std::vector<T>& v, SeededRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.index(i)]);
    }
}

} // namespace

// ---------------------------------------------------------------------------
// n-grams

TEST_CASE("n-gram counts total len minus n plus one") {
    const Tokens t = tokenize("a b a b c");
    CHECK(count_ngrams(t, 1).size() == 3);
    CHECK(count_ngrams(t, 2).at(Tokens{"a", "b"}) == 2);
    for (std::size_t n = 1; n <= 6; ++n) {
        std::size_t total = 0;
        for (const auto& [g, k] : count_ngrams(t, n)) {
            CHECK(k >= 1);
            total += k;
        }
        CHECK(total == (n <= 5 ? 6 - n : 0));
    }
}

// ---------------------------------------------------------------------------
// BLEU

TEST_CASE("bleu of a hypothesis equal to its reference is one") {
    const std::vector<EvalPair> pairs{pair_of("the septum is intact today", {"the septum is intact today"})};
    for (double b : bleu(pairs)) {
        CHECK(b == 1.0);
    }
}

TEST_CASE("bleu brevity penalty hand example") {
    const std::vector<EvalPair> pairs{pair_of("the cat", {"the cat sat"})};
    const auto b = bleu(pairs, 1);
    CHECK(b[0] == doctest::Approx(0.6065).epsilon(1e-4));
    CHECK(b[0] == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
}

TEST_CASE("bleu clips repeated unigrams") {
    const std::vector<EvalPair> pairs{pair_of("a a", {"a b"})};
    CHECK(bleu(pairs, 1)[0] == 0.5);
}

TEST_CASE("bleu clips against the best single reference") {
    const std::vector<EvalPair> pairs{pair_of("a a a", {"a b c", "a a d"})};
    CHECK(bleu(pairs, 1)[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("bleu with a zero precision is zero at that order and above") {
    const std::vector<EvalPair> pairs{pair_of("a b c d", {"a c b d"})};
    const auto b = bleu(pairs);
    CHECK(b[0] == 1.0);
    CHECK(b[1] == 0.0);
    CHECK(b[2] == 0.0);
    CHECK(b[3] == 0.0);
}

TEST_CASE("bleu treats empty hypotheses as zero length") {
    const std::vector<EvalPair> empty{pair_of("", {"a b"})};
    CHECK(bleu(empty)[0] == 0.0);
    const std::vector<EvalPair> mixed{pair_of("", {"a b"}), pair_of("a b", {"a b"})};
    CHECK(bleu(mixed, 1)[0] == doctest::Approx(std::exp(1.0 - 4.0 / 2.0)).epsilon(1e-15));
    CHECK_THROWS_AS((void)bleu(std::vector<EvalPair>{}), InputError);
}

TEST_CASE("bleu uses the closest reference length, shorter on ties") {
    const std::vector<EvalPair> pairs{pair_of("a b c", {"a b", "a b c d"})};
    CHECK(bleu(pairs, 1)[0] == 1.0);
    const std::vector<EvalPair> shorter{pair_of("a b", {"a b c", "a b c d e"})};
    CHECK(bleu(shorter, 1)[0] == doctest::Approx(std::exp(1.0 - 1.5)).epsilon(1e-15));
}

TEST_CASE("bleu matches an independent implementation on random corpora") {
    SeededRng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto pairs = random_corpus(rng, 1 + rng.index(6), 3 + rng.index(4));
        const auto got = bleu(pairs);
        const auto want = oracle_bleu(pairs);
        for (std::size_t n = 0; n < 4; ++n) {
            CHECK(std::abs(got[n] - want[n]) < 1e-12);
            CHECK(got[n] >= 0.0);
            CHECK(got[n] <= 1.0);
        }
    }
}

// ---------------------------------------------------------------------------
// ROUGE-L

TEST_CASE("rouge-l hand example with beta 1.2") {
    const std::vector<EvalPair> pairs{pair_of("a b c", {"a c"})};
    CHECK(rouge_l(pairs) == doctest::Approx(0.8299).epsilon(1e-4));
    const double p = 2.0 / 3.0;
    CHECK(rouge_l(pairs) == doctest::Approx(2.44 * p / (1.0 + 1.44 * p)).epsilon(1e-14));
}

TEST_CASE("rouge-l of identical and of disjoint sequences") {
    CHECK(rouge_l(std::vector<EvalPair>{pair_of("x y z", {"x y z"})}) == 1.0);
    CHECK(rouge_l(std::vector<EvalPair>{pair_of("x y z", {"p q"})}) == 0.0);
    CHECK(rouge_l(std::vector<EvalPair>{pair_of("", {"p q"})}) == 0.0);
}

TEST_CASE("rouge-l takes the best reference and averages over pairs") {
    const std::vector<EvalPair> pairs{pair_of("a b", {"c d", "a b"}), pair_of("x", {"y"})};
    CHECK(rouge_l(pairs) == 0.5);
}

TEST_CASE("lcs matches brute-force subsequence search") {
    SeededRng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        const Tokens a = random_tokens(rng, 8, 3), b = random_tokens(rng, 8, 3);
        CHECK(lcs_length(a, b) == brute_lcs(a, b));
        CHECK(lcs_length(a, b) == lcs_length(b, a));
    }
}

// ---------------------------------------------------------------------------
// CIDEr

TEST_CASE("cider of a two-pair identity corpus with disjoint references is ten") {
    const std::vector<EvalPair> pairs{pair_of("the septum is intact", {"the septum is intact"}),
                                      pair_of("flow shows a shunt", {"flow shows a shunt"})};
    CHECK(std::abs(cider(pairs) - 10.0) < 1e-9);
}

TEST_CASE("cider of a single-pair corpus is zero") {
    const std::vector<EvalPair> pairs{pair_of("a b c", {"a b c"})};
    CHECK(cider(pairs) == 0.0);
}

TEST_CASE("a hypothesis sharing nothing with its references contributes zero") {
    const std::vector<EvalPair> pairs{pair_of("p q r s", {"a b c d"}), pair_of("e f g h", {"e f g h"})};
    CHECK(std::abs(cider(pairs) - 5.0) < 1e-9);
}

TEST_CASE("cider matches an independent implementation on random corpora") {
    SeededRng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto pairs = random_corpus(rng, 1 + rng.index(6), 3 + rng.index(5));
        const double got = cider(pairs);
        CHECK(std::abs(got - oracle_cider(pairs)) < 1e-9);
        CHECK(got >= 0.0);
        CHECK(got <= 10.0 + 1e-9);
    }
}

TEST_CASE("cider-d penalises length gaps and never exceeds plain cider") {
    const std::vector<EvalPair> pairs{pair_of("a b c d e f g h", {"a b c d"}), pair_of("x y z", {"x y z w"})};
    CiderOptions d;
    d.d_variant = true;
    CHECK(cider(pairs, d) < cider(pairs));
    const std::vector<EvalPair> same{pair_of("a b c d", {"a b c d"}), pair_of("e f g h", {"e f g h"})};
    CHECK(std::abs(cider(same, d) - 10.0) < 1e-9);
}

// ---------------------------------------------------------------------------
// METEOR

TEST_CASE("meteor of identical four-token sequences") {
    const Tokens t = tokenize("a b c d");
    const MeteorAlignment a = meteor_align(t, t);
    CHECK(a.matches == 4);
    CHECK(a.chunks == 1);
    CHECK(meteor_sentence(t, t) == 0.9921875);
    CHECK(meteor_lite(std::vector<EvalPair>{pair_of("a b c d", {"a b c d"})}) == 0.9921875);
}

TEST_CASE("meteor with no matches is zero") {
    CHECK(meteor_sentence(tokenize("a b"), tokenize("c d")) == 0.0);
    CHECK(meteor_sentence(Tokens{}, tokenize("c d")) == 0.0);
}

TEST_CASE("meteor with one shared mid-sequence token is half the f-mean") {
    const Tokens h = tokenize("x a y"), r = tokenize("p q a s");
    const MeteorAlignment a = meteor_align(h, r);
    CHECK(a.matches == 1);
    CHECK(a.chunks == 1);
    const double p = 1.0 / 3.0, rec = 1.0 / 4.0;
    const double f = p * rec / (0.9 * p + 0.1 * rec);
    CHECK(meteor_sentence(h, r) == doctest::Approx(f / 2.0).epsilon(1e-15));
}

TEST_CASE("meteor counts chunks of contiguous matches") {
    const MeteorAlignment a = meteor_align(tokenize("c d a b"), tokenize("a b c d"));
    CHECK(a.matches == 4);
    CHECK(a.chunks == 2);
    const double penalty = 0.5 * std::pow(0.5, 3.0);
    CHECK(meteor_sentence(tokenize("c d a b"), tokenize("a b c d")) == doctest::Approx(1.0 - penalty).epsilon(1e-15));
}

TEST_CASE("meteor alignment is a maximum matching") {
    SeededRng rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        const Tokens h = random_tokens(rng, 8, 3), r = random_tokens(rng, 8, 3);
        const MeteorAlignment a = meteor_align(h, r);
        CHECK(a.matches == multiset_overlap(h, r));
        if (a.matches > 0) {
            CHECK(a.chunks >= 1);
            CHECK(a.chunks <= a.matches);
        }
        const double s = meteor_sentence(h, r);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

// ---------------------------------------------------------------------------
// corpus properties

TEST_CASE("every metric is exactly invariant to pair order") {
    SeededRng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto pairs = random_corpus(rng, 2 + rng.index(10));
        const MetricScores before = score_pairs(pairs);
        shuffle(pairs, rng);
        const MetricScores after = score_pairs(pairs);
        CHECK(before.bleu == after.bleu);
        CHECK(before.meteor == after.meteor);
        CHECK(before.rouge_l == after.rouge_l);
        CHECK(before.cider == after.cider);
        CiderOptions d;
        d.d_variant = true;
        const double cd = cider(pairs, d);
        shuffle(pairs, rng);
        CHECK(cider(pairs, d) == cd);
    }
}

TEST_CASE("metrics depend only on token identity, not spelling") {
    SeededRng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        auto pairs = random_corpus(rng, 2 + rng.index(6));
        auto renamed = pairs;
        auto rename = [](Tokens& t) {
            for (std::string& w : t) {
                w = "w" + std::to_string('z' - w[0]);
            }
        };
        for (EvalPair& p : renamed) {
            rename(p.hypothesis);
            for (Tokens& r : p.references) {
                rename(r);
            }
        }
        const MetricScores a = score_pairs(pairs), b = score_pairs(renamed);
        for (std::size_t n = 0; n < 4; ++n) {
            CHECK(a.bleu[n] == b.bleu[n]);
        }
        CHECK(a.meteor == b.meteor);
        CHECK(a.rouge_l == b.rouge_l);
        CHECK(std::abs(a.cider - b.cider) < 1e-12);
    }
}

TEST_CASE("identity hypotheses reach the documented maxima") {
    std::vector<EvalPair> pairs;
    const std::vector<std::string> texts{"the left atrium is enlarged", "septal echo is intact",
                                         "color doppler shows no shunt", "wall motion is normal"};
    double meteor_expect = 0.0;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        pairs.push_back(pair_of(texts[i], {texts[i]}, "t", "s" + std::to_string(i)));
        const double len = static_cast<double>(tokenize(texts[i]).size());
        meteor_expect += (1.0 - 0.5 / (len * len * len)) / 4.0;
    }
    const MetricScores s = score_pairs(pairs);
    for (double b : s.bleu) {
        CHECK(b == 1.0);
    }
    CHECK(s.rouge_l == 1.0);
    CHECK(std::abs(s.cider - 10.0) < 1e-9);
    CHECK(s.meteor == doctest::Approx(meteor_expect).epsilon(1e-15));
}

// ---------------------------------------------------------------------------
// evaluation against a dataset

namespace {

Dataset reference_set() {
    Dataset d;
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.observations.push_back({Vector{1.0}, Vector{0.0}});
        s.reports["echo"] = tokenize(i % 2 ? "septal echo is intact" : "atrial septal echo shows a defect");
        s.reports["flow"] = tokenize(i % 2 ? "no abnormal shunt is seen" : "a left to right shunt");
        d.push_back(s);
    }
    return d;
}

std::vector<HypothesisRecord> identity_hypotheses(const Dataset& d) {
    std::vector<HypothesisRecord> out;
    for (const Sample& s : d) {
        for (const auto& [topic, tokens] : s.reports) {
            out.push_back({s.id, topic, join_tokens(tokens), 0.0});
        }
    }
    return out;
}

} // namespace

TEST_CASE("evaluating references against themselves hits the maxima") {
    const Dataset d = reference_set();
    const ScoreReport r = evaluate(identity_hypotheses(d), d);
    CHECK(r.overall.num_pairs == 8);
    for (double b : r.overall.bleu) {
        CHECK(b == 1.0);
    }
    CHECK(r.overall.rouge_l == 1.0);
    CHECK(std::abs(r.overall.cider - 10.0) < 1e-9);
    CHECK(r.per_topic.size() == 2);
}

TEST_CASE("an empty topic filter equals the unfiltered evaluation") {
    const Dataset d = reference_set();
    auto hyps = identity_hypotheses(d);
    hyps[0].hypothesis = "septal echo";
    hyps[3].hypothesis = "no shunt is seen";
    const std::vector<std::string> none;
    const ScoreReport a = evaluate(hyps, d);
    const ScoreReport b = evaluate(hyps, d, none);
    CHECK(score_report_to_json(a) == score_report_to_json(b));

    const std::vector<std::string> echo{"echo"};
    const ScoreReport only = evaluate(hyps, d, echo);
    CHECK(only.overall.num_pairs == 4);
    CHECK(only.per_topic.size() == 1);
}

TEST_CASE("per-topic scores equal a recomputation on that topic's pairs") {
    const Dataset d = reference_set();
    auto hyps = identity_hypotheses(d);
    hyps[1].hypothesis = "a left shunt";
    hyps[2].hypothesis = "septal echo shows";
    const ScoreReport r = evaluate(hyps, d);
    const auto pairs = build_eval_pairs(hyps, d);
    for (const auto& [topic, scores] : r.per_topic) {
        std::vector<EvalPair> subset;
        for (const EvalPair& p : pairs) {
            if (p.topic == topic) {
                subset.push_back(p);
            }
        }
        const MetricScores again = score_pairs(subset);
        CHECK(scores.cider == again.cider);
        CHECK(scores.bleu == again.bleu);
        CHECK(scores.num_pairs == subset.size());
        CHECK(scores.meteor == again.meteor);
        CHECK(scores.rouge_l == again.rouge_l);
    }
    CHECK(r.per_topic.at("echo").num_pairs + r.per_topic.at("flow").num_pairs == r.overall.num_pairs);
}

TEST_CASE("unmatched hypotheses are reported by id") {
    const Dataset d = reference_set();
    auto hyps = identity_hypotheses(d);
    hyps.push_back({"ghost", "echo", "x", 0.0});
    hyps.push_back({"s1", "nosuchtopic", "x", 0.0});
    try {
        (void)evaluate(hyps, d);
        FAIL("expected an input error");
    } catch (const InputError& e) {
        const std::string what = e.what();
        CHECK(what.find("ghost/echo") != std::string::npos);
        CHECK(what.find("s1/nosuchtopic") != std::string::npos);
    }
}

TEST_CASE("score report carries its conventions and the table is aligned") {
    const Dataset d = reference_set();
    const ScoreReport r = evaluate(identity_hypotheses(d), d);
    const std::string json = score_report_to_json(r);
    CHECK(json.find("meteor_lite") != std::string::npos);
    CHECK(json.find("\"beta\": 1.2") != std::string::npos);
    CHECK(json.find("\"scale\": 10.0") != std::string::npos);
    const std::string header = format_table_header();
    const std::string row = format_table_row("all", r.overall);
    CHECK(header.size() == row.size());
    CHECK(row.find("10.000") != std::string::npos);
}
