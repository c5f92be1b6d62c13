#include "faegen/corpus.hpp"

#include <array>
#include <cstdio>

#include "faegen/errors.hpp"
#include "faegen/rng.hpp"

namespace faegen {

namespace {

constexpr std::array<const char*, kNumSeverities> kSizeWords = {"four", "six", "eight", "ten", "twelve", "fourteen"};
constexpr std::array<const char*, 4> kNamedTopics = {"echo", "motion", "structure", "flow"};

constexpr std::array<Condition, 3> kConditions = {Condition::normal, Condition::vsd, Condition::asd};

// {N} is replaced by the severity's size word.
std::string template_text(std::string_view topic, Condition condition) {
    if (topic == "echo") {
        switch (condition) {
        case Condition::normal:
            return "atrial and ventricular septal echo is continuous and intact";
        case Condition::asd:
            return "atrial septal echo shows a defect of {N} mm";
        case Condition::vsd:
            return "ventricular septal echo shows a defect of {N} mm";
        }
    }
    if (topic == "motion") {
        switch (condition) {
        case Condition::normal:
            return "ventricular wall motion is coordinated with normal amplitude";
        case Condition::asd:
            return "ventricular wall motion is coordinated with increased right ventricular amplitude";
        case Condition::vsd:
            return "ventricular septal motion is reduced and left ventricular wall motion is enhanced";
        }
    }
    if (topic == "structure") {
        switch (condition) {
        case Condition::normal:
            return "cardiac chambers are normal in size and the great arteries are normal";
        case Condition::asd:
            return "right atrium and right ventricle are enlarged and the pulmonary artery is wide";
        case Condition::vsd:
            return "left atrium and left ventricle are enlarged by {N} mm";
        }
    }
    if (topic == "flow") {
        switch (condition) {
        case Condition::normal:
            return "color doppler shows no abnormal shunt across the septum";
        case Condition::asd:
            return "color doppler shows a left to right shunt at atrial level of {N} mm";
        case Condition::vsd:
            return "color doppler shows a left to right shunt at ventricular level with high velocity";
        }
    }
    const std::string name(topic);
    switch (condition) {
    case Condition::normal:
        return name + " findings are normal";
    case Condition::asd:
        return name + " findings show atrial abnormality of grade {N}";
    case Condition::vsd:
        return name + " findings show ventricular abnormality of grade {N}";
    }
    return name;
}

} // namespace

void SynthConfig::validate() const {
    auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (num_train < 1 || num_test < 1 || num_topics < 1 || num_views < 1 || feature_dim < 1) {
        throw InputError("SynthConfig: counts and dimensions must be >= 1");
    }
    if (!in_unit(missing_prob) || !in_unit(repeat_prob)) {
        throw InputError("SynthConfig: probabilities must lie in [0, 1]");
    }
    if (feature_noise < 0.0 || view_confidence < 0.0) {
        throw InputError("SynthConfig: noise and confidence must be non-negative");
    }
}

std::vector<std::string> synth_topic_names(std::size_t num_topics) {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < num_topics; ++k) {
        names.push_back(k < kNamedTopics.size() ? kNamedTopics[k] : "section" + std::to_string(k + 1));
    }
    return names;
}

std::vector<std::string> render_report(std::string_view topic, Condition condition, int severity) {
    if (severity < 0 || severity >= kNumSeverities) {
        throw InputError("render_report: severity " + std::to_string(severity) + " out of range");
    }
    std::vector<std::string> tokens = tokenize(template_text(topic, condition));
    for (std::string& t : tokens) {
        if (t == "{n}") {
            t = kSizeWords[static_cast<std::size_t>(severity)];
        }
    }
    return tokens;
}

std::optional<std::size_t> classify_template(std::span<const std::string> tokens,
                                             std::span<const std::string> topics) {
    for (std::size_t k = 0; k < topics.size(); ++k) {
        for (Condition c : kConditions) {
            for (int s = 0; s < kNumSeverities; ++s) {
                const std::vector<std::string> rendered = render_report(topics[k], c, s);
                if (std::equal(rendered.begin(), rendered.end(), tokens.begin(), tokens.end())) {
                    return k;
                }
            }
        }
    }
    return std::nullopt;
}

SynthCorpus synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t views = cfg.num_views;
    const std::size_t dim = cfg.feature_dim;

    // Class-conditional feature means and the per-view direction along which
    // defect size shifts the features.
    SeededRng table_rng(derive_seed(cfg.seed, 0));
    std::vector<std::array<Vector, 3>> means(views);
    std::vector<Vector> size_direction(views);
    for (std::size_t v = 0; v < views; ++v) {
        for (Vector& m : means[v]) {
            m = draw_gaussian(table_rng, 0.0, 1.0, dim);
        }
        size_direction[v] = draw_gaussian(table_rng, 0.0, 1.0, dim);
    }

    SynthCorpus corpus;
    corpus.topics = synth_topic_names(cfg.num_topics);
    SeededRng rng(derive_seed(cfg.seed, 1));

    auto make_sample = [&](const std::string& id) {
        Sample s;
        s.id = id;
        s.condition = kConditions[rng.index(3)];
        s.severity = static_cast<int>(rng.index(kNumSeverities));

        std::vector<std::size_t> present;
        std::size_t dropped = 0;
        for (std::size_t v = 0; v < views; ++v) {
            if (rng.uniform01() < cfg.missing_prob) {
                ++dropped;
            } else {
                present.push_back(v);
            }
        }
        if (present.empty()) {
            present.push_back(rng.index(views));
            --dropped;
        }
        const std::size_t distinct = present.size();
        for (std::size_t i = 0; i < dropped; ++i) {
            if (rng.uniform01() < cfg.repeat_prob) {
                const std::size_t repeated = present[rng.index(distinct)];
                present.push_back(repeated);
            }
        }
        for (std::size_t i = present.size(); i > 1; --i) {
            std::swap(present[i - 1], present[rng.index(i)]);
        }

        const double size_shift =
            s.condition == Condition::normal ? 0.0 : (s.severity - 0.5 * (kNumSeverities - 1)) / (0.5 * (kNumSeverities - 1));
        const auto cond_idx = static_cast<std::size_t>(s.condition);
        for (std::size_t v : present) {
            ViewObservation obs;
            obs.features = Vector(dim);
            for (std::size_t d = 0; d < dim; ++d) {
                obs.features[d] = means[v][cond_idx][d] + size_shift * size_direction[v][d] +
                                  rng.gaussian(0.0, cfg.feature_noise);
            }
            Vector logits(views);
            for (std::size_t u = 0; u < views; ++u) {
                logits[u] = (u == v ? cfg.view_confidence : 0.0) + rng.gaussian(0.0, 1.0);
            }
            obs.view_probs = softmax(logits);
            s.observations.push_back(std::move(obs));
        }
        for (const std::string& topic : corpus.topics) {
            s.reports[topic] = render_report(topic, s.condition, s.severity);
        }
        return s;
    };

    char id[32];
    for (std::size_t i = 0; i < cfg.num_train; ++i) {
        std::snprintf(id, sizeof id, "train-%05zu", i);
        corpus.train.push_back(make_sample(id));
    }
    for (std::size_t i = 0; i < cfg.num_test; ++i) {
        std::snprintf(id, sizeof id, "test-%05zu", i);
        corpus.test.push_back(make_sample(id));
    }
    return corpus;
}

} // namespace faegen
