#include "faegen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "faegen/errors.hpp"
#include "json.hpp"

namespace faegen {

using ojson = nlohmann::ordered_json;

namespace {

const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
    return tokens;
}

ojson sample_to_json(const Sample& s) {
    ojson j;
    j["id"] = s.id;
    j["condition"] = std::string(condition_name(s.condition));
    if (s.severity >= 0) {
        j["severity"] = s.severity;
    }
    ojson views = ojson::array();
    for (const ViewObservation& obs : s.observations) {
        ojson v;
        v["view_probs"] = obs.view_probs.values();
        v["features"] = obs.features.values();
        views.push_back(std::move(v));
    }
    j["views"] = std::move(views);
    ojson reports = ojson::object();
    for (const auto& [topic, tokens] : s.reports) {
        reports[topic] = join_tokens(tokens);
    }
    j["reports"] = std::move(reports);
    return j;
}

Vector json_to_vector(const ojson& j, const char* field) {
    if (!j.is_array()) {
        throw std::runtime_error(std::string("field '") + field + "' must be an array");
    }
    std::vector<double> values;
    values.reserve(j.size());
    for (const ojson& x : j) {
        if (!x.is_number()) {
            throw std::runtime_error(std::string("field '") + field + "' holds a non-number");
        }
        values.push_back(x.get<double>());
    }
    return Vector(std::move(values));
}

Sample sample_from_json(const ojson& j) {
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.condition = parse_condition(j.at("condition").get<std::string>());
    if (j.contains("severity")) {
        s.severity = j.at("severity").get<int>();
    }
    for (const ojson& v : j.at("views")) {
        s.observations.push_back({json_to_vector(v.at("view_probs"), "view_probs"),
                                  json_to_vector(v.at("features"), "features")});
    }
    for (const auto& [topic, text] : j.at("reports").items()) {
        s.reports[topic] = tokenize(text.get<std::string>());
    }
    return s;
}

} // namespace

std::string_view condition_name(Condition c) {
    switch (c) {
    case Condition::normal:
        return "normal";
    case Condition::vsd:
        return "VSD";
    case Condition::asd:
        return "ASD";
    }
    return "normal";
}

Condition parse_condition(std::string_view name) {
    if (name == "normal") {
        return Condition::normal;
    }
    if (name == "VSD") {
        return Condition::vsd;
    }
    if (name == "ASD") {
        return Condition::asd;
    }
    throw InputError("unknown condition '" + std::string(name) + "'");
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) {
            out.push_back(' ');
        }
        out += tokens[i];
    }
    return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(reserved_tokens(), std::vector<std::size_t>(kNumReserved, 0)) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::size_t> counts)
    : tokens_(std::move(tokens)), counts_(std::move(counts)) {
    if (tokens_.size() != counts_.size()) {
        throw InputError("Vocabulary: token and count lists differ in length");
    }
    if (tokens_.size() < kNumReserved || !std::equal(reserved_tokens().begin(), reserved_tokens().end(), tokens_.begin())) {
        throw InputError("Vocabulary: first entries must be <pad> <bos> <eos> <unk>");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], i).second) {
            throw InputError("Vocabulary: duplicate token '" + tokens_[i] + "'");
        }
    }
}

Vocabulary Vocabulary::build(const Dataset& dataset, std::size_t min_count) {
    std::map<std::string, std::size_t> freq;
    for (const Sample& s : dataset) {
        for (const auto& [topic, tokens] : s.reports) {
            for (const std::string& t : tokens) {
                ++freq[t];
            }
        }
    }
    std::vector<std::pair<std::string, std::size_t>> entries;
    for (const auto& [token, count] : freq) {
        const bool reserved = std::find(reserved_tokens().begin(), reserved_tokens().end(), token) != reserved_tokens().end();
        if (count >= min_count && !reserved) {
            entries.emplace_back(token, count);
        }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });

    std::vector<std::string> tokens = reserved_tokens();
    std::vector<std::size_t> counts(kNumReserved, 0);
    for (auto& [token, count] : entries) {
        tokens.push_back(token);
        counts.push_back(count);
    }
    return Vocabulary(std::move(tokens), std::move(counts));
}

const std::string& Vocabulary::token(std::size_t index) const {
    if (index >= tokens_.size()) {
        throw InputError("Vocabulary: index " + std::to_string(index) + " out of range (size " +
                         std::to_string(tokens_.size()) + ")");
    }
    return tokens_[index];
}

std::size_t Vocabulary::index_of(std::string_view token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size() + 1);
    for (const std::string& t : tokens) {
        out.push_back(index_of(t));
    }
    out.push_back(kEos);
    return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const std::size_t> indices) const {
    std::vector<std::string> out;
    for (std::size_t i : indices) {
        const std::string& t = token(i);
        if (i == kPad || i == kBos || i == kEos) {
            continue;
        }
        out.push_back(t);
    }
    return out;
}

std::optional<std::size_t> Lexicon::topic_index(std::string_view name) const {
    const auto it = std::find(topics.begin(), topics.end(), name);
    if (it == topics.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - topics.begin());
}

EncodedSample encode_sample(const Sample& sample, const Lexicon& lexicon) {
    EncodedSample e;
    e.id = sample.id;
    e.observations = sample.observations;
    for (const auto& [topic, tokens] : sample.reports) {
        const auto k = lexicon.topic_index(topic);
        if (!k) {
            throw InputError("sample " + sample.id + ": topic '" + topic + "' not in the topic inventory");
        }
        e.targets.push_back({*k, lexicon.vocab.encode(tokens)});
    }
    std::sort(e.targets.begin(), e.targets.end(), [](const auto& a, const auto& b) { return a.topic < b.topic; });
    return e;
}

void validate_sample(const Sample& sample) {
    if (sample.observations.empty()) {
        throw InputError("sample " + sample.id + ": no view observations");
    }
    for (std::size_t j = 0; j < sample.observations.size(); ++j) {
        const ViewObservation& obs = sample.observations[j];
        const std::string where = "sample " + sample.id + ", view " + std::to_string(j);
        if (obs.view_probs.empty() || !all_finite(obs.view_probs.span()) || !all_finite(obs.features.span())) {
            throw InputError(where + ": empty or non-finite values");
        }
        double total = 0.0;
        for (double p : obs.view_probs) {
            if (p < 0.0) {
                throw InputError(where + ": negative view probability");
            }
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw InputError(where + ": view probabilities sum to " + std::to_string(total) + ", not 1");
        }
    }
    for (const auto& [topic, tokens] : sample.reports) {
        if (tokens.empty()) {
            throw InputError("sample " + sample.id + ": empty report for topic '" + topic + "'");
        }
    }
}

// ---------------------------------------------------------------------------

std::string dataset_to_jsonl(const Dataset& dataset) {
    std::string out;
    for (const Sample& s : dataset) {
        out += sample_to_json(s).dump();
        out.push_back('\n');
    }
    return out;
}

Dataset dataset_from_jsonl(std::string_view text) {
    Dataset out;
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
        Sample s;
        try {
            s = sample_from_json(ojson::parse(line));
        } catch (const std::exception& e) {
            throw ParseError(std::string("malformed dataset record: ") + e.what(), line_no);
        }
        try {
            validate_sample(s);
        } catch (const InputError& e) {
            throw InputError("line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

void save_dataset(const std::string& path, const Dataset& dataset) { write_file_atomic(path, dataset_to_jsonl(dataset)); }

Dataset load_dataset(const std::string& path) { return dataset_from_jsonl(read_file(path)); }

void save_lexicon(const std::string& path, const Lexicon& lexicon) {
    ojson j;
    j["topics"] = lexicon.topics;
    ojson tokens = ojson::array();
    for (std::size_t i = 0; i < lexicon.vocab.size(); ++i) {
        tokens.push_back({{"token", lexicon.vocab.token(i)}, {"count", lexicon.vocab.count(i)}});
    }
    j["tokens"] = std::move(tokens);
    write_file_atomic(path, j.dump(1) + "\n");
}

Lexicon load_lexicon(const std::string& path) {
    try {
        const ojson j = ojson::parse(read_file(path));
        std::vector<std::string> tokens;
        std::vector<std::size_t> counts;
        for (const ojson& t : j.at("tokens")) {
            tokens.push_back(t.at("token").get<std::string>());
            counts.push_back(t.at("count").get<std::size_t>());
        }
        return Lexicon{Vocabulary(std::move(tokens), std::move(counts)), j.at("topics").get<std::vector<std::string>>()};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": malformed vocabulary file: " + e.what(), 0);
    }
}

void write_file_atomic(const std::string& path, std::string_view content) {
    const std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw InputError("cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw InputError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw InputError("cannot move " + tmp.string() + " to " + path + ": " + ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot read " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace faegen
