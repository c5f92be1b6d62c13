#include <map>

#include "faegen/errors.hpp"
#include "faegen/trainer.hpp"
#include "json.hpp"

namespace faegen {

using ojson = nlohmann::ordered_json;

namespace {

ojson config_to_json(const FaeGenConfig& c) {
    ojson j;
    j["hidden_dim"] = c.hidden_dim;
    j["feature_dim"] = c.feature_dim;
    j["num_views"] = c.num_views;
    j["topic_factor_dim"] = c.topic_factor_dim;
    j["num_topics"] = c.num_topics;
    j["vocab_size"] = c.vocab_size;
    j["max_len"] = c.max_len;
    j["attention_mode"] = std::string(to_string(c.attention_mode));
    j["embedding_mode"] = std::string(to_string(c.embedding_mode));
    j["topic_factor_shape"] = std::string(to_string(c.topic_factor_shape));
    return j;
}

FaeGenConfig config_from_json(const ojson& j) {
    FaeGenConfig c;
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.num_views = j.at("num_views").get<std::size_t>();
    c.topic_factor_dim = j.at("topic_factor_dim").get<std::size_t>();
    c.num_topics = j.at("num_topics").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.attention_mode = parse_attention_mode(j.at("attention_mode").get<std::string>());
    c.embedding_mode = parse_embedding_mode(j.at("embedding_mode").get<std::string>());
    c.topic_factor_shape = parse_factor_shape(j.at("topic_factor_shape").get<std::string>());
    return c;
}

} // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
    ojson lexicon;
    lexicon["topics"] = ckpt.lexicon.topics;
    ojson tokens = ojson::array();
    for (std::size_t i = 0; i < ckpt.lexicon.vocab.size(); ++i) {
        tokens.push_back({ckpt.lexicon.vocab.token(i), ckpt.lexicon.vocab.count(i)});
    }
    lexicon["tokens"] = std::move(tokens);

    ojson training;
    training["epoch"] = ckpt.epoch;
    training["final_loss"] = ckpt.final_loss;
    training["seed"] = ckpt.seed;

    // One field per line, one tensor per line.
    std::string out = "{\n";
    out += "\"format_version\": " + std::to_string(kCheckpointVersion) + ",\n";
    out += "\"config\": " + config_to_json(ckpt.config).dump() + ",\n";
    out += "\"training\": " + training.dump() + ",\n";
    out += "\"lexicon\": " + lexicon.dump() + ",\n";
    out += "\"tensors\": [\n";
    const auto tensors = named_tensors(ckpt.params);
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        ojson tj;
        tj["name"] = tensors[t].name;
        tj["shape"] = {tensors[t].rows, tensors[t].cols};
        tj["values"] = std::vector<double>(tensors[t].values.begin(), tensors[t].values.end());
        out += tj.dump();
        out += t + 1 < tensors.size() ? ",\n" : "\n";
    }
    out += "]\n}\n";
    return out;
}

Checkpoint checkpoint_from_string(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what(), 0);
    }
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointVersion) {
            throw ParseError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")",
                             0);
        }
        Checkpoint ckpt;
        ckpt.config = config_from_json(j.at("config"));
        ckpt.config.validate();

        const ojson& training = j.at("training");
        ckpt.epoch = training.at("epoch").get<std::size_t>();
        ckpt.final_loss = training.at("final_loss").get<double>();
        ckpt.seed = training.at("seed").get<std::uint64_t>();

        const ojson& lex = j.at("lexicon");
        std::vector<std::string> tokens;
        std::vector<std::size_t> counts;
        for (const ojson& t : lex.at("tokens")) {
            tokens.push_back(t.at(0).get<std::string>());
            counts.push_back(t.at(1).get<std::size_t>());
        }
        ckpt.lexicon = Lexicon{Vocabulary(std::move(tokens), std::move(counts)),
                               lex.at("topics").get<std::vector<std::string>>()};
        if (ckpt.lexicon.vocab.size() != ckpt.config.vocab_size) {
            throw ParseError("checkpoint vocabulary has " + std::to_string(ckpt.lexicon.vocab.size()) +
                                 " tokens but config says " + std::to_string(ckpt.config.vocab_size),
                             0);
        }

        std::map<std::string, const ojson*> stored;
        for (const ojson& tj : j.at("tensors")) {
            const std::string name = tj.at("name").get<std::string>();
            if (!stored.emplace(name, &tj).second) {
                throw ParseError("tensor '" + name + "' appears twice", 0);
            }
        }
        ckpt.params = FaeGenParams::zeros(ckpt.config);
        auto tensors = named_tensors(ckpt.params);
        for (TensorRef& t : tensors) {
            const auto it = stored.find(t.name);
            if (it == stored.end()) {
                throw ParseError("tensor '" + t.name + "' is missing", 0);
            }
            const ojson& tj = *it->second;
            const auto shape = tj.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols) {
                throw ParseError("tensor '" + t.name + "' has shape " + tj.at("shape").dump() +
                                     ", config implies [" + std::to_string(t.rows) + "," + std::to_string(t.cols) +
                                     "]",
                                 0);
            }
            const ojson& values = tj.at("values");
            if (values.size() != t.values.size()) {
                throw ParseError("tensor '" + t.name + "' holds " + std::to_string(values.size()) + " values, expected " +
                                     std::to_string(t.values.size()),
                                 0);
            }
            for (std::size_t i = 0; i < values.size(); ++i) {
                t.values[i] = values[i].get<double>();
            }
            stored.erase(it);
        }
        if (!stored.empty()) {
            throw ParseError("unexpected tensor '" + stored.begin()->first + "'", 0);
        }
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed checkpoint: ") + e.what(), 0);
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    write_file_atomic(path, checkpoint_to_string(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_string(read_file(path)); }

} // namespace faegen
