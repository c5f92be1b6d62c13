#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>

#include "CLI11.hpp"
#include "faegen/corpus.hpp"
#include "faegen/decoder.hpp"
#include "faegen/errors.hpp"
#include "faegen/metrics.hpp"
#include "faegen/model.hpp"
#include "faegen/trainer.hpp"
#include "json.hpp"

namespace faegen::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// A check failure or input problem already reported; carries the exit code.
struct ExitRequest {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& message) { throw ExitRequest{code, message}; }

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    if (!dir.empty()) {
        fs::create_directories(dir, ec);
    }
    if (ec || (!dir.empty() && !fs::is_directory(dir))) {
        fail(kUsageError, "cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
    }
}

fs::path parent_or_dot(const std::string& file) {
    const fs::path p = fs::path(file).parent_path();
    return p.empty() ? fs::path(".") : p;
}

// Manifest with the resolved configuration and a replayable command line.
void write_manifest(const fs::path& dir, const std::string& subcommand, const ojson& config, const ojson& seeds,
                    const ojson& inputs, const ojson& outputs, const std::vector<std::string>& argv) {
    ojson m;
    m["tool"] = "faegen";
    m["version"] = kToolVersion;
    m["subcommand"] = subcommand;
    m["config"] = config;
    m["seeds"] = seeds;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    ojson cmd = ojson::array({"faegen", subcommand});
    for (const std::string& a : argv) {
        cmd.push_back(a);
    }
    m["command_line"] = std::move(cmd);
    write_file_atomic((dir / ("manifest." + subcommand + ".json")).string(), m.dump(2) + "\n");
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------

struct SynthOptions {
    std::string out;
    SynthConfig cfg;
    std::size_t min_count = 1;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
    ensure_directory(o.out);
    const SynthCorpus corpus = synth_generate(o.cfg);
    const Lexicon lexicon{Vocabulary::build(corpus.train, o.min_count), corpus.topics};

    const fs::path dir(o.out);
    save_dataset((dir / "train.jsonl").string(), corpus.train);
    save_dataset((dir / "test.jsonl").string(), corpus.test);
    save_lexicon((dir / "vocab.json").string(), lexicon);

    const SynthConfig& c = o.cfg;
    ojson config;
    config["train"] = c.num_train;
    config["test"] = c.num_test;
    config["topics"] = c.num_topics;
    config["views"] = c.num_views;
    config["feature_dim"] = c.feature_dim;
    config["noise"] = c.feature_noise;
    config["confidence"] = c.view_confidence;
    config["missing"] = c.missing_prob;
    config["repeat"] = c.repeat_prob;
    config["min_count"] = o.min_count;
    write_manifest(dir, "synth", config, {{"seed", c.seed}}, ojson::object(),
                   {{"train", "train.jsonl"}, {"test", "test.jsonl"}, {"vocab", "vocab.json"}},
                   {"--out", o.out, "--train", std::to_string(c.num_train), "--test", std::to_string(c.num_test),
                    "--seed", std::to_string(c.seed), "--topics", std::to_string(c.num_topics), "--views",
                    std::to_string(c.num_views), "--feature-dim", std::to_string(c.feature_dim), "--noise",
                    fmt_double(c.feature_noise), "--confidence", fmt_double(c.view_confidence), "--missing",
                    fmt_double(c.missing_prob), "--repeat", fmt_double(c.repeat_prob), "--min-count",
                    std::to_string(o.min_count)});
    out << "wrote " << corpus.train.size() << " train and " << corpus.test.size() << " test samples, vocabulary of "
        << lexicon.vocab.size() << " tokens, to " << o.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct ModelOptions {
    std::size_t hidden = 512;
    std::size_t topic_factor_dim = 10;
    std::size_t max_len = 30;
    std::string attention = "factored";
    std::string embedding = "factored";
    std::string topic_factor_shape = "full";
};

void add_model_options(CLI::App* app, ModelOptions& m) {
    app->add_option("--hidden", m.hidden, "Hidden/feature size of the recurrent part")->check(CLI::PositiveNumber);
    app->add_option("--topic-factor-dim", m.topic_factor_dim, "Size of the topic factor matrices")
        ->check(CLI::PositiveNumber);
    app->add_option("--max-len", m.max_len, "Maximum description length")->check(CLI::PositiveNumber);
    app->add_option("--attention", m.attention, "View encoding: factored | plain | mean_pool")
        ->check(CLI::IsMember({"factored", "plain", "mean_pool"}));
    app->add_option("--embedding", m.embedding, "Word embedding: factored | shared")
        ->check(CLI::IsMember({"factored", "shared"}));
    app->add_option("--topic-factor-shape", m.topic_factor_shape, "Topic factor: full | diagonal")
        ->check(CLI::IsMember({"full", "diagonal"}));
}

void apply_model_options(const ModelOptions& m, FaeGenConfig& c) {
    c.hidden_dim = m.hidden;
    c.topic_factor_dim = m.topic_factor_dim;
    c.max_len = m.max_len;
    c.attention_mode = parse_attention_mode(m.attention);
    c.embedding_mode = parse_embedding_mode(m.embedding);
    c.topic_factor_shape = parse_factor_shape(m.topic_factor_shape);
}

std::vector<std::string> model_argv(const ModelOptions& m) {
    return {"--hidden",    std::to_string(m.hidden), "--topic-factor-dim", std::to_string(m.topic_factor_dim),
            "--max-len",   std::to_string(m.max_len), "--attention",       m.attention,
            "--embedding", m.embedding,               "--topic-factor-shape", m.topic_factor_shape};
}

ojson config_json(const FaeGenConfig& c) {
    return {{"hidden_dim", c.hidden_dim},
            {"feature_dim", c.feature_dim},
            {"num_views", c.num_views},
            {"topic_factor_dim", c.topic_factor_dim},
            {"num_topics", c.num_topics},
            {"vocab_size", c.vocab_size},
            {"max_len", c.max_len},
            {"attention_mode", std::string(to_string(c.attention_mode))},
            {"embedding_mode", std::string(to_string(c.embedding_mode))},
            {"topic_factor_shape", std::string(to_string(c.topic_factor_shape))}};
}

struct TrainOptions {
    std::string train_data;
    std::string vocab;
    std::string out;
    ModelOptions model;
    TrainConfig train;
};

int cmd_train(const TrainOptions& o, std::ostream& out) {
    const Dataset data = load_dataset(o.train_data);
    if (data.empty()) {
        fail(kUsageError, "training set " + o.train_data + " is empty");
    }
    const Lexicon lexicon = load_lexicon(o.vocab);

    FaeGenConfig config;
    apply_model_options(o.model, config);
    config.feature_dim = data.front().observations.front().features.dim();
    config.num_views = data.front().observations.front().view_probs.dim();
    config.num_topics = lexicon.topics.size();
    config.vocab_size = lexicon.vocab.size();
    config.validate();

    std::vector<EncodedSample> encoded;
    for (const Sample& s : data) {
        encoded.push_back(encode_sample(s, lexicon));
    }
    ensure_directory(o.out);
    const fs::path dir(o.out);

    TrainResult result = train(encoded, config, o.train, [&](const EpochStats& s) {
        out << "epoch " << s.epoch << " mean token nll " << fmt_double(s.mean_token_nll) << "\n";
    });

    Checkpoint ckpt{config, std::move(result.params), lexicon, result.log.back().epoch,
                    result.log.back().mean_token_nll, o.train.seed};
    save_checkpoint((dir / "checkpoint.json").string(), ckpt);
    write_file_atomic((dir / "loss.log").string(), format_loss_log(result.log));

    const TrainConfig& t = o.train;
    ojson train_json = {{"epochs", t.epochs},        {"lr", t.learning_rate}, {"clip", t.clip_norm},
                        {"beta1", t.beta1},          {"beta2", t.beta2},      {"epsilon", t.epsilon},
                        {"log_interval", t.log_interval}};
    std::vector<std::string> argv = {"--train-data", o.train_data, "--vocab", o.vocab, "--out", o.out};
    for (const std::string& a : model_argv(o.model)) {
        argv.push_back(a);
    }
    for (const std::string& a :
         {std::string("--epochs"), std::to_string(t.epochs), std::string("--lr"), fmt_double(t.learning_rate),
          std::string("--clip"), fmt_double(t.clip_norm), std::string("--seed"), std::to_string(t.seed),
          std::string("--beta1"), fmt_double(t.beta1), std::string("--beta2"), fmt_double(t.beta2),
          std::string("--eps"), fmt_double(t.epsilon), std::string("--log-interval"), std::to_string(t.log_interval)}) {
        argv.push_back(a);
    }
    write_manifest(dir, "train", {{"model", config_json(config)}, {"train", train_json}}, {{"seed", t.seed}},
                   {{"train_data", o.train_data}, {"vocab", o.vocab}},
                   {{"checkpoint", "checkpoint.json"}, {"loss_log", "loss.log"}}, argv);
    out << "final mean token nll " << fmt_double(ckpt.final_loss) << ", checkpoint written to "
        << (dir / "checkpoint.json").string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct GradCheckOptions {
    ModelOptions model;
    std::size_t feature_dim = 6;
    std::size_t vocab = 20;
    std::size_t views = 3;
    std::size_t topics = 2;
    std::size_t observations = 3;
    std::size_t length = 5;
    std::uint64_t seed = 1;
    double fd_step = 1e-5;
    double threshold = 1e-4;
    std::size_t max_entries = 200;
    std::string out;
};

int cmd_gradcheck(const GradCheckOptions& o, std::ostream& out) {
    GradCheckConfig cfg;
    apply_model_options(o.model, cfg.model);
    cfg.model.feature_dim = o.feature_dim;
    cfg.model.vocab_size = o.vocab;
    cfg.model.num_views = o.views;
    cfg.model.num_topics = o.topics;
    cfg.model.max_len = std::max(o.model.max_len, o.length);
    cfg.num_observations = o.observations;
    cfg.seq_len = o.length;
    cfg.seed = o.seed;
    cfg.fd_step = o.fd_step;
    cfg.max_entries = o.max_entries;

    const GradCheckReport report = grad_check(cfg);
    char line[160];
    std::string table;
    std::snprintf(line, sizeof line, "%-20s %8s %14s\n", "group", "entries", "max rel error");
    table += line;
    for (const GradCheckGroup& g : report.groups) {
        std::snprintf(line, sizeof line, "%-20s %8zu %14.3e\n", g.name.c_str(), g.entries_checked, g.max_rel_error);
        table += line;
    }
    std::snprintf(line, sizeof line, "library vs extended-precision loss: %.3e relative\n", report.forward_rel_mismatch);
    table += line;
    out << table;

    if (!o.out.empty()) {
        const fs::path dir = parent_or_dot(o.out);
        ensure_directory(dir);
        write_file_atomic(o.out, table);
        std::vector<std::string> argv = {"--feature-dim", std::to_string(o.feature_dim), "--vocab",
                                         std::to_string(o.vocab), "--views", std::to_string(o.views), "--topics",
                                         std::to_string(o.topics), "--observations", std::to_string(o.observations),
                                         "--length", std::to_string(o.length), "--seed", std::to_string(o.seed),
                                         "--fd-step", fmt_double(o.fd_step), "--threshold", fmt_double(o.threshold),
                                         "--max-entries", std::to_string(o.max_entries), "--out", o.out};
        for (const std::string& a : model_argv(o.model)) {
            argv.push_back(a);
        }
        write_manifest(dir, "gradcheck",
                       {{"model", config_json(cfg.model)},
                        {"observations", o.observations},
                        {"length", o.length},
                        {"fd_step", o.fd_step},
                        {"threshold", o.threshold},
                        {"max_entries", o.max_entries}},
                       {{"seed", o.seed}}, ojson::object(), {{"report", fs::path(o.out).filename().string()}}, argv);
    }

    const std::vector<std::string> failing = report.failing(o.threshold);
    if (!failing.empty()) {
        std::string list;
        for (const std::string& f : failing) {
            list += (list.empty() ? "" : ", ") + f;
        }
        fail(kCheckFailed, "gradient check failed (threshold " + fmt_double(o.threshold) + ") for: " + list);
    }
    out << "gradient check passed: max relative error " << fmt_double(report.max_rel_error()) << " < "
        << fmt_double(o.threshold) << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct GenerateOptions {
    std::string checkpoint;
    std::string data;
    std::string vocab;
    std::string out;
    std::string mode = "greedy";
    DecodeConfig decode;
};

int cmd_generate(const GenerateOptions& o, std::ostream& out) {
    DecodeConfig decode = o.decode;
    decode.mode = parse_decode_mode(o.mode);
    decode.validate();

    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    if (!o.vocab.empty()) {
        const Lexicon lex = load_lexicon(o.vocab);
        if (lex.vocab.size() != ckpt.config.vocab_size) {
            fail(kUsageError, "vocabulary " + o.vocab + " has " + std::to_string(lex.vocab.size()) +
                                  " tokens, checkpoint expects " + std::to_string(ckpt.config.vocab_size));
        }
        if (lex.topics != ckpt.lexicon.topics) {
            fail(kUsageError, "topic inventory of " + o.vocab + " differs from the checkpoint's");
        }
    }
    Dataset data = load_dataset(o.data);
    for (const Sample& s : data) {
        for (const ViewObservation& obs : s.observations) {
            if (obs.features.dim() != ckpt.config.feature_dim || obs.view_probs.dim() != ckpt.config.num_views) {
                fail(kUsageError, "sample " + s.id + " has feature/view dimensions " +
                                      std::to_string(obs.features.dim()) + "/" + std::to_string(obs.view_probs.dim()) +
                                      ", checkpoint expects " + std::to_string(ckpt.config.feature_dim) + "/" +
                                      std::to_string(ckpt.config.num_views));
            }
        }
    }
    std::sort(data.begin(), data.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });

    SeededRng rng(decode.seed);
    std::vector<HypothesisRecord> records;
    for (const Sample& s : data) {
        for (std::size_t k = 0; k < ckpt.lexicon.topics.size(); ++k) {
            const Hypothesis hyp = generate(ckpt.params, ckpt.config, s.observations, k, decode, rng);
            records.push_back({s.id, ckpt.lexicon.topics[k], join_tokens(ckpt.lexicon.vocab.decode(hyp.tokens)),
                               hyp.score});
        }
    }
    const fs::path dir = parent_or_dot(o.out);
    ensure_directory(dir);
    write_file_atomic(o.out, hypotheses_to_jsonl(records));

    std::vector<std::string> argv = {"--checkpoint", o.checkpoint, "--data", o.data, "--out", o.out,
                                     "--mode", o.mode, "--beam", std::to_string(decode.beam_width), "--max-len",
                                     std::to_string(decode.max_len), "--temperature", fmt_double(decode.temperature),
                                     "--seed", std::to_string(decode.seed)};
    if (!o.vocab.empty()) {
        argv.insert(argv.end(), {"--vocab", o.vocab});
    }
    if (!decode.length_normalize) {
        argv.push_back("--no-length-norm");
    }
    write_manifest(dir, "generate",
                   {{"mode", o.mode},
                    {"beam", decode.beam_width},
                    {"max_len", decode.max_len},
                    {"temperature", decode.temperature},
                    {"length_normalize", decode.length_normalize}},
                   {{"seed", decode.seed}}, {{"checkpoint", o.checkpoint}, {"data", o.data}, {"vocab", o.vocab}},
                   {{"hypotheses", fs::path(o.out).filename().string()}}, argv);
    out << "wrote " << records.size() << " hypotheses to " << o.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
    std::string hyps;
    std::string refs;
    std::string out;
    bool per_topic = false;
    std::vector<std::string> topics;
    bool cider_d = false;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
    const std::vector<HypothesisRecord> hyps = hypotheses_from_jsonl(read_file(o.hyps));
    if (hyps.empty()) {
        fail(kUsageError, "hypothesis file " + o.hyps + " is empty");
    }
    const Dataset refs = load_dataset(o.refs);
    MetricOptions options;
    options.cider.d_variant = o.cider_d;
    const ScoreReport report = evaluate(hyps, refs, o.topics, o.per_topic, options);

    out << format_table_header() << format_table_row("all", report.overall);
    for (const auto& [topic, scores] : report.per_topic) {
        out << format_table_row(topic, scores);
    }
    if (!o.out.empty()) {
        const fs::path dir = parent_or_dot(o.out);
        ensure_directory(dir);
        write_file_atomic(o.out, score_report_to_json(report));
        std::vector<std::string> argv = {"--hyps", o.hyps, "--refs", o.refs, "--out", o.out};
        if (o.per_topic) {
            argv.push_back("--per-topic");
        }
        if (o.cider_d) {
            argv.push_back("--cider-d");
        }
        for (const std::string& t : o.topics) {
            argv.insert(argv.end(), {"--topics", t});
        }
        write_manifest(dir, "eval", {{"per_topic", o.per_topic}, {"topics", o.topics}, {"cider_d", o.cider_d}},
                       ojson::object(), {{"hypotheses", o.hyps}, {"references", o.refs}},
                       {{"report", fs::path(o.out).filename().string()}}, argv);
    }
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"faegen: multi-view, topic-conditioned report generation"};
    app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags override it");
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    SynthOptions synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus and its vocabulary");
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->add_option("--train", synth.cfg.num_train, "Training samples")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--test", synth.cfg.num_test, "Test samples")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.cfg.seed, "Random seed");
    synth_cmd->add_option("--topics", synth.cfg.num_topics, "Number of report topics")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--views", synth.cfg.num_views, "Number of view classes")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--feature-dim", synth.cfg.feature_dim, "Per-image feature size")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--noise", synth.cfg.feature_noise, "Feature noise stddev")->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--confidence", synth.cfg.view_confidence, "View-classifier confidence")
        ->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--missing", synth.cfg.missing_prob, "Per-view missing probability")
        ->check(CLI::Range(0.0, 1.0));
    synth_cmd->add_option("--repeat", synth.cfg.repeat_prob, "Repeat probability per missing slot")
        ->check(CLI::Range(0.0, 1.0));
    synth_cmd->add_option("--min-count", synth.min_count, "Vocabulary frequency threshold");

    TrainOptions train_opts;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--train-data", train_opts.train_data, "Training JSONL")->required();
    train_cmd->add_option("--vocab", train_opts.vocab, "Vocabulary file")->required();
    train_cmd->add_option("--out", train_opts.out, "Output directory")->required();
    add_model_options(train_cmd, train_opts.model);
    train_cmd->add_option("--epochs", train_opts.train.epochs, "Training epochs")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", train_opts.train.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--clip", train_opts.train.clip_norm, "Global gradient-norm clip")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", train_opts.train.seed, "Random seed");
    train_cmd->add_option("--beta1", train_opts.train.beta1, "First-moment decay");
    train_cmd->add_option("--beta2", train_opts.train.beta2, "Second-moment decay");
    train_cmd->add_option("--eps", train_opts.train.epsilon, "Optimizer epsilon");
    train_cmd->add_option("--log-interval", train_opts.train.log_interval, "Epochs between progress lines")
        ->check(CLI::PositiveNumber);

    GradCheckOptions gc;
    gc.model.hidden = 8;
    gc.model.topic_factor_dim = 4;
    gc.model.max_len = 5;
    CLI::App* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    add_model_options(gc_cmd, gc.model);
    gc_cmd->add_option("--feature-dim", gc.feature_dim, "Per-image feature size")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--vocab", gc.vocab, "Vocabulary size")->check(CLI::Range(5, 1 << 20));
    gc_cmd->add_option("--views", gc.views, "Number of view classes")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--topics", gc.topics, "Number of report topics")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--observations", gc.observations, "Images in the probe sample")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--length", gc.length, "Tokens per topic, <eos> included")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--seed", gc.seed, "Seed for parameters and the probe sample");
    gc_cmd->add_option("--fd-step", gc.fd_step, "Central-difference step")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--threshold", gc.threshold, "Maximum allowed relative error")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--max-entries", gc.max_entries, "Entries probed per group")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--out", gc.out, "Write the report table here");

    GenerateOptions gen;
    CLI::App* gen_cmd = app.add_subcommand("generate", "Generate descriptions for every sample and topic");
    gen_cmd->add_option("--checkpoint", gen.checkpoint, "Checkpoint written by train")->required();
    gen_cmd->add_option("--data", gen.data, "Samples to describe (JSONL)")->required();
    gen_cmd->add_option("--vocab", gen.vocab, "Vocabulary file to validate against the checkpoint");
    gen_cmd->add_option("--out", gen.out, "Hypothesis JSONL")->required();
    gen_cmd->add_option("--mode", gen.mode, "greedy | beam | sample")
        ->check(CLI::IsMember({"greedy", "beam", "sample"}));
    gen_cmd->add_option("--beam", gen.decode.beam_width, "Beam width")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--max-len", gen.decode.max_len, "Maximum tokens per description")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--temperature", gen.decode.temperature, "Softmax temperature for sample mode")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--seed", gen.decode.seed, "Seed for sample mode");
    bool no_length_norm = false;
    gen_cmd->add_flag("--no-length-norm", no_length_norm, "Rank beams by raw log-probability");

    EvalOptions ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Score hypotheses against references");
    eval_cmd->add_option("--hyps", ev.hyps, "Hypothesis JSONL from generate")->required();
    eval_cmd->add_option("--refs", ev.refs, "Reference dataset (JSONL)")->required();
    eval_cmd->add_option("--out", ev.out, "Write the full score report here");
    eval_cmd->add_flag("--per-topic", ev.per_topic, "Add one sub-report per topic");
    eval_cmd->add_option("--topics", ev.topics, "Restrict to these topics");
    eval_cmd->add_flag("--cider-d", ev.cider_d, "Use CIDEr-D instead of plain CIDEr");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*synth_cmd) {
            return cmd_synth(synth, out);
        }
        if (*train_cmd) {
            return cmd_train(train_opts, out);
        }
        if (*gc_cmd) {
            return cmd_gradcheck(gc, out);
        }
        if (*gen_cmd) {
            gen.decode.length_normalize = !no_length_norm;
            return cmd_generate(gen, out);
        }
        if (*eval_cmd) {
            return cmd_eval(ev, out);
        }
    } catch (const ExitRequest& e) {
        err << "faegen: " << e.message << "\n";
        return e.code;
    } catch (const NumericalError& e) {
        err << "faegen: numerical abort: " << e.what() << "\n";
        return kNumericalAbort;
    } catch (const std::exception& e) {
        err << "faegen: " << e.what() << "\n";
        return kUsageError;
    }
    return kUsageError;
}

} // namespace faegen::cli
