#include "faegen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "faegen/errors.hpp"
#include "faegen/rng.hpp"

namespace faegen {

void TrainConfig::validate() const {
    // A zero learning rate is accepted so that a run can be replayed without
    // moving the parameters.
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InputError("TrainConfig: learning rate must be finite and non-negative");
    }
    if (epochs < 1) {
        throw InputError("TrainConfig: epochs must be >= 1");
    }
    if (!(clip_norm > 0.0)) {
        throw InputError("TrainConfig: clip norm must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
        throw InputError("TrainConfig: invalid optimizer hyperparameters");
    }
}

AdamOptimizer::AdamOptimizer(const FaeGenConfig& config, const TrainConfig& train)
    : train_(train), m_(FaeGenParams::zeros(config)), v_(FaeGenParams::zeros(config)) {}

void AdamOptimizer::step(FaeGenParams& params, const FaeGenParams& grads) {
    ++steps_;
    const double b1 = train_.beta1;
    const double b2 = train_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    const double lr = train_.learning_rate;

    auto p = named_tensors(params);
    const auto g = named_tensors(grads);
    auto m = named_tensors(m_);
    auto v = named_tensors(v_);
    for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::size_t i = 0; i < p[t].values.size(); ++i) {
            const double gi = g[t].values[i];
            double& mi = m[t].values[i];
            double& vi = v[t].values[i];
            mi = b1 * mi + (1.0 - b1) * gi;
            vi = b2 * vi + (1.0 - b2) * gi * gi;
            if (mi == 0.0) {
                continue;
            }
            p[t].values[i] -= lr * (mi / correction1) / (std::sqrt(vi / correction2) + train_.epsilon);
        }
    }
}

double global_norm(const FaeGenParams& grads) {
    double total = 0.0;
    for (const ConstTensorRef& t : named_tensors(grads)) {
        for (double x : t.values) {
            total += x * x;
        }
    }
    return std::sqrt(total);
}

double clip_global_norm(FaeGenParams& grads, double max_norm) {
    const double norm = global_norm(grads);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (TensorRef& t : named_tensors(grads)) {
            for (double& x : t.values) {
                x *= scale;
            }
        }
    }
    return norm;
}

TrainResult train(std::span<const EncodedSample> train_set, const FaeGenConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch) {
    model_config.validate();
    return train_from(init_params(model_config, train_config.seed), train_set, model_config, train_config, on_epoch);
}

TrainResult train_from(FaeGenParams params, std::span<const EncodedSample> train_set,
                       const FaeGenConfig& model_config, const TrainConfig& train_config,
                       const EpochCallback& on_epoch) {
    train_config.validate();
    if (train_set.empty()) {
        throw InputError("train: empty training set");
    }
    TrainResult result;
    AdamOptimizer optimizer(model_config, train_config);
    FaeGenParams grads = FaeGenParams::zeros(model_config);
    SeededRng shuffle_rng(derive_seed(train_config.seed, 2));

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.index(i)]);
        }
        double total_loss = 0.0;
        std::size_t total_tokens = 0;
        for (std::size_t idx : order) {
            const EncodedSample& sample = train_set[idx];
            grads.set_zero();
            SampleLoss sl = sample_loss_all_topics(params, model_config, sample);
            if (!std::isfinite(sl.loss)) {
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " + sample.id);
            }
            for (const ForwardTrace& trace : sl.traces) {
                backward(params, model_config, trace, grads);
            }
            const double norm = clip_global_norm(grads, train_config.clip_norm);
            if (!std::isfinite(norm)) {
                throw NumericalError("non-finite gradient at epoch " + std::to_string(epoch) + ", sample " +
                                     sample.id);
            }
            optimizer.step(params, grads);
            total_loss += sl.loss;
            total_tokens += sl.num_tokens;
        }
        EpochStats stats{epoch, total_loss / static_cast<double>(std::max<std::size_t>(total_tokens, 1))};
        result.log.push_back(stats);
        if (on_epoch && (epoch % std::max<std::size_t>(train_config.log_interval, 1) == 0 ||
                         epoch == train_config.epochs)) {
            on_epoch(stats);
        }
    }
    result.params = std::move(params);
    return result;
}

double mean_token_nll(const FaeGenParams& params, const FaeGenConfig& config, std::span<const EncodedSample> data) {
    double loss = 0.0;
    std::size_t tokens = 0;
    for (const EncodedSample& s : data) {
        const SampleLoss sl = sample_loss_all_topics(params, config, s);
        loss += sl.loss;
        tokens += sl.num_tokens;
    }
    return tokens ? loss / static_cast<double>(tokens) : 0.0;
}

std::string format_loss_log(std::span<const EpochStats> log) {
    std::string out;
    char line[64];
    for (const EpochStats& s : log) {
        std::snprintf(line, sizeof line, "%zu, %.17g\n", s.epoch, s.mean_token_nll);
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------

GradCheckConfig tiny_grad_check_config() {
    GradCheckConfig cfg;
    cfg.model.hidden_dim = 8;
    cfg.model.feature_dim = 6;
    cfg.model.vocab_size = 20;
    cfg.model.num_views = 3;
    cfg.model.topic_factor_dim = 4;
    cfg.model.num_topics = 2;
    cfg.model.max_len = 5;
    cfg.num_observations = 3;
    cfg.seq_len = 5;
    cfg.seed = 1;
    return cfg;
}

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const GradCheckGroup& g : groups) {
        m = std::max(m, g.max_rel_error);
    }
    return m;
}

std::vector<std::string> GradCheckReport::failing(double threshold) const {
    std::vector<std::string> out;
    if (!(forward_rel_mismatch < kForwardAgreement)) {
        out.push_back("forward");
    }
    for (const GradCheckGroup& g : groups) {
        if (!(g.max_rel_error < threshold)) {
            out.push_back(g.name);
        }
    }
    return out;
}

EncodedSample random_sample(const FaeGenConfig& config, std::size_t num_observations, std::size_t seq_len,
                            std::uint64_t seed) {
    if (num_observations < 1 || seq_len < 1) {
        throw InputError("random_sample: need at least one observation and one token");
    }
    SeededRng rng(derive_seed(seed, 5));
    EncodedSample s;
    s.id = "random-" + std::to_string(seed);
    for (std::size_t j = 0; j < num_observations; ++j) {
        ViewObservation obs;
        obs.view_probs = softmax(draw_gaussian(rng, 0.0, 1.0, config.num_views));
        obs.features = draw_gaussian(rng, 0.0, 1.0, config.feature_dim);
        s.observations.push_back(std::move(obs));
    }
    for (std::size_t k = 0; k < config.num_topics; ++k) {
        TopicTarget target{k, {}};
        for (std::size_t t = 0; t + 1 < seq_len; ++t) {
            const std::size_t content = config.vocab_size - kNumReserved;
            target.tokens.push_back(content == 0 ? kUnk : kNumReserved + rng.index(content));
        }
        target.tokens.push_back(kEos);
        s.targets.push_back(std::move(target));
    }
    return s;
}

GradCheckReport grad_check(const GradCheckConfig& cfg) {
    cfg.model.validate();
    const FaeGenParams params = init_params(cfg.model, cfg.seed);
    const EncodedSample sample = random_sample(cfg.model, cfg.num_observations, cfg.seq_len, cfg.seed);
    return grad_check(params, cfg.model, sample, cfg.fd_step, cfg.max_entries, cfg.seed);
}

GradCheckReport grad_check(const FaeGenParams& params, const FaeGenConfig& config, const EncodedSample& sample,
                           double fd_step, std::size_t max_entries, std::uint64_t seed) {
    FaeGenParams analytic = FaeGenParams::zeros(config);
    const SampleLoss loss = sample_loss_all_topics(params, config, sample);
    for (const ForwardTrace& trace : loss.traces) {
        backward(params, config, trace, analytic);
    }

    FaeGenParams probe = params;
    auto probe_tensors = named_tensors(probe);
    const auto analytic_tensors = named_tensors(std::as_const(analytic));
    SeededRng pick_rng(derive_seed(seed, 3));

    GradCheckReport report;
    const long double reference = extended_precision_loss(params, config, sample);
    report.forward_rel_mismatch =
        static_cast<double>(std::abs(static_cast<long double>(loss.loss) - reference) / std::abs(reference));
    for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
        TensorRef& tensor = probe_tensors[t];
        // Off-diagonal entries of a diagonal topic factor are not parameters.
        const bool diagonal_only = config.topic_factor_shape == FactorShape::diagonal &&
                                   tensor.name.find(".Sigma.") != std::string::npos;
        std::vector<std::size_t> entries;
        for (std::size_t i = 0; i < tensor.values.size(); ++i) {
            if (!diagonal_only || i / tensor.cols == i % tensor.cols) {
                entries.push_back(i);
            }
        }
        if (entries.size() > max_entries) {
            for (std::size_t i = 0; i < max_entries; ++i) {
                std::swap(entries[i], entries[i + pick_rng.index(entries.size() - i)]);
            }
            entries.resize(max_entries);
            std::sort(entries.begin(), entries.end());
        }

        GradCheckGroup group{tensor.name, entries.size(), 0.0};
        for (std::size_t i : entries) {
            double& x = tensor.values[i];
            const double saved = x;
            x = saved + fd_step;
            const long double plus = extended_precision_loss(probe, config, sample);
            x = saved - fd_step;
            const long double minus = extended_precision_loss(probe, config, sample);
            x = saved;
            const double fd = static_cast<double>((plus - minus) / (2.0L * fd_step));
            const double a = analytic_tensors[t].values[i];
            const double rel = std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd));
            group.max_rel_error = std::max(group.max_rel_error, rel);
        }
        report.groups.push_back(std::move(group));
    }
    return report;
}

} // namespace faegen
