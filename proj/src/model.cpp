#include "faegen/model.hpp"

#include <cmath>

#include "faegen/errors.hpp"
#include "faegen/rng.hpp"

namespace faegen {

std::string_view to_string(AttentionMode m) {
    switch (m) {
    case AttentionMode::factored:
        return "factored";
    case AttentionMode::plain:
        return "plain";
    case AttentionMode::mean_pool:
        return "mean_pool";
    }
    return "factored";
}

std::string_view to_string(EmbeddingMode m) { return m == EmbeddingMode::factored ? "factored" : "shared"; }

std::string_view to_string(FactorShape s) { return s == FactorShape::full ? "full" : "diagonal"; }

AttentionMode parse_attention_mode(std::string_view s) {
    if (s == "factored") {
        return AttentionMode::factored;
    }
    if (s == "plain") {
        return AttentionMode::plain;
    }
    if (s == "mean_pool") {
        return AttentionMode::mean_pool;
    }
    throw InputError("unknown attention mode '" + std::string(s) + "'");
}

EmbeddingMode parse_embedding_mode(std::string_view s) {
    if (s == "factored") {
        return EmbeddingMode::factored;
    }
    if (s == "shared") {
        return EmbeddingMode::shared;
    }
    throw InputError("unknown embedding mode '" + std::string(s) + "'");
}

FactorShape parse_factor_shape(std::string_view s) {
    if (s == "full") {
        return FactorShape::full;
    }
    if (s == "diagonal") {
        return FactorShape::diagonal;
    }
    throw InputError("unknown factor shape '" + std::string(s) + "'");
}

void FaeGenConfig::validate() const {
    if (hidden_dim < 1 || feature_dim < 1 || num_views < 1 || topic_factor_dim < 1 || num_topics < 1 ||
        max_len < 1) {
        throw InputError("FaeGenConfig: all dimensions must be >= 1");
    }
    if (vocab_size < kNumReserved) {
        throw InputError("FaeGenConfig: vocab_size must cover the " + std::to_string(kNumReserved) +
                         " reserved tokens");
    }
}

// ---------------------------------------------------------------------------

namespace {

DirectionParams direction_zeros(const FaeGenConfig& c) {
    DirectionParams d;
    d.a = Matrix(c.hidden_dim, c.topic_factor_dim);
    d.b = Matrix(c.topic_factor_dim, c.vocab_size);
    d.sigma.assign(c.num_topics, Matrix(c.topic_factor_dim, c.topic_factor_dim));
    d.ws = Matrix(c.hidden_dim, c.hidden_dim);
    d.lstm = LstmCellParams(2 * c.hidden_dim, c.hidden_dim);
    return d;
}

template <class Params, class Fn>
void visit_tensors(Params& p, Fn&& fn) {
    auto mat = [&](const std::string& name, auto& m) { fn(name, m.rows(), m.cols(), m.span()); };
    auto vec = [&](const std::string& name, auto& v) { fn(name, v.dim(), std::size_t{1}, v.span()); };
    mat("U", p.u);
    mat("V", p.v);
    mat("W_plain", p.w_plain);
    mat("Wa", p.wa);
    mat("Wv", p.wv);
    mat("Wz", p.wz);
    for (auto* dir : {&p.fwd, &p.bwd}) {
        const std::string prefix = dir == &p.fwd ? "fwd." : "bwd.";
        mat(prefix + "A", dir->a);
        mat(prefix + "B", dir->b);
        for (std::size_t k = 0; k < dir->sigma.size(); ++k) {
            mat(prefix + "Sigma." + std::to_string(k), dir->sigma[k]);
        }
        mat(prefix + "Ws", dir->ws);
        mat(prefix + "lstm.W_i", dir->lstm.w_i);
        mat(prefix + "lstm.W_f", dir->lstm.w_f);
        mat(prefix + "lstm.W_o", dir->lstm.w_o);
        mat(prefix + "lstm.W_g", dir->lstm.w_g);
        vec(prefix + "lstm.b_i", dir->lstm.b_i);
        vec(prefix + "lstm.b_f", dir->lstm.b_f);
        vec(prefix + "lstm.b_o", dir->lstm.b_o);
        vec(prefix + "lstm.b_g", dir->lstm.b_g);
    }
    mat("Wg", p.wg);
    vec("bg", p.bg);
    mat("Wo", p.wo);
    vec("bo", p.bo);
}

bool is_topic_factor(const std::string& name) { return name.find(".Sigma.") != std::string::npos; }

void require_views_on_simplex(std::span<const ViewObservation> observations, const FaeGenConfig& c) {
    if (observations.empty()) {
        throw InputError("encode_views: empty observation list");
    }
    for (std::size_t j = 0; j < observations.size(); ++j) {
        const ViewObservation& obs = observations[j];
        if (obs.view_probs.dim() != c.num_views || obs.features.dim() != c.feature_dim) {
            throw InputError("encode_views: observation " + std::to_string(j) + " has view dim " +
                             std::to_string(obs.view_probs.dim()) + " / feature dim " +
                             std::to_string(obs.features.dim()) + ", expected " + std::to_string(c.num_views) +
                             " / " + std::to_string(c.feature_dim));
        }
        double total = 0.0;
        for (double p : obs.view_probs) {
            if (p < -1e-6) {
                throw InputError("encode_views: negative view probability in observation " + std::to_string(j));
            }
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw InputError("encode_views: view probabilities of observation " + std::to_string(j) +
                             " sum to " + std::to_string(total));
        }
    }
}

const Matrix& topic_factor(const DirectionParams& d, const FaeGenConfig& c, std::size_t topic,
                           const Matrix& identity) {
    return c.embedding_mode == EmbeddingMode::factored ? d.sigma[topic] : identity;
}

} // namespace

FaeGenParams FaeGenParams::zeros(const FaeGenConfig& c) {
    c.validate();
    FaeGenParams p;
    p.u = Matrix(c.hidden_dim, c.num_views);
    p.v = Matrix(c.num_views, c.feature_dim);
    p.w_plain = Matrix(c.hidden_dim, c.feature_dim);
    p.wa = Matrix(1, c.hidden_dim);
    p.wv = Matrix(c.hidden_dim, c.hidden_dim);
    p.wz = Matrix(c.hidden_dim, c.hidden_dim);
    p.fwd = direction_zeros(c);
    p.bwd = direction_zeros(c);
    p.wg = Matrix(c.hidden_dim, 2 * c.hidden_dim);
    p.bg = Vector(c.hidden_dim);
    p.wo = Matrix(c.vocab_size, c.hidden_dim);
    p.bo = Vector(c.vocab_size);
    return p;
}

void FaeGenParams::set_zero() {
    for (TensorRef& t : named_tensors(*this)) {
        std::fill(t.values.begin(), t.values.end(), 0.0);
    }
}

std::vector<TensorRef> named_tensors(FaeGenParams& params) {
    std::vector<TensorRef> out;
    visit_tensors(params, [&](const std::string& name, std::size_t r, std::size_t c, std::span<double> values) {
        out.push_back({name, r, c, values});
    });
    return out;
}

std::vector<ConstTensorRef> named_tensors(const FaeGenParams& params) {
    std::vector<ConstTensorRef> out;
    visit_tensors(params, [&](const std::string& name, std::size_t r, std::size_t c, std::span<const double> values) {
        out.push_back({name, r, c, values});
    });
    return out;
}

FaeGenParams init_params(const FaeGenConfig& config, std::uint64_t seed, double scale) {
    FaeGenParams p = FaeGenParams::zeros(config);
    SeededRng rng(seed);
    for (TensorRef& t : named_tensors(p)) {
        if (is_topic_factor(t.name)) {
            for (std::size_t r = 0; r < t.rows; ++r) {
                for (std::size_t c = 0; c < t.cols; ++c) {
                    if (config.topic_factor_shape == FactorShape::diagonal && r != c) {
                        continue;
                    }
                    t.values[r * t.cols + c] = (r == c ? 1.0 : 0.0) + 0.01 * rng.gaussian(0.0, 1.0);
                }
            }
        } else {
            for (double& x : t.values) {
                x = rng.uniform(-scale, scale);
            }
        }
    }
    return p;
}

// ---------------------------------------------------------------------------

EncodedViews encode_views(const FaeGenParams& params, const FaeGenConfig& config,
                          std::span<const ViewObservation> observations) {
    require_views_on_simplex(observations, config);
    EncodedViews e;
    switch (config.attention_mode) {
    case AttentionMode::factored:
        for (const ViewObservation& obs : observations) {
            e.view_sigmas.push_back(diag(obs.view_probs));
            FactoredLinearResult r = factored_linear_forward(params.u, e.view_sigmas.back(), params.v, obs.features);
            e.views.push_back(std::move(r.out));
            e.factored.push_back(std::move(r.cache));
        }
        break;
    case AttentionMode::plain:
        for (const ViewObservation& obs : observations) {
            e.inputs.push_back(obs.features);
            e.views.push_back(matvec(params.w_plain, obs.features.span()));
        }
        break;
    case AttentionMode::mean_pool: {
        Vector mean(config.feature_dim);
        for (const ViewObservation& obs : observations) {
            e.inputs.push_back(obs.features);
            axpy(1.0 / static_cast<double>(observations.size()), obs.features.span(), mean.span());
        }
        e.views.push_back(matvec(params.w_plain, mean.span()));
        break;
    }
    }
    return e;
}

void encode_views_backward(const FaeGenParams& params, const FaeGenConfig& config, const EncodedViews& encoded,
                           std::span<const Vector> d_views, FaeGenParams& grads) {
    if (d_views.size() != encoded.views.size()) {
        throw ShapeError("encode_views_backward: gradient count mismatch");
    }
    switch (config.attention_mode) {
    case AttentionMode::factored:
        for (std::size_t j = 0; j < d_views.size(); ++j) {
            // diag(y) is an input, its gradient is not needed.
            factored_linear_backward(params.u, encoded.view_sigmas[j], params.v, encoded.factored[j], d_views[j],
                                     &grads.u, nullptr, &grads.v, nullptr);
        }
        break;
    case AttentionMode::plain:
        for (std::size_t j = 0; j < d_views.size(); ++j) {
            add_outer(grads.w_plain, d_views[j].span(), encoded.inputs[j].span());
        }
        break;
    case AttentionMode::mean_pool: {
        const double w = 1.0 / static_cast<double>(encoded.inputs.size());
        for (const Vector& input : encoded.inputs) {
            add_outer(grads.w_plain, d_views[0].span(), input.span(), w);
        }
        break;
    }
    }
}

DecoderState DecoderState::initial(const FaeGenConfig& config) {
    const std::size_t h = config.hidden_dim;
    return {Vector(h), Vector(h), Vector(h), Vector(h), Vector(h)};
}

StepOutput decode_step(const FaeGenParams& params, const FaeGenConfig& config, std::size_t topic,
                       std::size_t prev_token, const DecoderState& state, const EncodedViews& encoded) {
    if (topic >= config.num_topics) {
        throw InputError("decode_step: topic " + std::to_string(topic) + " out of range (K = " +
                         std::to_string(config.num_topics) + ")");
    }
    if (prev_token >= config.vocab_size) {
        throw InputError("decode_step: token " + std::to_string(prev_token) + " out of range (vocab " +
                         std::to_string(config.vocab_size) + ")");
    }
    StepOutput out;
    StepCache& cache = out.cache;
    cache.prev_token = prev_token;

    AttentionResult attn = attention_forward(params.wa, params.wv, params.wz, encoded.views, state.h_s);
    cache.attention = std::move(attn.cache);
    cache.h_a = std::move(attn.h_a);

    const Vector x = one_hot(config.vocab_size, prev_token);
    const Matrix identity = Matrix::identity(config.topic_factor_dim);
    auto run_direction = [&](const DirectionParams& d, const Vector& h_prev, const Vector& c_prev,
                             FactoredLinearCache& embed_cache, LstmCache& lstm_cache, Vector& h, Vector& c) {
        FactoredLinearResult emb = factored_linear_forward(d.a, topic_factor(d, config, topic, identity), d.b, x);
        embed_cache = std::move(emb.cache);
        const Vector input = concat(emb.out, matvec(d.ws, cache.h_a.span()));
        LstmStep step = lstm_cell_forward(d.lstm, input, h_prev, c_prev);
        lstm_cache = std::move(step.cache);
        h = std::move(step.h);
        c = std::move(step.c);
    };
    run_direction(params.fwd, state.h_fwd, state.c_fwd, cache.embed_fwd, cache.lstm_fwd, out.state.h_fwd,
                  out.state.c_fwd);
    run_direction(params.bwd, state.h_bwd, state.c_bwd, cache.embed_bwd, cache.lstm_bwd, out.state.h_bwd,
                  out.state.c_bwd);

    OutputHeadResult head =
        combine_output_forward(params.wg, params.bg, params.wo, params.bo, out.state.h_fwd, out.state.h_bwd);
    cache.head = std::move(head.cache);
    out.state.h_s = std::move(head.h_s);
    out.logits = std::move(head.logits);
    out.probs = softmax(out.logits);
    return out;
}

ForwardResult forward_nll(const FaeGenParams& params, const FaeGenConfig& config,
                          std::span<const ViewObservation> observations, std::size_t topic,
                          std::span<const std::size_t> tokens) {
    if (tokens.size() > config.max_len) {
        throw InputError("forward_nll: sequence length " + std::to_string(tokens.size()) + " exceeds max_len " +
                         std::to_string(config.max_len));
    }
    for (std::size_t tok : tokens) {
        if (tok >= config.vocab_size) {
            throw InputError("forward_nll: unknown token index " + std::to_string(tok));
        }
    }
    ForwardResult r;
    ForwardTrace& trace = r.trace;
    trace.topic = topic;
    trace.tokens.assign(tokens.begin(), tokens.end());
    trace.encoded = encode_views(params, config, observations);

    DecoderState state = DecoderState::initial(config);
    std::size_t prev = kBos;
    for (std::size_t target : tokens) {
        StepOutput step = decode_step(params, config, topic, prev, state, trace.encoded);
        const NllResult nll = nll_loss(step.logits, target);
        trace.step_losses.push_back(nll.loss);
        trace.probs.push_back(std::move(step.probs));
        trace.steps.push_back(std::move(step.cache));
        state = std::move(step.state);
        prev = target;
    }
    r.loss = compensated_sum(trace.step_losses);
    return r;
}

void backward(const FaeGenParams& params, const FaeGenConfig& config, const ForwardTrace& trace,
              FaeGenParams& grads, double scale) {
    const std::size_t h = config.hidden_dim;
    const Matrix identity = Matrix::identity(config.topic_factor_dim);
    const std::span<const Vector> views = trace.encoded.views;

    AttentionGrads attn_grads = attention_grads_like(params.wa, params.wv, params.wz, views, Vector(h));
    Vector carry_hs(h);
    Vector carry_h[2] = {Vector(h), Vector(h)};
    Vector carry_c[2] = {Vector(h), Vector(h)};
    const DirectionParams* dirs[2] = {&params.fwd, &params.bwd};
    DirectionParams* dir_grads[2] = {&grads.fwd, &grads.bwd};

    for (std::size_t t = trace.steps.size(); t-- > 0;) {
        const StepCache& step = trace.steps[t];

        Vector d_logits = trace.probs[t];
        d_logits[trace.tokens[t]] -= 1.0;
        for (double& x : d_logits) {
            x *= scale;
        }

        Vector d_h[2] = {carry_h[0], carry_h[1]};
        combine_output_backward(params.wg, params.wo, step.head, carry_hs, d_logits, grads.wg, grads.bg, grads.wo,
                                grads.bo, d_h[0], d_h[1]);

        Vector d_h_a(h);
        for (int d = 0; d < 2; ++d) {
            const DirectionParams& p = *dirs[d];
            DirectionParams& g = *dir_grads[d];
            const LstmCache& lstm_cache = d == 0 ? step.lstm_fwd : step.lstm_bwd;
            const FactoredLinearCache& embed_cache = d == 0 ? step.embed_fwd : step.embed_bwd;

            Vector d_input(2 * h), d_h_prev(h), d_c_prev(h);
            lstm_cell_backward(p.lstm, lstm_cache, d_h[d], carry_c[d], g.lstm, d_input, d_h_prev, d_c_prev);
            carry_h[d] = std::move(d_h_prev);
            carry_c[d] = std::move(d_c_prev);

            const std::span<const double> d_ctx = d_input.span().subspan(h, h);
            add_outer(g.ws, d_ctx, step.h_a.span());
            matvec_transposed_accumulate(p.ws, d_ctx, d_h_a.span());

            const Vector d_embed(std::vector<double>(d_input.begin(), d_input.begin() + static_cast<std::ptrdiff_t>(h)));
            Matrix* d_sigma =
                config.embedding_mode == EmbeddingMode::factored ? &g.sigma[trace.topic] : nullptr;
            factored_linear_backward(p.a, topic_factor(p, config, trace.topic, identity), p.b, embed_cache, d_embed,
                                     &g.a, d_sigma, &g.b, nullptr, config.topic_factor_shape);
        }

        attn_grads.d_h_prev.set_zero();
        attention_backward(params.wa, params.wv, params.wz, views, step.attention, Vector(), d_h_a, attn_grads);
        carry_hs = attn_grads.d_h_prev;
    }

    axpy(1.0, attn_grads.d_wa.span(), grads.wa.span());
    axpy(1.0, attn_grads.d_wv.span(), grads.wv.span());
    axpy(1.0, attn_grads.d_wz.span(), grads.wz.span());
    encode_views_backward(params, config, trace.encoded, attn_grads.d_views, grads);
}

FaeGenParams backward(const FaeGenParams& params, const FaeGenConfig& config, const ForwardTrace& trace) {
    FaeGenParams grads = FaeGenParams::zeros(config);
    backward(params, config, trace, grads);
    return grads;
}

SampleLoss sample_loss_all_topics(const FaeGenParams& params, const FaeGenConfig& config,
                                  const EncodedSample& sample) {
    if (sample.targets.empty()) {
        throw InputError("sample " + sample.id + " carries no topic descriptions");
    }
    SampleLoss out;
    std::vector<double> step_losses;
    for (const TopicTarget& target : sample.targets) {
        ForwardResult r = forward_nll(params, config, sample.observations, target.topic, target.tokens);
        step_losses.insert(step_losses.end(), r.trace.step_losses.begin(), r.trace.step_losses.end());
        out.num_tokens += target.tokens.size();
        out.traces.push_back(std::move(r.trace));
    }
    out.loss = compensated_sum(step_losses);
    return out;
}

} // namespace faegen
