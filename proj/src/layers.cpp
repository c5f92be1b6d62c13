#include "faegen/layers.hpp"

#include <cmath>

#include "faegen/errors.hpp"

namespace faegen {

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) {
        throw ShapeError(message);
    }
}

void accumulate(Vector& into, const Vector& x) {
    require(into.dim() == x.dim(), "gradient accumulate: dimension mismatch");
    for (std::size_t i = 0; i < x.dim(); ++i) {
        into[i] += x[i];
    }
}

} // namespace

// ---------------------------------------------------------------------------

FactoredLinearResult factored_linear_forward(const Matrix& u, const Matrix& sigma, const Matrix& v, const Vector& h) {
    require(v.cols() == h.dim(), "factored_linear: V " + v.shape_string() + " does not accept h of dim " +
                                     std::to_string(h.dim()));
    require(sigma.rows() == sigma.cols() && sigma.rows() == v.rows(),
            "factored_linear: Sigma " + sigma.shape_string() + " incompatible with V " + v.shape_string());
    require(u.cols() == sigma.cols(),
            "factored_linear: U " + u.shape_string() + " incompatible with Sigma " + sigma.shape_string());

    FactoredLinearResult r;
    r.cache.h = h;
    r.cache.vh = matvec(v, h.span());
    r.cache.svh = matvec(sigma, r.cache.vh.span());
    r.out = matvec(u, r.cache.svh.span());
    return r;
}

void factored_linear_backward(const Matrix& u, const Matrix& sigma, const Matrix& v, const FactoredLinearCache& cache,
                              const Vector& d_out, Matrix* d_u, Matrix* d_sigma, Matrix* d_v, Vector* d_h,
                              FactorShape shape) {
    require(d_out.dim() == u.rows(), "factored_linear_backward: d_out dim " + std::to_string(d_out.dim()) +
                                         " vs U " + u.shape_string());
    if (d_u) {
        add_outer(*d_u, d_out.span(), cache.svh.span());
    }
    const Vector d_svh = matvec_transposed(u, d_out.span());
    if (d_sigma) {
        if (shape == FactorShape::diagonal) {
            require(d_sigma->rows() == d_svh.dim(), "factored_linear_backward: d_sigma shape");
            for (std::size_t i = 0; i < d_svh.dim(); ++i) {
                (*d_sigma)(i, i) += d_svh[i] * cache.vh[i];
            }
        } else {
            add_outer(*d_sigma, d_svh.span(), cache.vh.span());
        }
    }
    if (!d_v && !d_h) {
        return;
    }
    const Vector d_vh = matvec_transposed(sigma, d_svh.span());
    if (d_v) {
        add_outer(*d_v, d_vh.span(), cache.h.span());
    }
    if (d_h) {
        matvec_transposed_accumulate(v, d_vh.span(), d_h->span());
    }
}

FactoredLinearGrads factored_linear_backward(const Matrix& u, const Matrix& sigma, const Matrix& v,
                                             const FactoredLinearCache& cache, const Vector& d_out,
                                             FactorShape shape) {
    FactoredLinearGrads g{Matrix(u.rows(), u.cols()), Matrix(sigma.rows(), sigma.cols()), Matrix(v.rows(), v.cols()),
                          Vector(v.cols())};
    factored_linear_backward(u, sigma, v, cache, d_out, &g.d_u, &g.d_sigma, &g.d_v, &g.d_h, shape);
    return g;
}

// ---------------------------------------------------------------------------

AttentionResult attention_forward(const Matrix& wa, const Matrix& wv, const Matrix& wz,
                                  std::span<const Vector> views, const Vector& h_prev) {
    if (views.empty()) {
        throw InputError("attention: empty view list");
    }
    require(wa.rows() == 1 && wa.cols() == wv.rows() && wv.rows() == wz.rows(),
            "attention: Wa " + wa.shape_string() + ", Wv " + wv.shape_string() + ", Wz " + wz.shape_string() +
                " disagree on attention size");
    require(wz.cols() == h_prev.dim(), "attention: Wz " + wz.shape_string() + " vs state dim " +
                                           std::to_string(h_prev.dim()));
    const std::size_t view_dim = views.front().dim();
    for (const Vector& view : views) {
        require(view.dim() == view_dim, "attention: views differ in dimension");
    }
    require(wv.cols() == view_dim, "attention: Wv " + wv.shape_string() + " vs view dim " + std::to_string(view_dim));

    AttentionResult r;
    r.cache.h_prev = h_prev;
    const Vector state_term = matvec(wz, h_prev.span());
    Vector scores(views.size());
    r.cache.act.reserve(views.size());
    for (std::size_t j = 0; j < views.size(); ++j) {
        Vector pre = state_term;
        matvec_accumulate(wv, views[j].span(), pre.span());
        Vector act = tanh_ew(pre);
        scores[j] = dot(wa.row(0), act.span());
        r.cache.act.push_back(std::move(act));
    }
    r.alpha = softmax(scores);
    r.cache.alpha = r.alpha;
    r.h_a = Vector(view_dim);
    for (std::size_t j = 0; j < views.size(); ++j) {
        axpy(r.alpha[j], views[j].span(), r.h_a.span());
    }
    return r;
}

AttentionGrads attention_grads_like(const Matrix& wa, const Matrix& wv, const Matrix& wz,
                                    std::span<const Vector> views, const Vector& h_prev) {
    AttentionGrads g{Matrix(wa.rows(), wa.cols()), Matrix(wv.rows(), wv.cols()), Matrix(wz.rows(), wz.cols()), {},
                     Vector(h_prev.dim())};
    for (const Vector& view : views) {
        g.d_views.emplace_back(view.dim());
    }
    return g;
}

void attention_backward(const Matrix& wa, const Matrix& wv, const Matrix& wz, std::span<const Vector> views,
                        const AttentionCache& cache, const Vector& d_alpha, const Vector& d_h_a,
                        AttentionGrads& grads) {
    const std::size_t m = views.size();
    require(cache.act.size() == m && grads.d_views.size() == m, "attention_backward: view count mismatch");
    require(d_h_a.dim() == views.front().dim(), "attention_backward: d_h_a dimension");
    require(d_alpha.empty() || d_alpha.dim() == m, "attention_backward: d_alpha dimension");

    // h_a = sum_j alpha_j v_j
    Vector total_d_alpha(m);
    for (std::size_t j = 0; j < m; ++j) {
        total_d_alpha[j] = dot(d_h_a.span(), views[j].span()) + (d_alpha.empty() ? 0.0 : d_alpha[j]);
        axpy(cache.alpha[j], d_h_a.span(), grads.d_views[j].span());
    }
    // softmax
    const double mean = dot(cache.alpha.span(), total_d_alpha.span());
    Vector d_state_pre(wz.rows());
    for (std::size_t j = 0; j < m; ++j) {
        const double d_score = cache.alpha[j] * (total_d_alpha[j] - mean);
        if (d_score == 0.0) {
            continue;
        }
        const Vector& act = cache.act[j];
        add_outer(grads.d_wa, std::span<const double>(&d_score, 1), act.span());
        Vector d_pre(act.dim());
        for (std::size_t i = 0; i < act.dim(); ++i) {
            d_pre[i] = d_score * wa(0, i) * (1.0 - act[i] * act[i]);
        }
        add_outer(grads.d_wv, d_pre.span(), views[j].span());
        matvec_transposed_accumulate(wv, d_pre.span(), grads.d_views[j].span());
        axpy(1.0, d_pre.span(), d_state_pre.span());
    }
    add_outer(grads.d_wz, d_state_pre.span(), cache.h_prev.span());
    matvec_transposed_accumulate(wz, d_state_pre.span(), grads.d_h_prev.span());
}

// ---------------------------------------------------------------------------

LstmCellParams::LstmCellParams(std::size_t input, std::size_t hidden)
    : input_dim(input), hidden_dim(hidden), w_i(hidden, input + hidden), w_f(hidden, input + hidden),
      w_o(hidden, input + hidden), w_g(hidden, input + hidden), b_i(hidden), b_f(hidden), b_o(hidden), b_g(hidden) {}

void LstmCellParams::set_zero() {
    for (Matrix* w : {&w_i, &w_f, &w_o, &w_g}) {
        w->set_zero();
    }
    for (Vector* b : {&b_i, &b_f, &b_o, &b_g}) {
        b->set_zero();
    }
}

LstmStep lstm_cell_forward(const LstmCellParams& p, const Vector& input, const Vector& h_prev, const Vector& c_prev) {
    require(input.dim() == p.input_dim, "lstm: input dim " + std::to_string(input.dim()) + " vs " +
                                            std::to_string(p.input_dim));
    require(h_prev.dim() == p.hidden_dim && c_prev.dim() == p.hidden_dim, "lstm: state dim mismatch");

    LstmStep s;
    s.cache.joined = concat(input, h_prev);
    auto gate = [&](const Matrix& w, const Vector& b) {
        Vector pre = b;
        matvec_accumulate(w, s.cache.joined.span(), pre.span());
        return pre;
    };
    s.cache.i = sigmoid_ew(gate(p.w_i, p.b_i));
    s.cache.f = sigmoid_ew(gate(p.w_f, p.b_f));
    s.cache.o = sigmoid_ew(gate(p.w_o, p.b_o));
    s.cache.g = tanh_ew(gate(p.w_g, p.b_g));
    s.cache.c_prev = c_prev;

    const std::size_t n = p.hidden_dim;
    s.c = Vector(n);
    s.h = Vector(n);
    s.cache.tanh_c = Vector(n);
    for (std::size_t k = 0; k < n; ++k) {
        s.c[k] = s.cache.f[k] * c_prev[k] + s.cache.i[k] * s.cache.g[k];
        s.cache.tanh_c[k] = std::tanh(s.c[k]);
        s.h[k] = s.cache.o[k] * s.cache.tanh_c[k];
    }
    return s;
}

void lstm_cell_backward(const LstmCellParams& p, const LstmCache& cache, const Vector& dh, const Vector& dc,
                        LstmCellParams& d_params, Vector& d_input, Vector& d_h_prev, Vector& d_c_prev) {
    const std::size_t n = p.hidden_dim;
    require(dh.dim() == n && dc.dim() == n, "lstm_backward: upstream gradient dimension");
    require(d_input.dim() == p.input_dim && d_h_prev.dim() == n && d_c_prev.dim() == n,
            "lstm_backward: output gradient dimension");

    Vector d_pre_i(n), d_pre_f(n), d_pre_o(n), d_pre_g(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double tc = cache.tanh_c[k];
        const double d_o = dh[k] * tc;
        const double d_c = dc[k] + dh[k] * cache.o[k] * (1.0 - tc * tc);
        const double d_f = d_c * cache.c_prev[k];
        const double d_i = d_c * cache.g[k];
        const double d_g = d_c * cache.i[k];
        d_c_prev[k] += d_c * cache.f[k];

        d_pre_i[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
        d_pre_f[k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
        d_pre_o[k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
        d_pre_g[k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
    }

    struct GateGrad {
        const Vector& d_pre;
        const Matrix& w;
        Matrix& d_w;
        Vector& d_b;
    };
    const GateGrad gates[] = {
        {d_pre_i, p.w_i, d_params.w_i, d_params.b_i},
        {d_pre_f, p.w_f, d_params.w_f, d_params.b_f},
        {d_pre_o, p.w_o, d_params.w_o, d_params.b_o},
        {d_pre_g, p.w_g, d_params.w_g, d_params.b_g},
    };
    Vector d_joined(cache.joined.dim());
    for (const GateGrad& gate : gates) {
        add_outer(gate.d_w, gate.d_pre.span(), cache.joined.span());
        accumulate(gate.d_b, gate.d_pre);
        matvec_transposed_accumulate(gate.w, gate.d_pre.span(), d_joined.span());
    }
    for (std::size_t k = 0; k < p.input_dim; ++k) {
        d_input[k] += d_joined[k];
    }
    for (std::size_t k = 0; k < n; ++k) {
        d_h_prev[k] += d_joined[p.input_dim + k];
    }
}

// ---------------------------------------------------------------------------

OutputHeadResult combine_output_forward(const Matrix& wg, const Vector& bg, const Matrix& wo, const Vector& bo,
                                        const Vector& h_fwd, const Vector& h_bwd) {
    require(wg.cols() == h_fwd.dim() + h_bwd.dim(), "combine_output: Wg " + wg.shape_string() + " vs joined dim " +
                                                        std::to_string(h_fwd.dim() + h_bwd.dim()));
    require(bg.dim() == wg.rows() && wo.cols() == wg.rows() && bo.dim() == wo.rows(),
            "combine_output: head shapes Wg " + wg.shape_string() + ", Wo " + wo.shape_string());
    OutputHeadResult r;
    r.cache.joined = concat(h_fwd, h_bwd);
    Vector pre = bg;
    matvec_accumulate(wg, r.cache.joined.span(), pre.span());
    r.h_s = tanh_ew(pre);
    r.cache.h_s = r.h_s;
    r.logits = bo;
    matvec_accumulate(wo, r.h_s.span(), r.logits.span());
    return r;
}

void combine_output_backward(const Matrix& wg, const Matrix& wo, const OutputHeadCache& cache, const Vector& d_h_s,
                             const Vector& d_logits, Matrix& d_wg, Vector& d_bg, Matrix& d_wo, Vector& d_bo,
                             Vector& d_h_fwd, Vector& d_h_bwd) {
    require(d_logits.dim() == wo.rows(), "combine_output_backward: d_logits dimension");
    add_outer(d_wo, d_logits.span(), cache.h_s.span());
    accumulate(d_bo, d_logits);

    Vector d_hs = matvec_transposed(wo, d_logits.span());
    if (!d_h_s.empty()) {
        accumulate(d_hs, d_h_s);
    }
    Vector d_pre(d_hs.dim());
    for (std::size_t k = 0; k < d_hs.dim(); ++k) {
        d_pre[k] = d_hs[k] * (1.0 - cache.h_s[k] * cache.h_s[k]);
    }
    add_outer(d_wg, d_pre.span(), cache.joined.span());
    accumulate(d_bg, d_pre);
    const Vector d_joined = matvec_transposed(wg, d_pre.span());
    require(d_h_fwd.dim() + d_h_bwd.dim() == d_joined.dim(), "combine_output_backward: state gradient dimension");
    for (std::size_t k = 0; k < d_h_fwd.dim(); ++k) {
        d_h_fwd[k] += d_joined[k];
    }
    for (std::size_t k = 0; k < d_h_bwd.dim(); ++k) {
        d_h_bwd[k] += d_joined[d_h_fwd.dim() + k];
    }
}

// ---------------------------------------------------------------------------

NllResult nll_loss(const Vector& logits, std::size_t target) {
    if (target >= logits.dim()) {
        throw InputError("nll_loss: target " + std::to_string(target) + " out of range for " +
                         std::to_string(logits.dim()) + " classes");
    }
    const Vector logp = log_softmax(logits);
    NllResult r{-logp[target], softmax(logits)};
    r.d_logits[target] -= 1.0;
    return r;
}

} // namespace faegen
