#include <cmath>

#include "faegen/errors.hpp"
#include "faegen/trainer.hpp"

namespace faegen {

namespace {

using Real = long double;
using Vec = std::vector<Real>;

Vec to_ext(const Vector& v) { return Vec(v.begin(), v.end()); }

Vec mv(const Matrix& m, const Vec& x) {
    Vec out(m.rows(), 0.0L);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        Real s = 0.0L;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            s += static_cast<Real>(m(r, c)) * x[c];
        }
        out[r] = s;
    }
    return out;
}

Vec column(const Matrix& m, std::size_t c) {
    Vec out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out[r] = m(r, c);
    }
    return out;
}

Vec plus(Vec a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += b[i];
    }
    return a;
}

Vec plus(Vec a, const Vector& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += b[i];
    }
    return a;
}

Real logistic(Real x) { return 1.0L / (1.0L + std::exp(-x)); }

struct DirState {
    Vec h, c;
};

void lstm(const LstmCellParams& p, const Vec& input, DirState& s) {
    Vec joined = input;
    joined.insert(joined.end(), s.h.begin(), s.h.end());
    const Vec i = plus(mv(p.w_i, joined), p.b_i);
    const Vec f = plus(mv(p.w_f, joined), p.b_f);
    const Vec o = plus(mv(p.w_o, joined), p.b_o);
    const Vec g = plus(mv(p.w_g, joined), p.b_g);
    for (std::size_t k = 0; k < s.h.size(); ++k) {
        s.c[k] = logistic(f[k]) * s.c[k] + logistic(i[k]) * std::tanh(g[k]);
        s.h[k] = logistic(o[k]) * std::tanh(s.c[k]);
    }
}

} // namespace

long double extended_precision_loss(const FaeGenParams& params, const FaeGenConfig& config,
                                    const EncodedSample& sample) {
    const std::size_t h = config.hidden_dim;
    if (sample.observations.empty()) {
        throw InputError("extended_precision_loss: empty observation list");
    }

    std::vector<Vec> views;
    switch (config.attention_mode) {
    case AttentionMode::factored:
        for (const ViewObservation& obs : sample.observations) {
            Vec inner = mv(params.v, to_ext(obs.features));
            for (std::size_t i = 0; i < inner.size(); ++i) {
                inner[i] *= obs.view_probs[i];
            }
            views.push_back(mv(params.u, inner));
        }
        break;
    case AttentionMode::plain:
        for (const ViewObservation& obs : sample.observations) {
            views.push_back(mv(params.w_plain, to_ext(obs.features)));
        }
        break;
    case AttentionMode::mean_pool: {
        Vec mean(config.feature_dim, 0.0L);
        for (const ViewObservation& obs : sample.observations) {
            for (std::size_t i = 0; i < mean.size(); ++i) {
                mean[i] += static_cast<Real>(obs.features[i]);
            }
        }
        for (Real& m : mean) {
            m /= static_cast<Real>(sample.observations.size());
        }
        views.push_back(mv(params.w_plain, mean));
        break;
    }
    }

    Real total = 0.0L;
    for (const TopicTarget& target : sample.targets) {
        DirState fwd{Vec(h, 0.0L), Vec(h, 0.0L)};
        DirState bwd = fwd;
        Vec h_s(h, 0.0L);
        std::size_t prev = kBos;
        for (std::size_t y : target.tokens) {
            const Vec state_term = mv(params.wz, h_s);
            Vec scores(views.size());
            for (std::size_t j = 0; j < views.size(); ++j) {
                const Vec pre = plus(mv(params.wv, views[j]), state_term);
                Real s = 0.0L;
                for (std::size_t k = 0; k < h; ++k) {
                    s += static_cast<Real>(params.wa(0, k)) * std::tanh(pre[k]);
                }
                scores[j] = s;
            }
            Real top = scores[0];
            for (Real s : scores) {
                top = std::max(top, s);
            }
            Real z = 0.0L;
            for (Real& s : scores) {
                s = std::exp(s - top);
                z += s;
            }
            Vec h_a(h, 0.0L);
            for (std::size_t j = 0; j < views.size(); ++j) {
                for (std::size_t k = 0; k < h; ++k) {
                    h_a[k] += scores[j] / z * views[j][k];
                }
            }

            auto step = [&](const DirectionParams& d, DirState& s) {
                Vec e = column(d.b, prev);
                if (config.embedding_mode == EmbeddingMode::factored) {
                    const Matrix& sigma = d.sigma[target.topic];
                    if (config.topic_factor_shape == FactorShape::diagonal) {
                        for (std::size_t i = 0; i < e.size(); ++i) {
                            e[i] *= sigma(i, i);
                        }
                    } else {
                        e = mv(sigma, e);
                    }
                }
                Vec input = mv(d.a, e);
                const Vec attended = mv(d.ws, h_a);
                input.insert(input.end(), attended.begin(), attended.end());
                lstm(d.lstm, input, s);
            };
            step(params.fwd, fwd);
            step(params.bwd, bwd);

            Vec joined = fwd.h;
            joined.insert(joined.end(), bwd.h.begin(), bwd.h.end());
            h_s = plus(mv(params.wg, joined), params.bg);
            for (Real& v : h_s) {
                v = std::tanh(v);
            }
            const Vec logits = plus(mv(params.wo, h_s), params.bo);
            Real m = logits[0];
            for (Real l : logits) {
                m = std::max(m, l);
            }
            Real sum = 0.0L;
            for (Real l : logits) {
                sum += std::exp(l - m);
            }
            total += m + std::log(sum) - logits[y];
            prev = y;
        }
    }
    return total;
}

} // namespace faegen
