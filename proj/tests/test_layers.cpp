#include <cmath>

#include "doctest.h"
#include "faegen/errors.hpp"
#include "faegen/layers.hpp"
#include "faegen/rng.hpp"
#include "finite_diff.hpp"
#include "reference_layers.hpp"

using namespace faegen;
using faegen::testing::max_fd_error;
using faegen::testing::random_matrix;
using faegen::testing::random_vector;
using faegen::testing::linner;
using faegen::testing::max_abs_gap;

namespace {

bool all_zero(std::span<const double> v) {
    for (double x : v) {
        if (x != 0.0) {
            return false;
        }
    }
    return true;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

// ---------------------------------------------------------------------------
// factored linear

TEST_CASE("factored linear with a one-hot factor selects one component") {
    const Matrix eye = Matrix::identity(3);
    const Vector h{4.0, -2.0, 7.0};
    const FactoredLinearResult r = factored_linear_forward(eye, diag(Vector{0, 1, 0}), eye, h);
    CHECK(r.out == Vector{0.0, -2.0, 0.0});
}

TEST_CASE("factored linear with identity factor is a two-layer linear map") {
    SeededRng rng(21);
    const Matrix u = random_matrix(rng, 5, 3);
    const Matrix v = random_matrix(rng, 3, 4);
    const Vector h = random_vector(rng, 4);
    const Vector out = factored_linear_forward(u, Matrix::identity(3), v, h).out;
    const Vector two_layer = matvec(u, matvec(v, h.span()).span());
    CHECK(max_abs_diff(out.span(), two_layer.span()) < 1e-15);
}

TEST_CASE("factored linear matches an explicit triple product") {
    SeededRng rng(22);
    const Matrix u = random_matrix(rng, 5, 3);
    const Matrix s = random_matrix(rng, 3, 3);
    const Matrix v = random_matrix(rng, 3, 4);
    const Vector h = random_vector(rng, 4);
    const Vector out = factored_linear_forward(u, s, v, h).out;
    for (std::size_t i = 0; i < 5; ++i) {
        double expect = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
            for (std::size_t b = 0; b < 3; ++b) {
                for (std::size_t c = 0; c < 4; ++c) {
                    expect += u(i, a) * s(a, b) * v(b, c) * h[c];
                }
            }
        }
        CHECK(std::abs(out[i] - expect) < 1e-12);
    }
}

TEST_CASE("factored linear with one-hot diagonal is rank one") {
    SeededRng rng(23);
    const Matrix u = random_matrix(rng, 4, 3);
    const Matrix v = random_matrix(rng, 3, 5);
    const Vector h = random_vector(rng, 5);
    for (std::size_t i = 0; i < 3; ++i) {
        Vector e(3);
        e[i] = 1.0;
        const Vector out = factored_linear_forward(u, diag(e), v, h).out;
        const double vi_h = dot(v.row(i), h.span());
        for (std::size_t r = 0; r < 4; ++r) {
            CHECK(out[r] == u(r, i) * vi_h);
        }
    }
}

TEST_CASE("factored linear rejects inconsistent shapes") {
    CHECK_THROWS_AS((void)factored_linear_forward(Matrix(2, 3), Matrix(3, 3), Matrix(3, 4), Vector(5)), ShapeError);
    CHECK_THROWS_AS((void)factored_linear_forward(Matrix(2, 2), Matrix(3, 3), Matrix(3, 4), Vector(4)), ShapeError);
    CHECK_THROWS_AS((void)factored_linear_forward(Matrix(2, 3), Matrix(3, 2), Matrix(3, 4), Vector(4)), ShapeError);
}

TEST_CASE("factored linear backward with zero upstream gradient is zero") {
    SeededRng rng(24);
    Matrix u = random_matrix(rng, 4, 3), s = random_matrix(rng, 3, 3), v = random_matrix(rng, 3, 2);
    const Vector h = random_vector(rng, 2);
    const FactoredLinearResult r = factored_linear_forward(u, s, v, h);
    const FactoredLinearGrads g = factored_linear_backward(u, s, v, r.cache, Vector(4));
    CHECK(all_zero(g.d_u.span()));
    CHECK(all_zero(g.d_sigma.span()));
    CHECK(all_zero(g.d_v.span()));
    CHECK(all_zero(g.d_h.span()));
}

TEST_CASE("factored linear backward agrees with finite differences") {
    SeededRng rng(25);
    for (int trial = 0; trial < 25; ++trial) {
        Matrix u = random_matrix(rng, 5, 3), s = random_matrix(rng, 3, 3), v = random_matrix(rng, 3, 4);
        Vector h = random_vector(rng, 4);
        const Vector d_out = random_vector(rng, 5);
        const FactoredLinearResult r = factored_linear_forward(u, s, v, h);
        const FactoredLinearGrads g = factored_linear_backward(u, s, v, r.cache, d_out);
        CHECK(max_abs_gap(r.out, testing::ref_factored_linear(u, s, v, h)) < 1e-13);
        auto loss = [&] { return linner(d_out, testing::ref_factored_linear(u, s, v, h)); };
        CHECK(max_fd_error(loss, u.span(), g.d_u.span()) < 1e-6);
        CHECK(max_fd_error(loss, s.span(), g.d_sigma.span()) < 1e-6);
        CHECK(max_fd_error(loss, v.span(), g.d_v.span()) < 1e-6);
        CHECK(max_fd_error(loss, h.span(), g.d_h.span()) < 1e-6);
    }
}

TEST_CASE("diagonal factor mode leaves off-diagonal gradients at exactly zero") {
    SeededRng rng(26);
    const Matrix u = random_matrix(rng, 4, 3), v = random_matrix(rng, 3, 4);
    const Matrix s = diag(random_vector(rng, 3));
    const Vector h = random_vector(rng, 4);
    const FactoredLinearResult r = factored_linear_forward(u, s, v, h);
    const FactoredLinearGrads full = factored_linear_backward(u, s, v, r.cache, random_vector(rng, 4));
    SeededRng again(26);
    (void)random_matrix(again, 4, 3);
    (void)random_matrix(again, 3, 4);
    (void)random_vector(again, 3);
    (void)random_vector(again, 4);
    const FactoredLinearGrads g = factored_linear_backward(u, s, v, r.cache, random_vector(again, 4),
                                                           FactorShape::diagonal);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            if (i == j) {
                CHECK(g.d_sigma(i, j) == full.d_sigma(i, j));
            } else {
                CHECK(g.d_sigma(i, j) == 0.0);
            }
        }
    }
}

TEST_CASE("factored linear backward accumulates") {
    SeededRng rng(27);
    const Matrix u = random_matrix(rng, 3, 2), s = random_matrix(rng, 2, 2), v = random_matrix(rng, 2, 3);
    const Vector h = random_vector(rng, 3), d_out = random_vector(rng, 3);
    const FactoredLinearResult r = factored_linear_forward(u, s, v, h);
    const FactoredLinearGrads once = factored_linear_backward(u, s, v, r.cache, d_out);
    Matrix du(3, 2), ds(2, 2), dv(2, 3);
    Vector dh(3);
    factored_linear_backward(u, s, v, r.cache, d_out, &du, &ds, &dv, &dh);
    factored_linear_backward(u, s, v, r.cache, d_out, &du, &ds, &dv, &dh);
    for (std::size_t i = 0; i < du.size(); ++i) {
        CHECK(du.span()[i] == doctest::Approx(2.0 * once.d_u.span()[i]).epsilon(1e-15));
    }
    for (std::size_t i = 0; i < dh.dim(); ++i) {
        CHECK(dh[i] == doctest::Approx(2.0 * once.d_h[i]).epsilon(1e-15));
    }
}

// ---------------------------------------------------------------------------
// attention

TEST_CASE("attention over a single view returns that view") {
    SeededRng rng(31);
    const Matrix wa = random_matrix(rng, 1, 4), wv = random_matrix(rng, 4, 3), wz = random_matrix(rng, 4, 5);
    const std::vector<Vector> views{random_vector(rng, 3)};
    const AttentionResult r = attention_forward(wa, wv, wz, views, random_vector(rng, 5));
    CHECK(r.alpha == Vector{1.0});
    CHECK(r.h_a == views[0]);
}

TEST_CASE("attention over two identical views splits evenly") {
    SeededRng rng(32);
    const Matrix wa = random_matrix(rng, 1, 4), wv = random_matrix(rng, 4, 3), wz = random_matrix(rng, 4, 5);
    const Vector view = random_vector(rng, 3);
    const std::vector<Vector> views{view, view};
    const AttentionResult r = attention_forward(wa, wv, wz, views, random_vector(rng, 5));
    CHECK(r.alpha == Vector{0.5, 0.5});
    CHECK(max_abs_diff(r.h_a.span(), view.span()) < 1e-15);
}

TEST_CASE("attention with no views is an input error") {
    const std::vector<Vector> none;
    CHECK_THROWS_AS((void)attention_forward(Matrix(1, 2), Matrix(2, 2), Matrix(2, 2), none, Vector(2)), InputError);
}

TEST_CASE("attention matches a direct recomputation") {
    SeededRng rng(33);
    const Matrix wa = random_matrix(rng, 1, 4), wv = random_matrix(rng, 4, 3), wz = random_matrix(rng, 4, 5);
    const std::vector<Vector> views{random_vector(rng, 3), random_vector(rng, 3), random_vector(rng, 3)};
    const Vector h_prev = random_vector(rng, 5);
    const AttentionResult r = attention_forward(wa, wv, wz, views, h_prev);

    std::vector<double> score(3);
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t k = 0; k < 4; ++k) {
            double pre = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                pre += wv(k, c) * views[j][c];
            }
            for (std::size_t c = 0; c < 5; ++c) {
                pre += wz(k, c) * h_prev[c];
            }
            score[j] += wa(0, k) * std::tanh(pre);
        }
    }
    const double z = std::exp(score[0]) + std::exp(score[1]) + std::exp(score[2]);
    for (std::size_t c = 0; c < 3; ++c) {
        double expect = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            expect += std::exp(score[j]) / z * views[j][c];
        }
        CHECK(std::abs(r.h_a[c] - expect) < 1e-12);
    }
}

TEST_CASE("attention weights are a distribution and h_a stays in the hull of the views") {
    SeededRng rng(34);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t m = 1 + rng.index(5);
        const Matrix wa = random_matrix(rng, 1, 4, 3.0), wv = random_matrix(rng, 4, 3, 3.0),
                     wz = random_matrix(rng, 4, 2, 3.0);
        std::vector<Vector> views;
        for (std::size_t j = 0; j < m; ++j) {
            views.push_back(random_vector(rng, 3, 5.0));
        }
        const AttentionResult r = attention_forward(wa, wv, wz, views, random_vector(rng, 2));
        double total = 0.0;
        for (double a : r.alpha) {
            CHECK(a >= 0.0);
            total += a;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
        for (std::size_t c = 0; c < 3; ++c) {
            double lo = views[0][c], hi = views[0][c];
            for (const Vector& v : views) {
                lo = std::min(lo, v[c]);
                hi = std::max(hi, v[c]);
            }
            CHECK(r.h_a[c] >= lo - 1e-12);
            CHECK(r.h_a[c] <= hi + 1e-12);
        }
    }
}

TEST_CASE("attention backward with zero upstream gradient is zero") {
    SeededRng rng(35);
    const Matrix wa = random_matrix(rng, 1, 3), wv = random_matrix(rng, 3, 2), wz = random_matrix(rng, 3, 3);
    const std::vector<Vector> views{random_vector(rng, 2), random_vector(rng, 2)};
    const Vector h_prev = random_vector(rng, 3);
    const AttentionResult r = attention_forward(wa, wv, wz, views, h_prev);
    AttentionGrads g = attention_grads_like(wa, wv, wz, views, h_prev);
    attention_backward(wa, wv, wz, views, r.cache, Vector(2), Vector(2), g);
    CHECK(all_zero(g.d_wa.span()));
    CHECK(all_zero(g.d_wv.span()));
    CHECK(all_zero(g.d_wz.span()));
    CHECK(all_zero(g.d_views[0].span()));
    CHECK(all_zero(g.d_h_prev.span()));
}

TEST_CASE("attention backward agrees with finite differences") {
    SeededRng rng(36);
    for (int trial = 0; trial < 25; ++trial) {
        Matrix wa = random_matrix(rng, 1, 4), wv = random_matrix(rng, 4, 3), wz = random_matrix(rng, 4, 5);
        std::vector<Vector> views{random_vector(rng, 3), random_vector(rng, 3)};
        Vector h_prev = random_vector(rng, 5);
        const Vector d_alpha = random_vector(rng, 2);
        const Vector d_h_a = random_vector(rng, 3);
        const AttentionResult r = attention_forward(wa, wv, wz, views, h_prev);
        AttentionGrads g = attention_grads_like(wa, wv, wz, views, h_prev);
        attention_backward(wa, wv, wz, views, r.cache, d_alpha, d_h_a, g);

        const testing::RefAttention ref = testing::ref_attention(wa, wv, wz, views, h_prev);
        CHECK(max_abs_gap(r.alpha, ref.alpha) < 1e-13);
        CHECK(max_abs_gap(r.h_a, ref.h_a) < 1e-13);
        auto loss = [&] {
            const testing::RefAttention q = testing::ref_attention(wa, wv, wz, views, h_prev);
            return linner(d_alpha, q.alpha) + linner(d_h_a, q.h_a);
        };
        CHECK(max_fd_error(loss, wa.span(), g.d_wa.span()) < 1e-6);
        CHECK(max_fd_error(loss, wv.span(), g.d_wv.span()) < 1e-6);
        CHECK(max_fd_error(loss, wz.span(), g.d_wz.span()) < 1e-6);
        CHECK(max_fd_error(loss, views[0].span(), g.d_views[0].span()) < 1e-6);
        CHECK(max_fd_error(loss, views[1].span(), g.d_views[1].span()) < 1e-6);
        CHECK(max_fd_error(loss, h_prev.span(), g.d_h_prev.span()) < 1e-6);
    }
}

TEST_CASE("attention gradients do not depend on values outside the view set") {
    SeededRng rng(37);
    const Matrix wa = random_matrix(rng, 1, 3), wv = random_matrix(rng, 3, 2), wz = random_matrix(rng, 3, 3);
    std::vector<Vector> slots{random_vector(rng, 2), random_vector(rng, 2), random_vector(rng, 2)};
    const Vector h_prev = random_vector(rng, 3);
    const Vector d_h_a = random_vector(rng, 2);
    auto grads_for = [&](const std::vector<Vector>& all) {
        const std::span<const Vector> used(all.data(), 2); // third slot is padding
        const AttentionResult r = attention_forward(wa, wv, wz, used, h_prev);
        AttentionGrads g = attention_grads_like(wa, wv, wz, used, h_prev);
        attention_backward(wa, wv, wz, used, r.cache, Vector(), d_h_a, g);
        return g;
    };
    const AttentionGrads before = grads_for(slots);
    slots[2] = random_vector(rng, 2, 100.0);
    const AttentionGrads after = grads_for(slots);
    CHECK(before.d_wa == after.d_wa);
    CHECK(before.d_wv == after.d_wv);
    CHECK(before.d_wz == after.d_wz);
    CHECK(before.d_h_prev == after.d_h_prev);
}

// ---------------------------------------------------------------------------
// LSTM cell

TEST_CASE("LSTM with zero parameters and zero cell stays at zero") {
    const LstmCellParams p(3, 2);
    const LstmStep s = lstm_cell_forward(p, Vector{1, 2, 3}, Vector{0.5, -1}, Vector(2));
    CHECK(s.h == Vector(2));
    CHECK(s.c == Vector(2));
}

TEST_CASE("LSTM with zero parameters halves the cell") {
    const LstmCellParams p(3, 2);
    const Vector c_prev{2.0, -4.0};
    const LstmStep s = lstm_cell_forward(p, Vector{1, 2, 3}, Vector(2), c_prev);
    CHECK(s.c == Vector{1.0, -2.0});
    CHECK(s.h[0] == doctest::Approx(0.5 * std::tanh(1.0)).epsilon(1e-15));
    CHECK(s.h[1] == doctest::Approx(0.5 * std::tanh(-2.0)).epsilon(1e-15));
}

TEST_CASE("LSTM parameter shapes") {
    const LstmCellParams p(3, 2);
    for (const Matrix* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_g}) {
        CHECK(w->rows() == 2);
        CHECK(w->cols() == 5);
    }
    for (const Vector* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_g}) {
        CHECK(b->dim() == 2);
    }
    CHECK_THROWS_AS((void)lstm_cell_forward(p, Vector(4), Vector(2), Vector(2)), ShapeError);
}

TEST_CASE("LSTM forward matches a gate-by-gate recomputation") {
    SeededRng rng(41);
    LstmCellParams p(3, 2);
    for (Matrix* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_g}) {
        *w = random_matrix(rng, 2, 5);
    }
    for (Vector* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_g}) {
        *b = random_vector(rng, 2);
    }
    const Vector x = random_vector(rng, 3), h = random_vector(rng, 2), c = random_vector(rng, 2);
    const LstmStep s = lstm_cell_forward(p, x, h, c);
    const double z[5] = {x[0], x[1], x[2], h[0], h[1]};
    for (std::size_t k = 0; k < 2; ++k) {
        double pi = p.b_i[k], pf = p.b_f[k], po = p.b_o[k], pg = p.b_g[k];
        for (std::size_t j = 0; j < 5; ++j) {
            pi += p.w_i(k, j) * z[j];
            pf += p.w_f(k, j) * z[j];
            po += p.w_o(k, j) * z[j];
            pg += p.w_g(k, j) * z[j];
        }
        const double cell = sig(pf) * c[k] + sig(pi) * std::tanh(pg);
        CHECK(std::abs(s.c[k] - cell) < 1e-12);
        CHECK(std::abs(s.h[k] - sig(po) * std::tanh(cell)) < 1e-12);
    }
}

TEST_CASE("LSTM backward with zero upstream gradient is zero") {
    SeededRng rng(42);
    LstmCellParams p(2, 3);
    p.w_i = random_matrix(rng, 3, 5);
    const LstmStep s = lstm_cell_forward(p, random_vector(rng, 2), random_vector(rng, 3), random_vector(rng, 3));
    LstmCellParams d(2, 3);
    Vector dx(2), dh(3), dc(3);
    lstm_cell_backward(p, s.cache, Vector(3), Vector(3), d, dx, dh, dc);
    CHECK(all_zero(d.w_i.span()));
    CHECK(all_zero(d.b_g.span()));
    CHECK(all_zero(dx.span()));
    CHECK(all_zero(dh.span()));
    CHECK(all_zero(dc.span()));
}

TEST_CASE("LSTM cell gradient with zero parameters is half the upstream cell gradient") {
    const LstmCellParams p(2, 3);
    const LstmStep s = lstm_cell_forward(p, Vector{1, -1}, Vector(3), Vector{0.3, -0.2, 0.9});
    LstmCellParams d(2, 3);
    Vector dx(2), dh(3), dc_prev(3);
    const Vector dc{1.0, -2.0, 0.25};
    lstm_cell_backward(p, s.cache, Vector(3), dc, d, dx, dh, dc_prev);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(dc_prev[k] == 0.5 * dc[k]);
    }
}

TEST_CASE("LSTM backward agrees with finite differences") {
    SeededRng rng(43);
    for (int trial = 0; trial < 25; ++trial) {
        LstmCellParams p(3, 3);
        for (Matrix* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_g}) {
            *w = random_matrix(rng, 3, 6);
        }
        for (Vector* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_g}) {
            *b = random_vector(rng, 3);
        }
        Vector x = random_vector(rng, 3), h = random_vector(rng, 3), c = random_vector(rng, 3);
        const Vector up_h = random_vector(rng, 3), up_c = random_vector(rng, 3);
        const LstmStep s = lstm_cell_forward(p, x, h, c);
        LstmCellParams d(3, 3);
        Vector dx(3), dh(3), dc(3);
        lstm_cell_backward(p, s.cache, up_h, up_c, d, dx, dh, dc);

        const testing::RefLstm ref = testing::ref_lstm(p, x, h, c);
        CHECK(max_abs_gap(s.h, ref.h) < 1e-13);
        CHECK(max_abs_gap(s.c, ref.c) < 1e-13);
        auto loss = [&] {
            const testing::RefLstm q = testing::ref_lstm(p, x, h, c);
            return linner(up_h, q.h) + linner(up_c, q.c);
        };
        CHECK(max_fd_error(loss, p.w_i.span(), d.w_i.span()) < 1e-6);
        CHECK(max_fd_error(loss, p.w_f.span(), d.w_f.span()) < 1e-6);
        CHECK(max_fd_error(loss, p.w_o.span(), d.w_o.span()) < 1e-6);
        CHECK(max_fd_error(loss, p.w_g.span(), d.w_g.span()) < 1e-6);
        CHECK(max_fd_error(loss, p.b_i.span(), d.b_i.span()) < 1e-6);
        CHECK(max_fd_error(loss, p.b_f.span(), d.b_f.span()) < 1e-6);
        CHECK(max_fd_error(loss, p.b_o.span(), d.b_o.span()) < 1e-6);
        CHECK(max_fd_error(loss, p.b_g.span(), d.b_g.span()) < 1e-6);
        CHECK(max_fd_error(loss, x.span(), dx.span()) < 1e-6);
        CHECK(max_fd_error(loss, h.span(), dh.span()) < 1e-6);
        CHECK(max_fd_error(loss, c.span(), dc.span()) < 1e-6);
    }
}

// ---------------------------------------------------------------------------
// output head and loss

TEST_CASE("output head with zero parameters gives a uniform distribution") {
    const OutputHeadResult r = combine_output_forward(Matrix(2, 4), Vector(2), Matrix(5, 2), Vector(5),
                                                      Vector{1, 2}, Vector{3, 4});
    CHECK(r.h_s == Vector(2));
    CHECK(r.logits == Vector(5));
    for (double p : softmax(r.logits)) {
        CHECK(p == 0.2);
    }
}

TEST_CASE("output head with a projection combiner applies tanh to the forward state") {
    Matrix wg(2, 4);
    wg(0, 0) = 1.0;
    wg(1, 1) = 1.0;
    const Vector h_fwd{0.3, -1.2};
    const OutputHeadResult r = combine_output_forward(wg, Vector(2), Matrix(3, 2), Vector(3), h_fwd, Vector{5, 6});
    CHECK(r.h_s == tanh_ew(h_fwd));
}

TEST_CASE("output head matches a direct recomputation") {
    SeededRng rng(51);
    const Matrix wg = random_matrix(rng, 3, 4), wo = random_matrix(rng, 5, 3);
    const Vector bg = random_vector(rng, 3), bo = random_vector(rng, 5);
    const Vector hf = random_vector(rng, 2), hb = random_vector(rng, 2);
    const OutputHeadResult r = combine_output_forward(wg, bg, wo, bo, hf, hb);
    const double joined[4] = {hf[0], hf[1], hb[0], hb[1]};
    for (std::size_t v = 0; v < 5; ++v) {
        double logit = bo[v];
        for (std::size_t k = 0; k < 3; ++k) {
            double pre = bg[k];
            for (std::size_t j = 0; j < 4; ++j) {
                pre += wg(k, j) * joined[j];
            }
            logit += wo(v, k) * std::tanh(pre);
        }
        CHECK(std::abs(r.logits[v] - logit) < 1e-12);
    }
    CHECK_THROWS_AS((void)combine_output_forward(wg, bg, wo, bo, hf, Vector(3)), ShapeError);
}

TEST_CASE("output head backward agrees with finite differences") {
    SeededRng rng(52);
    Matrix wg = random_matrix(rng, 3, 4), wo = random_matrix(rng, 5, 3);
    Vector bg = random_vector(rng, 3), bo = random_vector(rng, 5);
    Vector hf = random_vector(rng, 2), hb = random_vector(rng, 2);
    const Vector up_logits = random_vector(rng, 5), up_hs = random_vector(rng, 3);
    const OutputHeadResult r = combine_output_forward(wg, bg, wo, bo, hf, hb);
    Matrix dwg(3, 4), dwo(5, 3);
    Vector dbg(3), dbo(5), dhf(2), dhb(2);
    combine_output_backward(wg, wo, r.cache, up_hs, up_logits, dwg, dbg, dwo, dbo, dhf, dhb);
    const testing::RefHead ref = testing::ref_output_head(wg, bg, wo, bo, hf, hb);
    CHECK(max_abs_gap(r.h_s, ref.h_s) < 1e-13);
    CHECK(max_abs_gap(r.logits, ref.logits) < 1e-13);
    auto loss = [&] {
        const testing::RefHead q = testing::ref_output_head(wg, bg, wo, bo, hf, hb);
        return linner(up_logits, q.logits) + linner(up_hs, q.h_s);
    };
    CHECK(max_fd_error(loss, wg.span(), dwg.span()) < 1e-6);
    CHECK(max_fd_error(loss, bg.span(), dbg.span()) < 1e-6);
    CHECK(max_fd_error(loss, wo.span(), dwo.span()) < 1e-6);
    CHECK(max_fd_error(loss, bo.span(), dbo.span()) < 1e-6);
    CHECK(max_fd_error(loss, hf.span(), dhf.span()) < 1e-6);
    CHECK(max_fd_error(loss, hb.span(), dhb.span()) < 1e-6);
}

TEST_CASE("nll of equal logits is log of the class count") {
    const NllResult r = nll_loss(Vector(4, 0.7), 2);
    CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("nll in the far tail keeps its precision") {
    const NllResult r = nll_loss(Vector{10.0, -10.0}, 0);
    CHECK(r.loss == doctest::Approx(2.0611536181902037e-09).epsilon(1e-12));
}

TEST_CASE("nll gradient is softmax minus one-hot and sums to zero") {
    SeededRng rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        Vector logits = random_vector(rng, 1 + rng.index(8), 4.0);
        const std::size_t target = rng.index(logits.dim());
        const NllResult r = nll_loss(logits, target);
        CHECK(std::abs(r.loss - static_cast<double>(testing::ref_nll(logits, target))) < 1e-13);
        CHECK(r.loss >= 0.0);
        double total = 0.0;
        for (double g : r.d_logits) {
            total += g;
        }
        CHECK(std::abs(total) < 1e-12);
        auto loss = [&] { return testing::ref_nll(logits, target); };
        CHECK(max_fd_error(loss, logits.span(), r.d_logits.span()) < 1e-6);
    }
    CHECK_THROWS_AS((void)nll_loss(Vector(3), 3), InputError);
}
