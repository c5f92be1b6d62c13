#pragma once

// Differentiable building blocks of the generator. Every forward returns the
// activations it needs for an exact backward pass in a cache struct. Backward
// functions ACCUMULATE (+=) into the gradient arguments; callers zero them.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "faegen/linalg.hpp"

namespace faegen {

// How a learned square factor matrix is constrained.
enum class FactorShape { full, diagonal };

// ---------------------------------------------------------------------------
// Factored linear map: out = U * Sigma * V * h.

struct FactoredLinearCache {
    Vector h;
    Vector vh;  // V h
    Vector svh; // Sigma V h
};

struct FactoredLinearResult {
    Vector out;
    FactoredLinearCache cache;
};

struct FactoredLinearGrads {
    Matrix d_u;
    Matrix d_sigma;
    Matrix d_v;
    Vector d_h;
};

FactoredLinearResult factored_linear_forward(const Matrix& u, const Matrix& sigma, const Matrix& v, const Vector& h);

// Any of the output pointers may be null when that gradient is not wanted.
// In diagonal mode only the diagonal of d_sigma is touched.
void factored_linear_backward(const Matrix& u, const Matrix& sigma, const Matrix& v, const FactoredLinearCache& cache,
                              const Vector& d_out, Matrix* d_u, Matrix* d_sigma, Matrix* d_v, Vector* d_h,
                              FactorShape shape = FactorShape::full);

FactoredLinearGrads factored_linear_backward(const Matrix& u, const Matrix& sigma, const Matrix& v,
                                             const FactoredLinearCache& cache, const Vector& d_out,
                                             FactorShape shape = FactorShape::full);

// ---------------------------------------------------------------------------
// Additive attention over a set of view vectors:
//   a_j = Wa tanh(Wv v_j + Wz h_prev),  alpha = softmax(a),  h_a = sum_j alpha_j v_j
// Wa is 1 x attn, Wv is attn x view_dim, Wz is attn x state_dim.

struct AttentionCache {
    Vector h_prev;
    std::vector<Vector> act; // tanh(Wv v_j + Wz h_prev), one per view
    Vector alpha;
};

struct AttentionResult {
    Vector alpha;
    Vector h_a;
    AttentionCache cache;
};

struct AttentionGrads {
    Matrix d_wa;
    Matrix d_wv;
    Matrix d_wz;
    std::vector<Vector> d_views;
    Vector d_h_prev;
};

AttentionResult attention_forward(const Matrix& wa, const Matrix& wv, const Matrix& wz,
                                  std::span<const Vector> views, const Vector& h_prev);

// Zero-initialised gradient holder shaped for the given operands.
AttentionGrads attention_grads_like(const Matrix& wa, const Matrix& wv, const Matrix& wz,
                                    std::span<const Vector> views, const Vector& h_prev);

// d_alpha may be empty (no upstream gradient on the weights themselves).
void attention_backward(const Matrix& wa, const Matrix& wv, const Matrix& wz, std::span<const Vector> views,
                        const AttentionCache& cache, const Vector& d_alpha, const Vector& d_h_a,
                        AttentionGrads& grads);

// ---------------------------------------------------------------------------
// LSTM cell. Gates read the concatenation [input ; h_prev].

struct LstmCellParams {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    Matrix w_i, w_f, w_o, w_g; // hidden x (input + hidden)
    Vector b_i, b_f, b_o, b_g; // hidden

    LstmCellParams() = default;
    LstmCellParams(std::size_t input, std::size_t hidden);
    void set_zero();
};

struct LstmCache {
    Vector joined; // [input ; h_prev]
    Vector i, f, o, g;
    Vector c_prev;
    Vector tanh_c;
};

struct LstmStep {
    Vector h;
    Vector c;
    LstmCache cache;
};

LstmStep lstm_cell_forward(const LstmCellParams& p, const Vector& input, const Vector& h_prev, const Vector& c_prev);

void lstm_cell_backward(const LstmCellParams& p, const LstmCache& cache, const Vector& dh, const Vector& dc,
                        LstmCellParams& d_params, Vector& d_input, Vector& d_h_prev, Vector& d_c_prev);

// ---------------------------------------------------------------------------
// Output head: h_s = tanh(Wg [h_fwd ; h_bwd] + bg), logits = Wo h_s + bo.

struct OutputHeadCache {
    Vector joined;
    Vector h_s;
};

struct OutputHeadResult {
    Vector h_s;
    Vector logits;
    OutputHeadCache cache;
};

OutputHeadResult combine_output_forward(const Matrix& wg, const Vector& bg, const Matrix& wo, const Vector& bo,
                                        const Vector& h_fwd, const Vector& h_bwd);

// d_h_s is any gradient reaching h_s from outside the head (may be empty).
// d_h_fwd and d_h_bwd accumulate.
void combine_output_backward(const Matrix& wg, const Matrix& wo, const OutputHeadCache& cache, const Vector& d_h_s,
                             const Vector& d_logits, Matrix& d_wg, Vector& d_bg, Matrix& d_wo, Vector& d_bo,
                             Vector& d_h_fwd, Vector& d_h_bwd);

// ---------------------------------------------------------------------------

struct NllResult {
    double loss;
    Vector d_logits;
};

// -log softmax(logits)[target] and its gradient softmax(logits) - one_hot(target).
NllResult nll_loss(const Vector& logits, std::size_t target);

} // namespace faegen
