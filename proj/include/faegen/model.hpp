#pragma once

// The generator network: view encoding, attention, the two factored-embedding
// LSTM recurrences, the output head, and backpropagation through time.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "faegen/corpus.hpp"
#include "faegen/layers.hpp"
#include "faegen/linalg.hpp"

namespace faegen {

// factored: U diag(y) V h.  plain: W_plain h.  mean_pool: one slot holding
// the mean of the plain encodings.
enum class AttentionMode { factored, plain, mean_pool };
// factored: A Sigma_k B x.  shared: A B x, no topic dependence.
enum class EmbeddingMode { factored, shared };

std::string_view to_string(AttentionMode m);
std::string_view to_string(EmbeddingMode m);
std::string_view to_string(FactorShape s);
AttentionMode parse_attention_mode(std::string_view s);
EmbeddingMode parse_embedding_mode(std::string_view s);
FactorShape parse_factor_shape(std::string_view s);

struct FaeGenConfig {
    std::size_t hidden_dim = 512;
    std::size_t feature_dim = 32;
    std::size_t num_views = 5; // also the view factor size
    std::size_t topic_factor_dim = 10;
    std::size_t num_topics = 4;
    std::size_t vocab_size = 0;
    std::size_t max_len = 30;
    AttentionMode attention_mode = AttentionMode::factored;
    EmbeddingMode embedding_mode = EmbeddingMode::factored;
    FactorShape topic_factor_shape = FactorShape::full;

    void validate() const;
    bool operator==(const FaeGenConfig&) const = default;
};

// Parameters of one recurrence direction.
struct DirectionParams {
    Matrix a;                  // hidden x F_s
    Matrix b;                  // F_s x vocab
    std::vector<Matrix> sigma; // one F_s x F_s factor per topic
    Matrix ws;                 // hidden x hidden, applied to the attention feature
    LstmCellParams lstm;       // input = [embedding ; Ws h_a], 2*hidden wide
};

struct FaeGenParams {
    Matrix u;       // hidden x F_v
    Matrix v;       // F_v x D_v
    Matrix w_plain; // hidden x D_v
    Matrix wa;      // 1 x hidden
    Matrix wv;      // hidden x hidden
    Matrix wz;      // hidden x hidden
    DirectionParams fwd;
    DirectionParams bwd;
    Matrix wg; // hidden x 2*hidden
    Vector bg;
    Matrix wo; // vocab x hidden
    Vector bo;

    // Correctly shaped, all zero.
    static FaeGenParams zeros(const FaeGenConfig& config);
    void set_zero();
};

struct TensorRef {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    std::span<double> values;
};

struct ConstTensorRef {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    std::span<const double> values;
};

// Every learned tensor, in a fixed order. Vectors appear as rows x 1.
std::vector<TensorRef> named_tensors(FaeGenParams& params);
std::vector<ConstTensorRef> named_tensors(const FaeGenParams& params);

// Uniform(-scale, scale) everywhere except the topic factors, which start at
// I + 0.01 * N(0, 1) (diagonal only in diagonal mode).
inline constexpr double kDefaultInitScale = 0.08;
FaeGenParams init_params(const FaeGenConfig& config, std::uint64_t seed, double scale = kDefaultInitScale);

// ---------------------------------------------------------------------------

struct EncodedViews {
    std::vector<Vector> views;
    // factored mode
    std::vector<Matrix> view_sigmas;
    std::vector<FactoredLinearCache> factored;
    // plain / mean_pool modes
    std::vector<Vector> inputs;
};

EncodedViews encode_views(const FaeGenParams& params, const FaeGenConfig& config,
                          std::span<const ViewObservation> observations);

void encode_views_backward(const FaeGenParams& params, const FaeGenConfig& config, const EncodedViews& encoded,
                           std::span<const Vector> d_views, FaeGenParams& grads);

struct DecoderState {
    Vector h_s; // combined hidden feature fed to the next attention step
    Vector h_fwd, c_fwd;
    Vector h_bwd, c_bwd;

    static DecoderState initial(const FaeGenConfig& config);
};

struct StepCache {
    std::size_t prev_token = kBos;
    AttentionCache attention;
    Vector h_a;
    FactoredLinearCache embed_fwd, embed_bwd;
    LstmCache lstm_fwd, lstm_bwd;
    OutputHeadCache head;
};

struct StepOutput {
    Vector logits;
    Vector probs;
    DecoderState state;
    StepCache cache;
};

StepOutput decode_step(const FaeGenParams& params, const FaeGenConfig& config, std::size_t topic,
                       std::size_t prev_token, const DecoderState& state, const EncodedViews& encoded);

struct ForwardTrace {
    std::size_t topic = 0;
    std::vector<std::size_t> tokens;
    EncodedViews encoded;
    std::vector<StepCache> steps;
    std::vector<Vector> probs;
    std::vector<double> step_losses;
};

struct ForwardResult {
    double loss = 0.0;
    ForwardTrace trace;
};

// Teacher-forced negative log-likelihood of `tokens` (starting after <bos>).
ForwardResult forward_nll(const FaeGenParams& params, const FaeGenConfig& config,
                          std::span<const ViewObservation> observations, std::size_t topic,
                          std::span<const std::size_t> tokens);

// Accumulates scale * d(loss)/d(params) into grads. The trace must come from
// forward_nll on the same parameter values; this is not checked.
void backward(const FaeGenParams& params, const FaeGenConfig& config, const ForwardTrace& trace,
              FaeGenParams& grads, double scale = 1.0);

FaeGenParams backward(const FaeGenParams& params, const FaeGenConfig& config, const ForwardTrace& trace);

struct SampleLoss {
    double loss = 0.0;
    std::size_t num_tokens = 0;
    std::vector<ForwardTrace> traces;
};

// Sum of forward_nll over every topic the sample carries.
SampleLoss sample_loss_all_topics(const FaeGenParams& params, const FaeGenConfig& config,
                                  const EncodedSample& sample);

} // namespace faegen
