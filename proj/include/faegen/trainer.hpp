#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "faegen/corpus.hpp"
#include "faegen/model.hpp"

namespace faegen {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 60;
    double clip_norm = 5.0;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t log_interval = 1; // epochs between progress callbacks

    void validate() const;
};

// Adaptive-moment optimizer state, one moment pair per parameter entry.
class AdamOptimizer {
  public:
    AdamOptimizer(const FaeGenConfig& config, const TrainConfig& train);

    // params -= lr * m_hat / (sqrt(v_hat) + eps)
    void step(FaeGenParams& params, const FaeGenParams& grads);
    std::size_t steps_taken() const { return steps_; }

  private:
    TrainConfig train_;
    FaeGenParams m_;
    FaeGenParams v_;
    std::size_t steps_ = 0;
};

double global_norm(const FaeGenParams& grads);
// Rescales grads so that their global norm is at most max_norm. Returns the
// pre-clip norm.
double clip_global_norm(FaeGenParams& grads, double max_norm);

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double mean_token_nll = 0.0;
};

struct TrainResult {
    FaeGenParams params;
    std::vector<EpochStats> log;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Per-sample updates: all topics of the sample are summed, the global
// gradient norm is clipped, then one optimizer step. Epoch order is a seeded
// Fisher-Yates shuffle. Throws NumericalError on a non-finite loss.
TrainResult train(std::span<const EncodedSample> train_set, const FaeGenConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

// Same, continuing from given parameters.
TrainResult train_from(FaeGenParams params, std::span<const EncodedSample> train_set,
                       const FaeGenConfig& model_config, const TrainConfig& train_config,
                       const EpochCallback& on_epoch = {});

// Mean per-token NLL of the data under params.
double mean_token_nll(const FaeGenParams& params, const FaeGenConfig& config, std::span<const EncodedSample> data);

// "epoch, mean per-token NLL" lines.
std::string format_loss_log(std::span<const EpochStats> log);

// ---------------------------------------------------------------------------
// Finite-difference gradient check.

struct GradCheckConfig {
    FaeGenConfig model;
    std::size_t num_observations = 3;
    std::size_t seq_len = 5; // tokens per topic, <eos> included
    std::uint64_t seed = 1;
    double fd_step = 1e-5;
    std::size_t max_entries = 200; // per group; all entries when the group is smaller
};

// Tiny dims of the reference check: hidden 8, D_v 6, vocab 20, F_v 3, F_s 4, K 2.
GradCheckConfig tiny_grad_check_config();

struct GradCheckGroup {
    std::string name;
    std::size_t entries_checked = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    // Relative gap between the library loss and the extended-precision loss
    // that the finite differences are taken on.
    double forward_rel_mismatch = 0.0;
    static constexpr double kForwardAgreement = 1e-12;

    double max_rel_error() const;
    std::vector<std::string> failing(double threshold) const;
};

// Random sample covering every topic; deterministic in seed.
EncodedSample random_sample(const FaeGenConfig& config, std::size_t num_observations, std::size_t seq_len,
                            std::uint64_t seed);

// The summed multi-topic NLL of a sample, evaluated independently of the
// library forward pass in long double.
long double extended_precision_loss(const FaeGenParams& params, const FaeGenConfig& config,
                                    const EncodedSample& sample);

// |analytic - fd| / max(1e-8, |analytic| + |fd|), maximised per group.
GradCheckReport grad_check(const GradCheckConfig& cfg);
GradCheckReport grad_check(const FaeGenParams& params, const FaeGenConfig& config, const EncodedSample& sample,
                           double fd_step, std::size_t max_entries, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    FaeGenConfig config;
    FaeGenParams params;
    Lexicon lexicon;
    std::size_t epoch = 0;
    double final_loss = 0.0;
    std::uint64_t seed = 0;
};

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

} // namespace faegen
