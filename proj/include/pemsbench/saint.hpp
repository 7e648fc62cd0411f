#pragma once

#include "pemsbench/table.hpp"
#include "pemsbench/tape.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace pemsbench {

namespace rng {
class Stream;
}

// Tabular transformer for supervised regression: per-feature scalar
// embeddings, a learned CLS token, n_layers pairs of (token self-attention,
// intersample attention) blocks, and a two-layer head read off the CLS
// token. Trained with AdamW on MSE over standardized features and target.
struct SaintConfig {
    int d_model = 32;
    int n_heads = 8;
    int n_layers = 3;
    int batch_size = 32;
    int ff_hidden = 64;
    int head_hidden = 100;
    // Per-head projection width of the intersample attention (which runs
    // over the concatenated (n+1)*d_model row vectors). 0 means d_model.
    int intersample_head_width = 0;

    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    double dropout = 0.0; // applied to attention outputs and FFN hidden

    int train_epochs = 100;
    // When set, the exact number of optimizer steps (0 is legal and means
    // "return the initialized model"); otherwise train_epochs decides.
    std::optional<std::int64_t> train_steps;
    std::uint64_t seed = 0;

    void validate() const;
    int resolved_intersample_width() const {
        return intersample_head_width > 0 ? intersample_head_width : d_model;
    }
};

struct SaintModel {
    SaintConfig config;
    int n_features = 0;

    std::vector<Parameter> params;
    std::unordered_map<std::string, size_t> param_index;

    // z-score statistics captured from the training split; identity for a
    // freshly initialized model.
    std::vector<double> feat_mean, feat_std;
    double target_mean = 0.0;
    double target_std = 1.0;

    Parameter& param(const std::string& name);
    const Parameter& param(const std::string& name) const;
    void zero_grads();
    std::int64_t parameter_count() const;
};

// Fresh model with seeded scaled-uniform (Glorot) weights, zero biases,
// unit layer-norm gains. Every tensor draws from its own name-keyed RNG
// stream, so the initialization is stable under parameter-list changes.
SaintModel init_saint(const SaintConfig& config, int n_features);

// Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V with a
// max-subtracted softmax. Q is [m, d_k], K is [n, d_k], V is [n, d_v].
// When `weights` is non-null the row-stochastic weight matrix is stored
// there. Throws NumericError on dimension mismatch.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 Tensor* weights = nullptr);

// Builds the forward graph for one batch of standardized rows (row-major
// [b, n_features]) and returns the prediction node of shape [b, 1].
// Training mode enables dropout (when configured); `drop_rng` supplies the
// masks and may be null in eval mode.
Tape::Id saint_forward_graph(Tape& tape, const SaintModel& model,
                             const double* rows_std, int batch,
                             bool training = false,
                             rng::Stream* drop_rng = nullptr);

// Forward pass on standardized rows; returns standardized predictions,
// one per row. The whole input is treated as a single batch.
std::vector<double> saint_forward(const SaintModel& model,
                                  const std::vector<double>& rows_std,
                                  int batch);

// Raw-unit prediction over a table: standardizes features with the model's
// training statistics, runs batches of config.batch_size in row order, and
// maps predictions back to target units.
std::vector<double> predict_saint(const SaintModel& model, const Table& table);

struct SaintTrainResult {
    SaintModel model;
    std::vector<double> loss_curve; // per-step training MSE (standardized)
};

// Trains on every column except `target` and `excluded`. The table must be
// fully present (no masked cells) with at least 2 rows.
SaintTrainResult train_saint(const Table& table, const std::string& target,
                             const SaintConfig& config,
                             const std::vector<std::string>& excluded = {});

struct GradCheckOptions {
    double epsilon = 1e-5;
    std::uint64_t seed = 0;
    // When set, every analytic gradient of this parameter tensor is scaled
    // by corrupt_scale before comparison (fault injection for testing the
    // checker itself).
    std::string corrupt_param;
    double corrupt_scale = 1.0;
};

// Central-difference gradient verification of the full training loss.
// Samples first/middle/last plus one seeded index from every parameter
// tensor and returns the maximum relative error
// |g_a - g_n| / max(|g_a|, |g_n|, 1e-8). rows_std is [b, n_features],
// targets_std is [b], both already standardized.
double gradient_check(SaintModel& model, const std::vector<double>& rows_std,
                      const std::vector<double>& targets_std, int batch,
                      const GradCheckOptions& options = {});

std::string saint_to_json(const SaintModel& model);
SaintModel saint_from_json(const std::string& text);

void save_loss_curve_csv(const std::vector<double>& curve,
                         const std::string& path);

} // namespace pemsbench
