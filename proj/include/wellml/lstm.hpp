#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "wellml/rng.hpp"

namespace wellml {

/// Read-only view of one LSTM layer. Gate blocks are stacked in the order
/// forget, input, candidate (g), output:
///   W is 4H x D, U is 4H x H, b is 4H, all row-major.
struct LstmCellParams {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    std::span<const double> W;
    std::span<const double> U;
    std::span<const double> b;
};

/// Gate activations and new state of one cell step.
struct LstmStepResult {
    std::vector<double> f, i, g, o;
    std::vector<double> c;
    std::vector<double> tanh_c;
    std::vector<double> h;
};

LstmStepResult lstm_step(const LstmCellParams& p, std::span<const double> x, std::span<const double> h_prev,
                         std::span<const double> c_prev);

/// Stacked LSTM over a scalar sequence followed by a linear head on the last
/// layer's final hidden state. All parameters live in one flat vector so the
/// optimizer and gradient checks can treat them uniformly.
class LstmNetwork {
public:
    LstmNetwork() = default;
    LstmNetwork(std::vector<std::size_t> hidden_sizes, double dropout_rate, std::size_t input_size = 1);

    /// Uniform in [-1/sqrt(H), 1/sqrt(H)] per layer (head uses the last H),
    /// forget-gate biases set to 1.
    static LstmNetwork initialized(std::vector<std::size_t> hidden_sizes, double dropout_rate, std::uint64_t seed,
                                   std::size_t input_size = 1);

    std::size_t input_size() const noexcept { return input_size_; }
    std::size_t n_layers() const noexcept { return layers_.size(); }
    const std::vector<std::size_t>& hidden_sizes() const noexcept { return hidden_; }
    double dropout_rate() const noexcept { return dropout_; }

    LstmCellParams cell(std::size_t layer) const;

    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    std::span<const double> head_weights() const;
    double head_bias() const { return params_[head_offset_ + hidden_.back()]; }

    /// Flat offsets of one layer's W, U and b blocks.
    struct LayerOffsets {
        std::size_t W, U, b;
        bool operator==(const LayerOffsets&) const = default;
    };
    LayerOffsets offsets(std::size_t layer) const { return layers_.at(layer); }
    std::size_t head_offset() const noexcept { return head_offset_; }

    bool operator==(const LstmNetwork&) const = default;

private:
    std::size_t input_size_ = 1;
    std::vector<std::size_t> hidden_;
    double dropout_ = 0.0;
    std::vector<LayerOffsets> layers_;
    std::size_t head_offset_ = 0;
    std::vector<double> params_;
};

struct ForwardCache {
    /// inputs[layer][t] is the input vector of that layer at step t.
    std::vector<std::vector<std::vector<double>>> inputs;
    std::vector<std::vector<LstmStepResult>> steps;
    /// Inverted-dropout multipliers on the last layer's final hidden state
    /// (all 1 outside train mode).
    std::vector<double> dropout_mask;
};

struct ForwardResult {
    double prediction = 0.0;
    ForwardCache cache;
};

/// Inverted dropout: keep with probability 1 - rate, scale kept units by
/// 1/(1 - rate).
std::vector<double> dropout_mask(std::size_t size, double rate, Rng& rng);

/// `rng` is only consulted in train mode with a non-zero dropout rate.
ForwardResult forward(const LstmNetwork& net, std::span<const double> window, bool train_mode, Rng* rng = nullptr);

/// Gradient of loss w.r.t. every parameter given dloss/dprediction, by
/// backpropagation through time. Same layout as LstmNetwork::parameters().
std::vector<double> backward(const LstmNetwork& net, const ForwardCache& cache, double loss_grad);

struct AdamState {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    /// Decoupled: theta <- theta - lr * weight_decay * theta before each step.
    double weight_decay = 1e-6;
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

struct SequenceWindow {
    std::size_t well = 0;
    std::size_t target_month = 0;  // index of the predicted month
    std::vector<double> inputs;    // standardized
    double target = 0.0;           // standardized
};

struct SequenceDataset {
    std::size_t window = 6;
    double center = 0.0;
    double scale = 1.0;
    std::vector<SequenceWindow> train;
    std::vector<SequenceWindow> validation;
    std::vector<SequenceWindow> test;
    std::vector<std::size_t> skipped_wells;

    double to_raw(double standardized) const { return standardized * scale + center; }
};

/// Sliding windows (stride 1) over each well's monthly series; window
/// [t-W+1 .. t] predicts month t+1. Each well's windows are split
/// chronologically by `fractions` (floor sizes, remainder to training). The
/// scaler is fitted on the months covered by training windows only.
SequenceDataset build_sequences(const std::vector<std::vector<double>>& monthly, std::size_t window,
                                std::array<double, 3> fractions = {0.6, 0.2, 0.2});

struct LstmHyper {
    std::vector<std::size_t> hidden{45, 60};
    double dropout = 0.1;
    double learning_rate = 0.01;
    double weight_decay = 1e-6;
    std::size_t epochs = 9;
    std::size_t batch_size = 32;
    std::uint64_t seed = 121;
};

struct LstmTrainResult {
    LstmNetwork net;
    std::vector<double> train_loss;  // mean per-window MSE over each epoch
    std::vector<double> val_loss;    // full validation MSE after each epoch
};

LstmTrainResult train_lstm(const SequenceDataset& data, const LstmHyper& hyper);

double predict_lstm(const LstmNetwork& net, std::span<const double> window);

nlohmann::json lstm_to_json(const LstmNetwork& net);
LstmNetwork lstm_from_json(const nlohmann::json& doc);

}  // namespace wellml
