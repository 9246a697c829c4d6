#pragma once

#include "rulprune/io.hpp"
#include "rulprune/series.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace rulprune {

struct PredictorConfig {
    int embed_dim = 64;
    int heads = 4;
    int layers = 4;
    int ffn_dim = 0;  // 0 selects 4 * embed_dim
    int head_dim1 = 50;
    int head_dim2 = 10;
    int input_channels = 1;
    int seq_len = 50;
    bool causal_mask = true;
    double ln_eps = 1e-5;

    int ffn() const noexcept { return ffn_dim > 0 ? ffn_dim : 4 * embed_dim; }
    void validate() const;
};

struct LayerParams {
    Eigen::MatrixXd wq, wk, wv, wo;  // D x D; head h owns columns [h*dk, (h+1)*dk) of wq/wk/wv
    Eigen::MatrixXd ffn_w1, ffn_b1;  // D x F, 1 x F
    Eigen::MatrixXd ffn_w2, ffn_b2;  // F x D, 1 x D
    Eigen::MatrixXd ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // 1 x D
};

/// Every trainable tensor. Biases and gains are stored as 1 x n row matrices.
struct Parameters {
    Eigen::MatrixXd embed_w;  // D x C
    Eigen::MatrixXd embed_b;  // 1 x D
    std::vector<LayerParams> layers;
    Eigen::MatrixXd head_w1, head_b1;  // D x d1, 1 x d1
    Eigen::MatrixXd head_w2, head_b2;  // d1 x d2, 1 x d2
    Eigen::MatrixXd head_w3, head_b3;  // d2 x 1, 1 x 1
};

/// Calls fn(name, matrix) for every parameter group in a fixed order.
/// Layer groups are named "layer<i>.<name>" with i counted from 1.
template <typename P, typename Fn>
void for_each_group(P& params, Fn&& fn) {
    fn(std::string("embed.W"), params.embed_w);
    fn(std::string("embed.b"), params.embed_b);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& l = params.layers[i];
        const std::string p = "layer" + std::to_string(i + 1) + ".";
        fn(p + "Wq", l.wq);
        fn(p + "Wk", l.wk);
        fn(p + "Wv", l.wv);
        fn(p + "Wo", l.wo);
        fn(p + "ffn.W1", l.ffn_w1);
        fn(p + "ffn.b1", l.ffn_b1);
        fn(p + "ffn.W2", l.ffn_w2);
        fn(p + "ffn.b2", l.ffn_b2);
        fn(p + "ln1.gain", l.ln1_gain);
        fn(p + "ln1.bias", l.ln1_bias);
        fn(p + "ln2.gain", l.ln2_gain);
        fn(p + "ln2.bias", l.ln2_bias);
    }
    fn(std::string("head.W1"), params.head_w1);
    fn(std::string("head.b1"), params.head_b1);
    fn(std::string("head.W2"), params.head_w2);
    fn(std::string("head.b2"), params.head_b2);
    fn(std::string("head.W3"), params.head_w3);
    fn(std::string("head.b3"), params.head_b3);
}

/// Same shapes as p, all zeros.
Parameters zeros_like(const Parameters& p);

struct PredictorModel {
    PredictorConfig config;
    Parameters params;
    std::set<std::string> frozen;  // parameter group names excluded from updates
    double output_scale = 1.0;     // predictions are forward() * output_scale

    bool trainable(const std::string& group) const { return frozen.count(group) == 0; }
};

/// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit layer-norm gains.
PredictorModel init_model(const PredictorConfig& config, std::uint64_t seed);

/// Marks every group of layers 1..count as frozen. count > layers throws ArgumentError.
void freeze_first_layers(PredictorModel& model, int count);

struct Sample {
    Eigen::MatrixXd x;  // L x C, normalized sensors only
    double y = 0.0;
};

Eigen::MatrixXd embed_signal(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b);

/// Scaled dot-product attention. When weights is non-null it receives the softmax matrix.
Eigen::MatrixXd attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                          bool causal_mask, Eigen::MatrixXd* weights = nullptr);

/// Multi-head attention including the output projection, without the residual.
Eigen::MatrixXd mha(const Eigen::MatrixXd& x, const LayerParams& layer, int heads, bool causal_mask);

/// Per-row normalization followed by gain and bias.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gain, const Eigen::MatrixXd& bias,
                           double eps);

/// Representation after the last layer, before pooling (L x D).
Eigen::MatrixXd encode(const PredictorModel& model, const Eigen::MatrixXd& x);

/// Raw network output for one window (not multiplied by output_scale).
double transformer_forward(const PredictorModel& model, const Eigen::MatrixXd& x);

/// Predictions in label units (forward * output_scale), one per sample.
std::vector<double> predict(const PredictorModel& model, std::span<const Sample> samples);

/// Mean squared error plus beta * ||adapt - anchor||^2.
double loss_total(std::span<const double> preds, std::span<const double> labels, std::span<const double> adapt,
                  std::span<const double> anchor, double beta);

/// Model form: the anchor term covers trainable groups only. anchor may be null (no anchor term).
double loss_total(std::span<const double> preds, std::span<const double> labels, const PredictorModel& adapt,
                  const Parameters* anchor, double beta);

struct Gradients {
    Parameters grad;  // zero for frozen groups
    double loss = 0.0;
    double mse = 0.0;
};

/// Gradient of loss_total over the batch with labels divided by output_scale.
/// Per-sample terms are accumulated in sample order.
Gradients backward(const PredictorModel& model, std::span<const Sample> batch, const Parameters* anchor,
                   double beta);

struct TrainConfig {
    int warmup_epochs = 10;
    int patience = 10;
    double val_fraction = 0.1;
    double learning_rate = 1e-3;
    int batch_size = 32;
    double beta = 0.0;
    int freeze_first = 0;
    int max_epochs = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    PredictorModel model;  // best validation checkpoint
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    std::size_t train_size = 0;
    std::size_t val_size = 0;
};

/// Continues from model's current parameters. anchor may be null.
TrainResult train(const PredictorModel& model, std::span<const Sample> data, const TrainConfig& config,
                  const Parameters* anchor = nullptr);

/// Freezes layers 1..freeze_first and trains with the pretrained parameters as anchor.
TrainResult finetune(const PredictorModel& pretrained, std::span<const Sample> data, const TrainConfig& config);

/// Square root of the sum of squared differences over trainable groups.
double parameter_distance(const PredictorModel& a, const Parameters& b);

struct Checkpoint {
    PredictorModel model;
    std::uint64_t seed = 0;
    std::optional<NormalizerParams> normalizer;
};

io::Json to_json(const PredictorConfig& config);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Line-delimited {epoch, train_loss, val_loss, seconds}.
void write_history(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace rulprune
