#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "driftkd/numerics.hpp"

namespace driftkd {

struct NetworkConfig {
    int input_dim = 0;
    std::vector<int> hidden{100, 50, 20};
    int num_classes = 6;
};

/// Fully connected ReLU network with a linear output layer producing logits.
/// Layer l maps rows as  h_{l+1} = relu(h_l W_l' + b_l'), the last layer
/// without the ReLU.
struct Network {
    struct Layer {
        Mat weight;  ///< out x in
        Vec bias;    ///< out
    };
    std::vector<Layer> layers;

    int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().weight.rows()); }
    std::size_t parameter_count() const;

    bool operator==(const Network& o) const;
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

/// Options for the distillation loss on the student side. The default is
/// the plain form: student logits are not scaled. The conventional variant
/// divides student logits by `student_temperature` and scales the loss by
/// its square.
struct SoftLossOptions {
    double student_temperature = 1.0;
    bool scale_by_t_squared = false;
};

struct TrainResult {
    Network net;
    std::vector<double> loss_trace;  ///< mean mini-batch loss per epoch
};

/// He-normal weights (variance 2 / fan_in), zero biases.
Network init_network(const NetworkConfig& cfg, std::uint64_t seed);

/// Row-wise logits, n x K.
Mat forward_logits(const Network& net, const Mat& X);

/// Max-subtracted softmax of one logit vector.
Vec softmax(const Vec& z);
/// Row-wise softmax of a logit matrix, with logits divided by `temperature`.
Mat softmax_rows(const Mat& logits, double temperature = 1.0);

inline constexpr double kProbClamp = 1e-15;

double cross_entropy_hard(const Vec& probs, int label);
/// Throws when `target` does not sum to 1 within 1e-6.
double cross_entropy_soft(const Vec& probs, const Vec& target);

/// Builds an n x K one-hot matrix. Throws on labels outside [0, K).
Mat one_hot(std::span<const int> labels, int num_classes);

// ---- loss specification and gradients ----

struct HardLabels {
    std::vector<int> labels;
};
struct SoftTargets {
    Mat targets;  ///< n x K distributions
    SoftLossOptions options{};
};
/// 0.5 * ||logits - target||^2, averaged over rows. Used for gradient tests.
struct SquaredError {
    Mat targets;
};
using LossSpec = std::variant<HardLabels, SoftTargets, SquaredError>;

struct Gradients {
    std::vector<Network::Layer> layers;
};

/// Mean loss over the rows of X.
double evaluate_loss(const Network& net, const Mat& X, const LossSpec& loss);
/// Mean loss and its gradient with respect to every parameter.
double loss_and_gradient(const Network& net, const Mat& X, const LossSpec& loss, Gradients& grad);

/// Max relative error between analytic and central-difference gradients.
double gradient_check(const Network& net, const Mat& X, const LossSpec& loss, double step = 1e-5);

// ---- training ----

/// Mini-batch Adam on mean hard-label cross-entropy. Rows are reshuffled
/// every epoch from `cfg.seed`. Throws TrainingError on a non-finite loss.
TrainResult train_supervised(Network net, const Mat& X, std::span<const int> labels, const TrainConfig& cfg);

/// As train_supervised, against per-row target distributions.
TrainResult train_soft(Network net, const Mat& X, const Mat& targets, const TrainConfig& cfg,
                       const SoftLossOptions& options = {});

Mat predict_proba(const Network& net, const Mat& X);
/// Row argmax; ties go to the lowest class index.
std::vector<int> argmax_rows(const Mat& P);
std::vector<int> predict_labels(const Network& net, const Mat& X);

void save_network(std::ostream& out, const Network& net);
Network load_network(std::istream& in);

}  // namespace driftkd
