#include "driftkd/fcnn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "driftkd/errors.hpp"
#include "driftkd/serialize.hpp"

namespace driftkd {

namespace {

struct ForwardCache {
    std::vector<Mat> activations;  // input and every hidden activation
    std::vector<Mat> pre;          // pre-activation of every layer
};

Mat affine(const Network::Layer& layer, const Mat& H) {
    Mat Z = H * layer.weight.transpose();
    Z.rowwise() += layer.bias.transpose();
    return Z;
}

Mat forward(const Network& net, const Mat& X, ForwardCache* cache) {
    if (net.layers.empty()) throw NumericsError("forward: network has no layers");
    if (X.cols() != net.input_dim())
        throw NumericsError("forward: expected " + std::to_string(net.input_dim()) + " inputs, got " +
                            std::to_string(X.cols()));
    Mat H = X;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        Mat Z = affine(net.layers[l], H);
        if (cache) {
            cache->activations.push_back(std::move(H));
            cache->pre.push_back(Z);
        }
        if (l + 1 == net.layers.size()) return Z;
        H = Z.cwiseMax(0.0);
    }
    return {};
}

// Mean loss and d(loss)/d(logits) for a given specification.
double output_loss(const Mat& logits, const LossSpec& spec, Mat* dlogits) {
    const double n = static_cast<double>(logits.rows());
    return std::visit(
        [&](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, SquaredError>) {
                if (s.targets.rows() != logits.rows() || s.targets.cols() != logits.cols())
                    throw NumericsError("squared loss: target shape mismatch");
                const Mat diff = logits - s.targets;
                if (dlogits) *dlogits = diff / n;
                return 0.5 * diff.squaredNorm() / n;
            } else {
                Mat targets;
                double temperature = 1.0;
                double scale = 1.0;
                if constexpr (std::is_same_v<T, HardLabels>) {
                    if (static_cast<Eigen::Index>(s.labels.size()) != logits.rows())
                        throw NumericsError("hard loss: label count mismatch");
                    targets = one_hot(s.labels, static_cast<int>(logits.cols()));
                } else {
                    if (s.targets.rows() != logits.rows() || s.targets.cols() != logits.cols())
                        throw NumericsError("soft loss: target shape mismatch");
                    targets = s.targets;
                    temperature = s.options.student_temperature;
                    if (s.options.scale_by_t_squared) scale = temperature * temperature;
                }
                const Mat P = softmax_rows(logits, temperature);
                double total = 0;
                for (Eigen::Index i = 0; i < P.rows(); ++i) {
                    double row = 0;
                    for (Eigen::Index k = 0; k < P.cols(); ++k)
                        row -= targets(i, k) * std::log(std::max(P(i, k), kProbClamp));
                    total += row;
                }
                if (dlogits) *dlogits = (P - targets) * (scale / (temperature * n));
                return scale * total / n;
            }
        },
        spec);
}

std::size_t rows_of(const LossSpec& spec) {
    return std::visit(
        [](const auto& s) -> std::size_t {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, HardLabels>) return s.labels.size();
            else return static_cast<std::size_t>(s.targets.rows());
        },
        spec);
}

LossSpec subset(const LossSpec& spec, const std::vector<Eigen::Index>& idx) {
    return std::visit(
        [&](const auto& s) -> LossSpec {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, HardLabels>) {
                HardLabels out;
                out.labels.reserve(idx.size());
                for (auto i : idx) out.labels.push_back(s.labels[static_cast<std::size_t>(i)]);
                return out;
            } else {
                T out = s;
                out.targets = s.targets(idx, Eigen::all);
                return out;
            }
        },
        spec);
}

struct AdamState {
    std::vector<Network::Layer> m, v;
};

Network::Layer zeros_like(const Network::Layer& l) {
    return {Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())};
}

TrainResult train(Network net, const Mat& X, const LossSpec& loss, const TrainConfig& cfg) {
    if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0))
        throw TrainingError("train: invalid training configuration");
    const std::size_t n = rows_of(loss);
    if (static_cast<Eigen::Index>(n) != X.rows()) throw TrainingError("train: row count mismatch");
    if (X.cols() != net.input_dim()) throw TrainingError("train: input dimension mismatch");

    TrainResult result;
    if (n == 0 || cfg.epochs == 0) {
        result.net = std::move(net);
        return result;
    }

    AdamState adam;
    for (const auto& l : net.layers) {
        adam.m.push_back(zeros_like(l));
        adam.v.push_back(zeros_like(l));
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Gradients grad;
    long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Mat Xb = X(idx, Eigen::all);
            const double batch_loss = loss_and_gradient(net, Xb, subset(loss, idx), grad);
            if (!std::isfinite(batch_loss))
                throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            epoch_loss += batch_loss * static_cast<double>(stop - start);

            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
                    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
                    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
                    param.array() -= cfg.learning_rate * (m.array() / c1) /
                                     ((v.array() / c2).sqrt() + cfg.adam_eps);
                };
                update(net.layers[l].weight, adam.m[l].weight, adam.v[l].weight, grad.layers[l].weight);
                update(net.layers[l].bias, adam.m[l].bias, adam.v[l].bias, grad.layers[l].bias);
            }
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(n));
    }
    for (const auto& l : net.layers)
        if (!l.weight.allFinite() || !l.bias.allFinite()) throw TrainingError("training produced non-finite parameters");
    result.net = std::move(net);
    return result;
}

}  // namespace

std::size_t Network::parameter_count() const {
    std::size_t c = 0;
    for (const auto& l : layers) c += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return c;
}

bool Network::operator==(const Network& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& a = layers[l];
        const auto& b = o.layers[l];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size())
            return false;
        if (a.weight != b.weight || a.bias != b.bias) return false;
    }
    return true;
}

Network init_network(const NetworkConfig& cfg, std::uint64_t seed) {
    if (cfg.input_dim < 1 || cfg.num_classes < 1) throw NumericsError("init_network: invalid configuration");
    std::vector<int> sizes{cfg.input_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(cfg.num_classes);

    std::mt19937_64 rng(seed);
    Network net;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l];
        const int fan_out = sizes[l + 1];
        if (fan_out < 1) throw NumericsError("init_network: empty layer");
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        Network::Layer layer{Mat(fan_out, fan_in), Vec::Zero(fan_out)};
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) layer.weight(i, j) = dist(rng);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Mat forward_logits(const Network& net, const Mat& X) { return forward(net, X, nullptr); }

Vec softmax(const Vec& z) {
    const Vec e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

Mat softmax_rows(const Mat& logits, double temperature) {
    if (!(temperature > 0)) throw NumericsError("softmax: temperature must be positive");
    Mat scaled = logits / temperature;
    const Vec row_max = scaled.rowwise().maxCoeff();
    scaled.colwise() -= row_max;
    Mat E = scaled.array().exp();
    const Vec sums = E.rowwise().sum();
    return E.array().colwise() / sums.array();
}

double cross_entropy_hard(const Vec& probs, int label) {
    if (label < 0 || label >= probs.size()) throw NumericsError("cross_entropy_hard: label out of range");
    return -std::log(std::max(probs[label], kProbClamp));
}

double cross_entropy_soft(const Vec& probs, const Vec& target) {
    if (probs.size() != target.size()) throw NumericsError("cross_entropy_soft: size mismatch");
    if (std::abs(target.sum() - 1.0) > 1e-6) throw NumericsError("cross_entropy_soft: target is not a distribution");
    double out = 0;
    for (Eigen::Index k = 0; k < probs.size(); ++k) out -= target[k] * std::log(std::max(probs[k], kProbClamp));
    return out;
}

Mat one_hot(std::span<const int> labels, int num_classes) {
    Mat Y = Mat::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw NumericsError("one_hot: label " + std::to_string(labels[i]) + " out of range");
        Y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return Y;
}

double evaluate_loss(const Network& net, const Mat& X, const LossSpec& loss) {
    return output_loss(forward(net, X, nullptr), loss, nullptr);
}

double loss_and_gradient(const Network& net, const Mat& X, const LossSpec& loss, Gradients& grad) {
    ForwardCache cache;
    const Mat logits = forward(net, X, &cache);
    Mat dZ;
    const double value = output_loss(logits, loss, &dZ);

    grad.layers.resize(net.layers.size());
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        grad.layers[l].weight = dZ.transpose() * cache.activations[l];
        grad.layers[l].bias = dZ.colwise().sum().transpose();
        if (l == 0) break;
        Mat dH = dZ * net.layers[l].weight;
        dZ = dH.cwiseProduct((cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
    return value;
}

double gradient_check(const Network& net, const Mat& X, const LossSpec& loss, double step) {
    Gradients analytic;
    loss_and_gradient(net, X, loss, analytic);

    Network probe = net;
    double worst = 0;
    auto check = [&](double& param, double g) {
        const double saved = param;
        param = saved + step;
        const double up = evaluate_loss(probe, X, loss);
        param = saved - step;
        const double down = evaluate_loss(probe, X, loss);
        param = saved;
        const double numeric = (up - down) / (2 * step);
        const double denom = std::max({std::abs(g), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(g - numeric) / denom);
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        auto& layer = probe.layers[l];
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) check(layer.weight(i, j), analytic.layers[l].weight(i, j));
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check(layer.bias[i], analytic.layers[l].bias[i]);
    }
    return worst;
}

TrainResult train_supervised(Network net, const Mat& X, std::span<const int> labels, const TrainConfig& cfg) {
    return train(std::move(net), X, HardLabels{{labels.begin(), labels.end()}}, cfg);
}

TrainResult train_soft(Network net, const Mat& X, const Mat& targets, const TrainConfig& cfg,
                       const SoftLossOptions& options) {
    if (targets.cols() != net.output_dim()) throw TrainingError("train_soft: target width mismatch");
    return train(std::move(net), X, SoftTargets{targets, options}, cfg);
}

Mat predict_proba(const Network& net, const Mat& X) { return softmax_rows(forward_logits(net, X)); }

std::vector<int> argmax_rows(const Mat& P) {
    std::vector<int> out(static_cast<std::size_t>(P.rows()));
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        int best = 0;
        for (Eigen::Index k = 1; k < P.cols(); ++k)
            if (P(i, k) > P(i, best)) best = static_cast<int>(k);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

std::vector<int> predict_labels(const Network& net, const Mat& X) { return argmax_rows(predict_proba(net, X)); }

void save_network(std::ostream& out, const Network& net) {
    serial::write_header(out, "network");
    serial::write_scalar(out, "layers", static_cast<double>(net.layers.size()));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        serial::write_matrix(out, "weight" + std::to_string(l), net.layers[l].weight);
        serial::write_matrix(out, "bias" + std::to_string(l), net.layers[l].bias.transpose());
    }
}

Network load_network(std::istream& in) {
    serial::read_header(in, "network");
    const auto count = static_cast<std::size_t>(serial::read_scalar(in, "layers"));
    Network net;
    for (std::size_t l = 0; l < count; ++l) {
        Network::Layer layer;
        layer.weight = serial::read_matrix(in, "weight" + std::to_string(l));
        layer.bias = serial::read_matrix(in, "bias" + std::to_string(l)).transpose();
        if (layer.bias.size() != layer.weight.rows()) throw DataError("network: bias/weight shape mismatch");
        if (l > 0 && layer.weight.cols() != net.layers.back().weight.rows())
            throw DataError("network: layer shapes do not chain");
        net.layers.push_back(std::move(layer));
    }
    if (net.layers.empty()) throw DataError("network: no layers");
    return net;
}

}  // namespace driftkd
