#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sniforge/common.hpp"
#include "sniforge/tensor.hpp"

namespace sniforge::nn {

using json = nlohmann::json;

// Reference to one trainable array of a layer.
struct Param {
    std::string name;
    std::vector<double>* value;
    std::vector<double>* grad;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool training) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual void init(Rng&) {}
    virtual std::vector<Param> params() { return {}; }
    virtual std::vector<Param> buffers() { return {}; }  // running statistics etc.
    virtual json spec() const = 0;

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

protected:
    std::string name_;
};

class Dense : public Layer {
public:
    Dense(std::size_t in, std::size_t out);
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void init(Rng& rng) override;
    std::vector<Param> params() override;
    json spec() const override { return {{"type", "dense"}, {"units", out_}}; }

private:
    std::size_t in_, out_;
    std::vector<double> w_, b_, dw_, db_;
    Tensor x_;
};

class Relu : public Layer {
public:
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    json spec() const override { return {{"type", "relu"}}; }

private:
    Tensor x_;
};

class Conv1D : public Layer {
public:
    Conv1D(std::size_t kernel, std::size_t in_channels, std::size_t filters);
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void init(Rng& rng) override;
    std::vector<Param> params() override;
    json spec() const override { return {{"type", "conv1d"}, {"kernel", kernel_}, {"filters", filters_}}; }

    std::size_t kernel() const { return kernel_; }

private:
    std::size_t kernel_, in_c_, filters_;
    std::vector<double> w_, b_, dw_, db_;  // w: [kernel][in_c][filters]
    Tensor x_;
};

// Normalizes per channel over batch (rank 2) or batch x time (rank 3).
// Population statistics; running estimates used in inference.
class BatchNorm : public Layer {
public:
    explicit BatchNorm(std::size_t channels, double eps = 1e-5, double momentum = 0.1);
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void init(Rng&) override;
    std::vector<Param> params() override;
    std::vector<Param> buffers() override;
    json spec() const override { return {{"type", "batchnorm"}}; }

private:
    std::size_t channels_;
    double eps_, momentum_;
    std::vector<double> gamma_, beta_, dgamma_, dbeta_;
    std::vector<double> running_mean_, running_var_;
    Tensor xhat_;
    std::vector<double> inv_std_;
};

// Inverted dropout; identity in inference mode. Needs a training RNG
// (Network::set_train_rng) when active.
class Dropout : public Layer {
public:
    explicit Dropout(double rate);
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    json spec() const override { return {{"type", "dropout"}, {"rate", rate_}}; }

    void set_rng(Rng* rng) { rng_ = rng; }
    double rate() const { return rate_; }

private:
    double rate_;
    Rng* rng_ = nullptr;
    std::vector<double> mask_;
};

struct GruWeights {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::vector<double> wz, uz, bz;  // w: [input][hidden], u: [hidden][hidden]
    std::vector<double> wr, ur, br;
    std::vector<double> wh, uh, bh;
};

// One step of the standard GRU:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   htilde = tanh(Wh x + Uh (r*h) + bh)
//   h' = (1-z)*h + z*htilde
std::vector<double> gru_cell(std::span<const double> x, std::span<const double> h_prev, const GruWeights& w);

class Gru : public Layer {
public:
    Gru(std::size_t input_dim, std::size_t hidden_dim, bool return_sequences);
    Tensor forward(const Tensor& x, bool training) override;
    Tensor backward(const Tensor& grad_out) override;
    void init(Rng& rng) override;
    std::vector<Param> params() override;
    json spec() const override {
        return {{"type", "gru"}, {"units", w_.hidden_dim}, {"return_sequences", return_sequences_}};
    }

    GruWeights& weights() { return w_; }

private:
    GruWeights w_;
    GruWeights grads_;
    bool return_sequences_;
    Tensor x_;
    // cached activations per timestep, each [batch*hidden]
    std::vector<std::vector<double>> zs_, rs_, hts_, hs_;
};

// Mean sparse categorical cross-entropy on logits.
class SoftmaxXent {
public:
    double forward(const Tensor& logits, std::span<const int> labels);
    Tensor backward() const;
    const Tensor& probs() const { return probs_; }

private:
    Tensor probs_;
    std::vector<int> labels_;
};

Tensor softmax_rows(const Tensor& logits);

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam update for one parameter array; t is the 1-based step.
// Throws on a non-finite gradient, naming the parameter.
void adam_step(std::span<double> value, std::span<const double> grad, std::span<double> m, std::span<double> v,
               int t, const AdamConfig& cfg, const std::string& param_name);

class Adam {
public:
    Adam(std::vector<Param> params, AdamConfig cfg);
    void step();
    void zero_grad();
    int t() const { return t_; }

private:
    std::vector<Param> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    int t_ = 0;
};

class EarlyStopping {
public:
    explicit EarlyStopping(int patience);
    // Returns true while training should continue. Call once per epoch.
    bool observe(double val_loss);
    bool improved() const { return improved_; }     // did the last observation improve
    int best_epoch() const { return best_epoch_; }  // 1-based
    double best_loss() const { return best_loss_; }
    int epochs_seen() const { return epoch_; }

private:
    int patience_;
    int epoch_ = 0;
    int best_epoch_ = 0;
    int since_best_ = 0;
    double best_loss_ = 0;
    bool improved_ = false;
};

class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    void add(std::unique_ptr<Layer> layer);
    Layer& layer(std::size_t i) { return *layers_[i]; }
    std::size_t layer_count() const { return layers_.size(); }

    Tensor forward(const Tensor& x, bool training);
    void backward(const Tensor& grad_out);

    std::vector<Param> params();
    std::vector<Param> buffers();
    std::size_t parameter_count();

    void init(std::uint64_t seed);
    void set_train_rng(Rng* rng);

    std::vector<std::vector<double>> snapshot();
    void restore(const std::vector<std::vector<double>>& snap);

    json spec() const;

    // input shape the network was built for
    std::size_t seq_len = 0;
    std::size_t in_channels = 0;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Fig. 3 style baseline: GRU -> GRU -> Dense(n); softmax applied at
// prediction time.
json build_baseline_rnn(int n_classes, int hidden = 100);

// Fig. 5 CNN-RNN: Conv(3,f1) BN ReLU Conv(3,f2) BN ReLU GRU(g) Dense(d) ReLU
// [Dropout] Dense(n). The dropout flag is meant for the inter-arrival-time
// model.
json build_cnn_rnn(int n_classes, bool dropout, int conv1 = 200, int conv2 = 400, int gru = 200,
                   int dense = 200, double dropout_rate = 0.5);

// Instantiates a model spec for a given input shape, checking that layer
// shapes compose. Parameters are zero until init().
Network build_network(const json& model_spec, std::size_t seq_len, std::size_t in_channels);

struct TrainConfig {
    int batch_size = 64;
    AdamConfig adam{};
    int max_epochs = 100;
    int patience = 5;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double train_loss = 0;
    double val_loss = 0;
};

struct History {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;  // 1-based
    bool stopped_early = false;
};

// Mini-batch training with per-epoch seeded shuffling and early stopping on
// the validation split; restores the best epoch's parameters before
// returning. Throws on divergence (non-finite loss), naming the epoch.
History fit(Network& net, const Tensor& x_train, std::span<const int> y_train, const Tensor& x_val,
            std::span<const int> y_val, const TrainConfig& cfg);

// Inference-mode class probabilities, one row per sample.
std::vector<std::vector<double>> predict_proba(Network& net, const Tensor& x, int batch_size = 256);

void save_network(const std::string& path, Network& net);
Network load_network(const std::string& path);

}  // namespace sniforge::nn
