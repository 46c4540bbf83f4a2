#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "sniforge/nn.hpp"

namespace sniforge::nn {

// ---------------------------------------------------------------- Adam

void adam_step(std::span<double> value, std::span<const double> grad, std::span<double> m,
               std::span<double> v, int t, const AdamConfig& cfg, const std::string& param_name) {
    if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
    double bc1 = 1.0 - std::pow(cfg.beta1, t);
    double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < value.size(); ++i) {
        double g = grad[i];
        if (!std::isfinite(g))
            throw std::runtime_error("adam_step: non-finite gradient in parameter '" + param_name + "'");
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

Adam::Adam(std::vector<Param> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Param& p : params_) {
        m_.emplace_back(p.value->size(), 0.0);
        v_.emplace_back(p.value->size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i)
        adam_step(*params_[i].value, *params_[i].grad, m_[i], v_[i], t_, cfg_, params_[i].name);
}

void Adam::zero_grad() {
    for (const Param& p : params_) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

// ---------------------------------------------------------------- EarlyStopping

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
    if (patience < 1) throw std::invalid_argument("EarlyStopping: patience must be >= 1");
}

bool EarlyStopping::observe(double val_loss) {
    ++epoch_;
    improved_ = epoch_ == 1 || val_loss < best_loss_;
    if (improved_) {
        best_loss_ = val_loss;
        best_epoch_ = epoch_;
        since_best_ = 0;
    } else {
        ++since_best_;
    }
    return since_best_ < patience_;
}

// ---------------------------------------------------------------- Network

void Network::add(std::unique_ptr<Layer> layer) {
    layer->set_name("layer" + std::to_string(layers_.size()) + "." +
                    layer->spec().at("type").get<std::string>());
    layers_.push_back(std::move(layer));
}

Tensor Network::forward(const Tensor& x, bool training) {
    Tensor cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, training);
    return cur;
}

void Network::backward(const Tensor& grad_out) {
    Tensor cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
}

std::vector<Param> Network::params() {
    std::vector<Param> out;
    for (auto& layer : layers_)
        for (Param& p : layer->params()) out.push_back(p);
    return out;
}

std::vector<Param> Network::buffers() {
    std::vector<Param> out;
    for (auto& layer : layers_)
        for (Param& p : layer->buffers()) out.push_back(p);
    return out;
}

std::size_t Network::parameter_count() {
    std::size_t n = 0;
    for (const Param& p : params()) n += p.value->size();
    return n;
}

void Network::init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x696e6974ULL /* "init" */}));
    for (auto& layer : layers_) layer->init(rng);
}

void Network::set_train_rng(Rng* rng) {
    for (auto& layer : layers_)
        if (auto* d = dynamic_cast<Dropout*>(layer.get())) d->set_rng(rng);
}

std::vector<std::vector<double>> Network::snapshot() {
    std::vector<std::vector<double>> snap;
    for (const Param& p : params()) snap.push_back(*p.value);
    for (const Param& p : buffers()) snap.push_back(*p.value);
    return snap;
}

void Network::restore(const std::vector<std::vector<double>>& snap) {
    std::size_t i = 0;
    for (const Param& p : params()) *p.value = snap[i++];
    for (const Param& p : buffers()) *p.value = snap[i++];
}

json Network::spec() const {
    json layers = json::array();
    for (const auto& layer : layers_) layers.push_back(layer->spec());
    return layers;
}

// ---------------------------------------------------------------- builders

json build_baseline_rnn(int n_classes, int hidden) {
    json spec;
    spec["layers"] = json::array({
        {{"type", "gru"}, {"units", hidden}, {"return_sequences", true}},
        {{"type", "gru"}, {"units", hidden}, {"return_sequences", false}},
        {{"type", "dense"}, {"units", n_classes}},
    });
    spec["n_classes"] = n_classes;
    return spec;
}

json build_cnn_rnn(int n_classes, bool dropout, int conv1, int conv2, int gru, int dense,
                   double dropout_rate) {
    json layers = json::array({
        {{"type", "conv1d"}, {"kernel", 3}, {"filters", conv1}},
        {{"type", "batchnorm"}},
        {{"type", "relu"}},
        {{"type", "conv1d"}, {"kernel", 3}, {"filters", conv2}},
        {{"type", "batchnorm"}},
        {{"type", "relu"}},
        {{"type", "gru"}, {"units", gru}, {"return_sequences", false}},
        {{"type", "dense"}, {"units", dense}},
        {{"type", "relu"}},
    });
    if (dropout) layers.push_back({{"type", "dropout"}, {"rate", dropout_rate}});
    layers.push_back({{"type", "dense"}, {"units", n_classes}});
    json spec;
    spec["layers"] = std::move(layers);
    spec["n_classes"] = n_classes;
    spec["min_gru_time"] = 5;
    return spec;
}

Network build_network(const json& model_spec, std::size_t seq_len, std::size_t in_channels) {
    Network net;
    net.seq_len = seq_len;
    net.in_channels = in_channels;

    std::size_t t = seq_len;
    std::size_t c = in_channels;
    bool flat = false;  // becomes true after a non-sequence GRU
    std::size_t min_gru_time = model_spec.value("min_gru_time", 1);

    for (const json& ls : model_spec.at("layers")) {
        std::string type = ls.at("type").get<std::string>();
        if (type == "conv1d") {
            if (flat) throw std::invalid_argument("model spec: conv1d after flattening layer");
            std::size_t kernel = ls.at("kernel").get<std::size_t>();
            std::size_t filters = ls.at("filters").get<std::size_t>();
            if (t < kernel)
                throw std::invalid_argument("model spec: sequence length " + std::to_string(t) +
                                            " shorter than conv kernel " + std::to_string(kernel));
            net.add(std::make_unique<Conv1D>(kernel, c, filters));
            t = t - kernel + 1;
            c = filters;
        } else if (type == "batchnorm") {
            net.add(std::make_unique<BatchNorm>(c));
        } else if (type == "relu") {
            net.add(std::make_unique<Relu>());
        } else if (type == "gru") {
            if (flat) throw std::invalid_argument("model spec: gru after flattening layer");
            if (t < min_gru_time)
                throw std::invalid_argument("model spec: sequence length " + std::to_string(t) +
                                            " after convolutions is shorter than " +
                                            std::to_string(min_gru_time));
            std::size_t units = ls.at("units").get<std::size_t>();
            bool seqs = ls.at("return_sequences").get<bool>();
            net.add(std::make_unique<Gru>(c, units, seqs));
            c = units;
            if (!seqs) flat = true;
        } else if (type == "dense") {
            if (!flat) throw std::invalid_argument("model spec: dense requires a flat input");
            std::size_t units = ls.at("units").get<std::size_t>();
            net.add(std::make_unique<Dense>(c, units));
            c = units;
        } else if (type == "dropout") {
            net.add(std::make_unique<Dropout>(ls.at("rate").get<double>()));
        } else {
            throw std::invalid_argument("model spec: unknown layer type '" + type + "'");
        }
    }
    std::size_t n_classes = model_spec.at("n_classes").get<std::size_t>();
    if (!flat || c != n_classes)
        throw std::invalid_argument("model spec: final layer width " + std::to_string(c) +
                                    " does not match n_classes " + std::to_string(n_classes));
    return net;
}

// ---------------------------------------------------------------- fit / predict

namespace {

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx) {
    std::size_t row = x.numel() / x.shape[0];
    std::vector<std::size_t> shape = x.shape;
    shape[0] = idx.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(&x.data[idx[i] * row], row, &out.data[i * row]);
    return out;
}

double eval_loss(Network& net, const Tensor& x, std::span<const int> y, int batch_size) {
    std::size_t n = x.shape[0];
    SoftmaxXent loss;
    double total = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        std::size_t count = std::min<std::size_t>(batch_size, n - start);
        std::vector<std::size_t> idx(count);
        std::iota(idx.begin(), idx.end(), start);
        Tensor xb = gather_rows(x, idx);
        Tensor logits = net.forward(xb, /*training=*/false);
        total += loss.forward(logits, y.subspan(start, count)) * static_cast<double>(count);
    }
    return total / static_cast<double>(n);
}

}  // namespace

History fit(Network& net, const Tensor& x_train, std::span<const int> y_train, const Tensor& x_val,
            std::span<const int> y_val, const TrainConfig& cfg) {
    std::size_t n = x_train.shape[0];
    if (n == 0 || x_val.shape[0] == 0) throw std::invalid_argument("fit: empty train or validation split");
    if (cfg.batch_size < 1) throw std::invalid_argument("fit: batch_size must be >= 1");

    Rng shuffle_rng(derive_seed(cfg.seed, {0x73687566ULL /* "shuf" */}));
    Rng dropout_rng(derive_seed(cfg.seed, {0x64726f70ULL /* "drop" */}));
    net.set_train_rng(&dropout_rng);

    Adam adam(net.params(), cfg.adam);
    EarlyStopping stopper(cfg.patience);
    SoftmaxXent loss;
    History history;
    std::vector<std::vector<double>> best_snapshot = net.snapshot();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);

        // batch boundaries; a trailing single sample is merged into the
        // previous batch so batchnorm always sees >= 2 rows
        std::vector<std::size_t> starts;
        for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(cfg.batch_size)) starts.push_back(s);
        if (starts.size() > 1 && n - starts.back() == 1) starts.pop_back();

        double epoch_loss = 0;
        for (std::size_t bi = 0; bi < starts.size(); ++bi) {
            std::size_t start = starts[bi];
            std::size_t end = bi + 1 < starts.size() ? starts[bi + 1] : n;
            std::span<const std::size_t> idx(order.data() + start, end - start);
            Tensor xb = gather_rows(x_train, idx);
            std::vector<int> yb(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = y_train[idx[i]];

            Tensor logits = net.forward(xb, /*training=*/true);
            double batch_loss = loss.forward(logits, yb);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("fit: non-finite loss at epoch " + std::to_string(epoch));
            epoch_loss += batch_loss * static_cast<double>(idx.size());
            net.backward(loss.backward());
            adam.step();
        }
        epoch_loss /= static_cast<double>(n);

        double val_loss = eval_loss(net, x_val, y_val, cfg.batch_size);
        if (!std::isfinite(val_loss))
            throw std::runtime_error("fit: non-finite validation loss at epoch " + std::to_string(epoch));
        history.epochs.push_back({epoch_loss, val_loss});

        bool keep_going = stopper.observe(val_loss);
        if (stopper.improved()) best_snapshot = net.snapshot();
        if (!keep_going) {
            history.stopped_early = true;
            break;
        }
    }

    net.restore(best_snapshot);
    net.set_train_rng(nullptr);
    history.best_epoch = stopper.best_epoch();
    return history;
}

std::vector<std::vector<double>> predict_proba(Network& net, const Tensor& x, int batch_size) {
    std::size_t n = x.shape[0];
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        std::size_t count = std::min<std::size_t>(batch_size, n - start);
        std::vector<std::size_t> idx(count);
        std::iota(idx.begin(), idx.end(), start);
        Tensor logits = net.forward(gather_rows(x, idx), /*training=*/false);
        Tensor probs = softmax_rows(logits);
        std::size_t width = probs.shape[1];
        for (std::size_t i = 0; i < count; ++i)
            out.emplace_back(probs.data.begin() + static_cast<std::ptrdiff_t>(i * width),
                             probs.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
    }
    return out;
}

// ---------------------------------------------------------------- persistence

namespace {
constexpr char kMagic[8] = {'S', 'N', 'I', 'F', 'N', 'N', '0', '1'};
}

void save_network(const std::string& path, Network& net) {
    json header;
    header["layers"] = net.spec();
    header["seq_len"] = net.seq_len;
    header["in_channels"] = net.in_channels;
    json meta = json::array();
    std::size_t total = 0;
    for (const Param& p : net.params()) {
        meta.push_back({{"name", p.name}, {"size", p.value->size()}, {"kind", "param"}});
        total += p.value->size();
    }
    for (const Param& p : net.buffers()) {
        meta.push_back({{"name", p.name}, {"size", p.value->size()}, {"kind", "buffer"}});
        total += p.value->size();
    }
    header["arrays"] = std::move(meta);
    header["total_values"] = total;

    std::string head = header.dump();
    std::string blob;
    blob.reserve(sizeof(kMagic) + 8 + head.size() + total * sizeof(double));
    blob.append(kMagic, sizeof(kMagic));
    std::uint64_t len = head.size();
    blob.append(reinterpret_cast<const char*>(&len), sizeof(len));
    blob += head;
    auto append_values = [&](const std::vector<Param>& ps) {
        for (const Param& p : ps)
            blob.append(reinterpret_cast<const char*>(p.value->data()), p.value->size() * sizeof(double));
    };
    append_values(net.params());
    append_values(net.buffers());
    write_file_atomic(path, blob);
}

Network load_network(const std::string& path) {
    std::string blob = read_file(path);
    if (blob.size() < sizeof(kMagic) + 8 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
        throw ParseError("model artifact: bad magic");
    std::uint64_t len = 0;
    std::memcpy(&len, blob.data() + sizeof(kMagic), sizeof(len));
    std::size_t head_start = sizeof(kMagic) + 8;
    if (blob.size() < head_start + len) throw ParseError("model artifact: truncated header");
    json header = json::parse(blob.substr(head_start, len));

    json model_spec;
    model_spec["layers"] = header.at("layers");
    // final dense width is the class count
    model_spec["n_classes"] = header.at("layers").back().at("units");
    Network net = build_network(model_spec, header.at("seq_len").get<std::size_t>(),
                                header.at("in_channels").get<std::size_t>());

    std::size_t total = header.at("total_values").get<std::size_t>();
    std::size_t blob_start = head_start + len;
    if (blob.size() != blob_start + total * sizeof(double))
        throw ParseError("model artifact: parameter blob size mismatch");
    const char* cursor = blob.data() + blob_start;
    auto read_values = [&](const std::vector<Param>& ps) {
        for (const Param& p : ps) {
            std::memcpy(p.value->data(), cursor, p.value->size() * sizeof(double));
            cursor += p.value->size() * sizeof(double);
        }
    };
    read_values(net.params());
    read_values(net.buffers());
    return net;
}

}  // namespace sniforge::nn
