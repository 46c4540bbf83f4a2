#include <algorithm>
#include <cmath>

#include "sniforge/nn.hpp"

namespace sniforge::nn {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void glorot_fill(std::vector<double>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    double limit = glorot_limit(fan_in, fan_out);
    for (double& v : w) v = rng.uniform(-limit, limit);
}

}  // namespace

// ---------------------------------------------------------------- Dense

Dense::Dense(std::size_t in, std::size_t out)
    : in_(in), out_(out), w_(in * out, 0.0), b_(out, 0.0), dw_(in * out, 0.0), db_(out, 0.0) {}

void Dense::init(Rng& rng) {
    glorot_fill(w_, in_, out_, rng);
    std::fill(b_.begin(), b_.end(), 0.0);
}

std::vector<Param> Dense::params() {
    return {{name_ + ".w", &w_, &dw_}, {name_ + ".b", &b_, &db_}};
}

Tensor Dense::forward(const Tensor& x, bool) {
    if (x.rank() != 2 || x.shape[1] != in_)
        throw std::invalid_argument(name_ + ": expected (batch," + std::to_string(in_) + "), got " +
                                    x.shape_string());
    x_ = x;
    std::size_t batch = x.shape[0];
    Tensor y({batch, out_});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = &x.data[b * in_];
        double* yr = &y.data[b * out_];
        for (std::size_t o = 0; o < out_; ++o) yr[o] = b_[o];
        for (std::size_t i = 0; i < in_; ++i) {
            double xi = xr[i];
            if (xi == 0.0) continue;
            const double* wr = &w_[i * out_];
            for (std::size_t o = 0; o < out_; ++o) yr[o] += xi * wr[o];
        }
    }
    return y;
}

Tensor Dense::backward(const Tensor& g) {
    std::size_t batch = x_.shape[0];
    std::fill(dw_.begin(), dw_.end(), 0.0);
    std::fill(db_.begin(), db_.end(), 0.0);
    Tensor dx({batch, in_});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = &x_.data[b * in_];
        const double* gr = &g.data[b * out_];
        double* dxr = &dx.data[b * in_];
        for (std::size_t o = 0; o < out_; ++o) db_[o] += gr[o];
        for (std::size_t i = 0; i < in_; ++i) {
            const double* wr = &w_[i * out_];
            double* dwr = &dw_[i * out_];
            double acc = 0;
            double xi = xr[i];
            for (std::size_t o = 0; o < out_; ++o) {
                acc += gr[o] * wr[o];
                dwr[o] += xi * gr[o];
            }
            dxr[i] = acc;
        }
    }
    return dx;
}

// ---------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& x, bool) {
    x_ = x;
    Tensor y = x;
    for (double& v : y.data) v = v > 0 ? v : 0.0;
    return y;
}

Tensor Relu::backward(const Tensor& g) {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (x_.data[i] <= 0) dx.data[i] = 0.0;
    return dx;
}

// ---------------------------------------------------------------- Conv1D

Conv1D::Conv1D(std::size_t kernel, std::size_t in_channels, std::size_t filters)
    : kernel_(kernel),
      in_c_(in_channels),
      filters_(filters),
      w_(kernel * in_channels * filters, 0.0),
      b_(filters, 0.0),
      dw_(w_.size(), 0.0),
      db_(filters, 0.0) {}

void Conv1D::init(Rng& rng) {
    glorot_fill(w_, kernel_ * in_c_, kernel_ * filters_, rng);
    std::fill(b_.begin(), b_.end(), 0.0);
}

std::vector<Param> Conv1D::params() {
    return {{name_ + ".w", &w_, &dw_}, {name_ + ".b", &b_, &db_}};
}

Tensor Conv1D::forward(const Tensor& x, bool) {
    if (x.rank() != 3 || x.shape[2] != in_c_)
        throw std::invalid_argument(name_ + ": expected (batch,time," + std::to_string(in_c_) + "), got " +
                                    x.shape_string());
    std::size_t t_in = x.shape[1];
    if (t_in < kernel_)
        throw std::invalid_argument(name_ + ": sequence length " + std::to_string(t_in) +
                                    " shorter than kernel " + std::to_string(kernel_));
    x_ = x;
    std::size_t batch = x.shape[0];
    std::size_t t_out = t_in - kernel_ + 1;
    Tensor y({batch, t_out, filters_});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t to = 0; to < t_out; ++to) {
            double* yr = &y.data[(b * t_out + to) * filters_];
            for (std::size_t f = 0; f < filters_; ++f) yr[f] = b_[f];
            for (std::size_t dk = 0; dk < kernel_; ++dk) {
                const double* xr = &x.data[(b * t_in + to + dk) * in_c_];
                const double* wk = &w_[dk * in_c_ * filters_];
                for (std::size_t c = 0; c < in_c_; ++c) {
                    double xv = xr[c];
                    if (xv == 0.0) continue;
                    const double* wr = &wk[c * filters_];
                    for (std::size_t f = 0; f < filters_; ++f) yr[f] += xv * wr[f];
                }
            }
        }
    }
    return y;
}

Tensor Conv1D::backward(const Tensor& g) {
    std::size_t batch = x_.shape[0];
    std::size_t t_in = x_.shape[1];
    std::size_t t_out = t_in - kernel_ + 1;
    std::fill(dw_.begin(), dw_.end(), 0.0);
    std::fill(db_.begin(), db_.end(), 0.0);
    Tensor dx({batch, t_in, in_c_});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t to = 0; to < t_out; ++to) {
            const double* gr = &g.data[(b * t_out + to) * filters_];
            for (std::size_t f = 0; f < filters_; ++f) db_[f] += gr[f];
            for (std::size_t dk = 0; dk < kernel_; ++dk) {
                const double* xr = &x_.data[(b * t_in + to + dk) * in_c_];
                double* dxr = &dx.data[(b * t_in + to + dk) * in_c_];
                double* wk = &w_[dk * in_c_ * filters_];
                double* dwk = &dw_[dk * in_c_ * filters_];
                for (std::size_t c = 0; c < in_c_; ++c) {
                    const double* wr = &wk[c * filters_];
                    double* dwr = &dwk[c * filters_];
                    double xv = xr[c];
                    double acc = 0;
                    for (std::size_t f = 0; f < filters_; ++f) {
                        acc += gr[f] * wr[f];
                        dwr[f] += xv * gr[f];
                    }
                    dxr[c] += acc;
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(channels, 1.0),
      beta_(channels, 0.0),
      dgamma_(channels, 0.0),
      dbeta_(channels, 0.0),
      running_mean_(channels, 0.0),
      running_var_(channels, 1.0),
      inv_std_(channels, 0.0) {}

void BatchNorm::init(Rng&) {
    std::fill(gamma_.begin(), gamma_.end(), 1.0);
    std::fill(beta_.begin(), beta_.end(), 0.0);
    std::fill(running_mean_.begin(), running_mean_.end(), 0.0);
    std::fill(running_var_.begin(), running_var_.end(), 1.0);
}

std::vector<Param> BatchNorm::params() {
    return {{name_ + ".gamma", &gamma_, &dgamma_}, {name_ + ".beta", &beta_, &dbeta_}};
}

std::vector<Param> BatchNorm::buffers() {
    return {{name_ + ".running_mean", &running_mean_, nullptr},
            {name_ + ".running_var", &running_var_, nullptr}};
}

Tensor BatchNorm::forward(const Tensor& x, bool training) {
    std::size_t c_dim = x.shape.back();
    if (c_dim != channels_)
        throw std::invalid_argument(name_ + ": expected " + std::to_string(channels_) + " channels, got " +
                                    x.shape_string());
    std::size_t rows = x.numel() / channels_;
    if (training && x.shape[0] < 2)
        throw std::invalid_argument(name_ + ": training requires batch size >= 2");

    Tensor y(x.shape);
    xhat_ = Tensor(x.shape);
    if (training) {
        for (std::size_t c = 0; c < channels_; ++c) {
            double mean = 0;
            for (std::size_t r = 0; r < rows; ++r) mean += x.data[r * channels_ + c];
            mean /= static_cast<double>(rows);
            double var = 0;
            for (std::size_t r = 0; r < rows; ++r) {
                double d = x.data[r * channels_ + c] - mean;
                var += d * d;
            }
            var /= static_cast<double>(rows);
            double inv = 1.0 / std::sqrt(var + eps_);
            inv_std_[c] = inv;
            for (std::size_t r = 0; r < rows; ++r) {
                double xh = (x.data[r * channels_ + c] - mean) * inv;
                xhat_.data[r * channels_ + c] = xh;
                y.data[r * channels_ + c] = gamma_[c] * xh + beta_[c];
            }
            running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
            running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var;
        }
    } else {
        for (std::size_t c = 0; c < channels_; ++c) {
            double inv = 1.0 / std::sqrt(running_var_[c] + eps_);
            for (std::size_t r = 0; r < rows; ++r)
                y.data[r * channels_ + c] = gamma_[c] * (x.data[r * channels_ + c] - running_mean_[c]) * inv +
                                            beta_[c];
        }
    }
    return y;
}

Tensor BatchNorm::backward(const Tensor& g) {
    std::size_t rows = g.numel() / channels_;
    double n = static_cast<double>(rows);
    Tensor dx(g.shape);
    for (std::size_t c = 0; c < channels_; ++c) {
        double sum_g = 0, sum_gx = 0;
        for (std::size_t r = 0; r < rows; ++r) {
            double gv = g.data[r * channels_ + c];
            sum_g += gv;
            sum_gx += gv * xhat_.data[r * channels_ + c];
        }
        dbeta_[c] = sum_g;
        dgamma_[c] = sum_gx;
        double k = gamma_[c] * inv_std_[c];
        for (std::size_t r = 0; r < rows; ++r) {
            double gv = g.data[r * channels_ + c];
            double xh = xhat_.data[r * channels_ + c];
            dx.data[r * channels_ + c] = k * (gv - sum_g / n - xh * sum_gx / n);
        }
    }
    return dx;
}

// ---------------------------------------------------------------- Dropout

Dropout::Dropout(double rate) : rate_(rate) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
}

Tensor Dropout::forward(const Tensor& x, bool training) {
    if (!training || rate_ == 0.0) {
        mask_.clear();
        return x;
    }
    if (rng_ == nullptr) throw std::runtime_error(name_ + ": training forward pass without an RNG");
    double keep = 1.0 - rate_;
    mask_.resize(x.data.size());
    Tensor y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        mask_[i] = rng_->uniform() < keep ? 1.0 / keep : 0.0;
        y.data[i] *= mask_[i];
    }
    return y;
}

Tensor Dropout::backward(const Tensor& g) {
    if (mask_.empty()) return g;
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask_[i];
    return dx;
}

// ---------------------------------------------------------------- GRU

std::vector<double> gru_cell(std::span<const double> x, std::span<const double> h_prev, const GruWeights& w) {
    std::size_t in = w.input_dim, hid = w.hidden_dim;
    if (x.size() != in || h_prev.size() != hid)
        throw std::invalid_argument("gru_cell: dimension mismatch with weights");

    std::vector<double> z(hid), r(hid), ht(hid), h(hid);
    auto gate_pre = [&](const std::vector<double>& wm, const std::vector<double>& um,
                        const std::vector<double>& bias, std::span<const double> hin, std::size_t j) {
        double a = bias[j];
        for (std::size_t i = 0; i < in; ++i) a += x[i] * wm[i * hid + j];
        for (std::size_t i = 0; i < hid; ++i) a += hin[i] * um[i * hid + j];
        return a;
    };
    for (std::size_t j = 0; j < hid; ++j) z[j] = sigmoid(gate_pre(w.wz, w.uz, w.bz, h_prev, j));
    for (std::size_t j = 0; j < hid; ++j) r[j] = sigmoid(gate_pre(w.wr, w.ur, w.br, h_prev, j));
    std::vector<double> rh(hid);
    for (std::size_t j = 0; j < hid; ++j) rh[j] = r[j] * h_prev[j];
    for (std::size_t j = 0; j < hid; ++j) ht[j] = std::tanh(gate_pre(w.wh, w.uh, w.bh, rh, j));
    for (std::size_t j = 0; j < hid; ++j) h[j] = (1.0 - z[j]) * h_prev[j] + z[j] * ht[j];
    return h;
}

Gru::Gru(std::size_t input_dim, std::size_t hidden_dim, bool return_sequences)
    : return_sequences_(return_sequences) {
    w_.input_dim = input_dim;
    w_.hidden_dim = hidden_dim;
    auto alloc = [&](GruWeights& g) {
        g.input_dim = input_dim;
        g.hidden_dim = hidden_dim;
        g.wz.assign(input_dim * hidden_dim, 0.0);
        g.uz.assign(hidden_dim * hidden_dim, 0.0);
        g.bz.assign(hidden_dim, 0.0);
        g.wr.assign(input_dim * hidden_dim, 0.0);
        g.ur.assign(hidden_dim * hidden_dim, 0.0);
        g.br.assign(hidden_dim, 0.0);
        g.wh.assign(input_dim * hidden_dim, 0.0);
        g.uh.assign(hidden_dim * hidden_dim, 0.0);
        g.bh.assign(hidden_dim, 0.0);
    };
    alloc(w_);
    alloc(grads_);
}

void Gru::init(Rng& rng) {
    std::size_t in = w_.input_dim, hid = w_.hidden_dim;
    glorot_fill(w_.wz, in, hid, rng);
    glorot_fill(w_.uz, hid, hid, rng);
    glorot_fill(w_.wr, in, hid, rng);
    glorot_fill(w_.ur, hid, hid, rng);
    glorot_fill(w_.wh, in, hid, rng);
    glorot_fill(w_.uh, hid, hid, rng);
    std::fill(w_.bz.begin(), w_.bz.end(), 0.0);
    std::fill(w_.br.begin(), w_.br.end(), 0.0);
    std::fill(w_.bh.begin(), w_.bh.end(), 0.0);
}

std::vector<Param> Gru::params() {
    return {{name_ + ".wz", &w_.wz, &grads_.wz}, {name_ + ".uz", &w_.uz, &grads_.uz},
            {name_ + ".bz", &w_.bz, &grads_.bz}, {name_ + ".wr", &w_.wr, &grads_.wr},
            {name_ + ".ur", &w_.ur, &grads_.ur}, {name_ + ".br", &w_.br, &grads_.br},
            {name_ + ".wh", &w_.wh, &grads_.wh}, {name_ + ".uh", &w_.uh, &grads_.uh},
            {name_ + ".bh", &w_.bh, &grads_.bh}};
}

Tensor Gru::forward(const Tensor& x, bool) {
    if (x.rank() != 3 || x.shape[2] != w_.input_dim)
        throw std::invalid_argument(name_ + ": expected (batch,time," + std::to_string(w_.input_dim) +
                                    "), got " + x.shape_string());
    x_ = x;
    std::size_t batch = x.shape[0], steps = x.shape[1];
    std::size_t in = w_.input_dim, hid = w_.hidden_dim;

    zs_.assign(steps, std::vector<double>(batch * hid, 0.0));
    rs_.assign(steps, std::vector<double>(batch * hid, 0.0));
    hts_.assign(steps, std::vector<double>(batch * hid, 0.0));
    hs_.assign(steps + 1, std::vector<double>(batch * hid, 0.0));  // hs_[0] = initial zero state

    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xt = &x.data[(b * steps + t) * in];
            const double* hp = &hs_[t][b * hid];
            double* z = &zs_[t][b * hid];
            double* r = &rs_[t][b * hid];
            double* ht = &hts_[t][b * hid];
            double* h = &hs_[t + 1][b * hid];

            for (std::size_t j = 0; j < hid; ++j) {
                z[j] = w_.bz[j];
                r[j] = w_.br[j];
                ht[j] = w_.bh[j];
            }
            for (std::size_t i = 0; i < in; ++i) {
                double xv = xt[i];
                if (xv == 0.0) continue;
                const double* wz = &w_.wz[i * hid];
                const double* wr = &w_.wr[i * hid];
                const double* wh = &w_.wh[i * hid];
                for (std::size_t j = 0; j < hid; ++j) {
                    z[j] += xv * wz[j];
                    r[j] += xv * wr[j];
                    ht[j] += xv * wh[j];
                }
            }
            for (std::size_t i = 0; i < hid; ++i) {
                double hv = hp[i];
                if (hv == 0.0) continue;
                const double* uz = &w_.uz[i * hid];
                const double* ur = &w_.ur[i * hid];
                for (std::size_t j = 0; j < hid; ++j) {
                    z[j] += hv * uz[j];
                    r[j] += hv * ur[j];
                }
            }
            for (std::size_t j = 0; j < hid; ++j) {
                z[j] = sigmoid(z[j]);
                r[j] = sigmoid(r[j]);
            }
            for (std::size_t i = 0; i < hid; ++i) {
                double rh = r[i] * hp[i];
                if (rh == 0.0) continue;
                const double* uh = &w_.uh[i * hid];
                for (std::size_t j = 0; j < hid; ++j) ht[j] += rh * uh[j];
            }
            for (std::size_t j = 0; j < hid; ++j) {
                ht[j] = std::tanh(ht[j]);
                h[j] = (1.0 - z[j]) * hp[j] + z[j] * ht[j];
            }
        }
    }

    if (return_sequences_) {
        Tensor y({batch, steps, hid});
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t b = 0; b < batch; ++b)
                std::copy_n(&hs_[t + 1][b * hid], hid, &y.data[(b * steps + t) * hid]);
        return y;
    }
    Tensor y({batch, hid});
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(&hs_[steps][b * hid], hid, &y.data[b * hid]);
    return y;
}

Tensor Gru::backward(const Tensor& g) {
    std::size_t batch = x_.shape[0], steps = x_.shape[1];
    std::size_t in = w_.input_dim, hid = w_.hidden_dim;

    auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    zero(grads_.wz);
    zero(grads_.uz);
    zero(grads_.bz);
    zero(grads_.wr);
    zero(grads_.ur);
    zero(grads_.br);
    zero(grads_.wh);
    zero(grads_.uh);
    zero(grads_.bh);

    Tensor dx({batch, steps, in});
    std::vector<double> dh(batch * hid, 0.0);
    std::vector<double> daz(hid), dar(hid), dah(hid);

    for (std::size_t t = steps; t-- > 0;) {
        // fold in the upstream gradient arriving at this step's output
        if (return_sequences_) {
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t j = 0; j < hid; ++j) dh[b * hid + j] += g.data[(b * steps + t) * hid + j];
        } else if (t == steps - 1) {
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t j = 0; j < hid; ++j) dh[b * hid + j] += g.data[b * hid + j];
        }

        for (std::size_t b = 0; b < batch; ++b) {
            const double* xt = &x_.data[(b * steps + t) * in];
            const double* hp = &hs_[t][b * hid];
            const double* z = &zs_[t][b * hid];
            const double* r = &rs_[t][b * hid];
            const double* ht = &hts_[t][b * hid];
            double* dhb = &dh[b * hid];
            double* dxt = &dx.data[(b * steps + t) * in];

            std::vector<double> dh_prev(hid, 0.0);
            for (std::size_t j = 0; j < hid; ++j) {
                double dhj = dhb[j];
                double dz = dhj * (ht[j] - hp[j]);
                double dht = dhj * z[j];
                dh_prev[j] += dhj * (1.0 - z[j]);
                dah[j] = dht * (1.0 - ht[j] * ht[j]);
                daz[j] = dz * z[j] * (1.0 - z[j]);
            }
            // d(r*h_prev) = dah * Uh^T; then split into dr and dh_prev
            for (std::size_t i = 0; i < hid; ++i) {
                const double* uh = &w_.uh[i * hid];
                double acc = 0;
                for (std::size_t j = 0; j < hid; ++j) acc += dah[j] * uh[j];
                double dr = acc * hp[i];
                dh_prev[i] += acc * r[i];
                dar[i] = dr * r[i] * (1.0 - r[i]);
            }
            for (std::size_t i = 0; i < hid; ++i) {
                const double* uz = &w_.uz[i * hid];
                const double* ur = &w_.ur[i * hid];
                double acc = 0;
                for (std::size_t j = 0; j < hid; ++j) acc += daz[j] * uz[j] + dar[j] * ur[j];
                dh_prev[i] += acc;
            }

            // parameter gradients
            for (std::size_t i = 0; i < in; ++i) {
                double xv = xt[i];
                if (xv != 0.0) {
                    double* gwz = &grads_.wz[i * hid];
                    double* gwr = &grads_.wr[i * hid];
                    double* gwh = &grads_.wh[i * hid];
                    for (std::size_t j = 0; j < hid; ++j) {
                        gwz[j] += xv * daz[j];
                        gwr[j] += xv * dar[j];
                        gwh[j] += xv * dah[j];
                    }
                }
                const double* wz = &w_.wz[i * hid];
                const double* wr = &w_.wr[i * hid];
                const double* wh = &w_.wh[i * hid];
                double acc = 0;
                for (std::size_t j = 0; j < hid; ++j) acc += daz[j] * wz[j] + dar[j] * wr[j] + dah[j] * wh[j];
                dxt[i] = acc;
            }
            for (std::size_t i = 0; i < hid; ++i) {
                double hv = hp[i];
                if (hv == 0.0) continue;
                double* guz = &grads_.uz[i * hid];
                double* gur = &grads_.ur[i * hid];
                for (std::size_t j = 0; j < hid; ++j) {
                    guz[j] += hv * daz[j];
                    gur[j] += hv * dar[j];
                }
                double rh = r[i] * hv;
                if (rh != 0.0) {
                    double* guh = &grads_.uh[i * hid];
                    for (std::size_t j = 0; j < hid; ++j) guh[j] += rh * dah[j];
                }
            }
            for (std::size_t j = 0; j < hid; ++j) {
                grads_.bz[j] += daz[j];
                grads_.br[j] += dar[j];
                grads_.bh[j] += dah[j];
            }

            std::copy(dh_prev.begin(), dh_prev.end(), dhb);
        }
    }
    return dx;
}

// ---------------------------------------------------------------- loss

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw std::invalid_argument("softmax_rows: expected rank-2 logits");
    std::size_t batch = logits.shape[0], n = logits.shape[1];
    Tensor p(logits.shape);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = &logits.data[b * n];
        double* out = &p.data[b * n];
        double m = row[0];
        for (std::size_t j = 1; j < n; ++j) m = std::max(m, row[j]);
        double sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            out[j] = std::exp(row[j] - m);
            sum += out[j];
        }
        for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
    }
    return p;
}

double SoftmaxXent::forward(const Tensor& logits, std::span<const int> labels) {
    std::size_t batch = logits.shape[0], n = logits.shape[1];
    if (labels.size() != batch) throw std::invalid_argument("softmax_xent: labels/batch mismatch");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= n)
            throw std::invalid_argument("softmax_xent: label " + std::to_string(y) + " outside " +
                                        std::to_string(n) + " classes");
    probs_ = softmax_rows(logits);
    labels_.assign(labels.begin(), labels.end());
    double loss = 0;
    for (std::size_t b = 0; b < batch; ++b)
        loss -= std::log(std::max(probs_.data[b * n + static_cast<std::size_t>(labels[b])], 1e-300));
    return loss / static_cast<double>(batch);
}

Tensor SoftmaxXent::backward() const {
    std::size_t batch = probs_.shape[0], n = probs_.shape[1];
    Tensor g = probs_;
    double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        g.data[b * n + static_cast<std::size_t>(labels_[b])] -= 1.0;
        for (std::size_t j = 0; j < n; ++j) g.data[b * n + j] *= inv;
    }
    return g;
}

}  // namespace sniforge::nn
