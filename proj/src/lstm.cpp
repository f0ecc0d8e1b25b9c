#include "wellml/lstm.hpp"

#include <cmath>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>

namespace wellml {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

LstmStepResult lstm_step(const LstmCellParams& p, std::span<const double> x, std::span<const double> h_prev,
                         std::span<const double> c_prev) {
    const std::size_t D = p.input_size;
    const std::size_t H = p.hidden_size;
    if (x.size() != D || h_prev.size() != H || c_prev.size() != H || p.W.size() != 4 * H * D ||
        p.U.size() != 4 * H * H || p.b.size() != 4 * H) {
        throw std::invalid_argument("lstm_step: shape mismatch");
    }
    std::vector<double> a(4 * H);
    for (std::size_t k = 0; k < 4 * H; ++k) {
        double s = p.b[k];
        const double* w = p.W.data() + k * D;
        for (std::size_t j = 0; j < D; ++j) s += w[j] * x[j];
        const double* u = p.U.data() + k * H;
        for (std::size_t j = 0; j < H; ++j) s += u[j] * h_prev[j];
        a[k] = s;
    }
    LstmStepResult r;
    r.f.resize(H);
    r.i.resize(H);
    r.g.resize(H);
    r.o.resize(H);
    r.c.resize(H);
    r.tanh_c.resize(H);
    r.h.resize(H);
    for (std::size_t k = 0; k < H; ++k) {
        r.f[k] = sigmoid(a[k]);
        r.i[k] = sigmoid(a[H + k]);
        r.g[k] = std::tanh(a[2 * H + k]);
        r.o[k] = sigmoid(a[3 * H + k]);
        r.c[k] = r.f[k] * c_prev[k] + r.i[k] * r.g[k];
        r.tanh_c[k] = std::tanh(r.c[k]);
        r.h[k] = r.o[k] * r.tanh_c[k];
    }
    return r;
}

LstmNetwork::LstmNetwork(std::vector<std::size_t> hidden_sizes, double dropout_rate, std::size_t input_size)
    : input_size_(input_size), hidden_(std::move(hidden_sizes)), dropout_(dropout_rate) {
    if (hidden_.empty() || input_size_ == 0) throw std::invalid_argument("lstm: need at least one layer");
    if (!(dropout_ >= 0.0 && dropout_ < 1.0)) throw std::invalid_argument("lstm: dropout_rate must lie in [0, 1)");
    std::size_t offset = 0;
    std::size_t in = input_size_;
    for (auto H : hidden_) {
        if (H == 0) throw std::invalid_argument("lstm: hidden size must be >= 1");
        LayerOffsets o{};
        o.W = offset;
        o.U = o.W + 4 * H * in;
        o.b = o.U + 4 * H * H;
        offset = o.b + 4 * H;
        layers_.push_back(o);
        in = H;
    }
    head_offset_ = offset;
    params_.assign(offset + hidden_.back() + 1, 0.0);
}

LstmNetwork LstmNetwork::initialized(std::vector<std::size_t> hidden_sizes, double dropout_rate, std::uint64_t seed,
                                     std::size_t input_size) {
    LstmNetwork net(std::move(hidden_sizes), dropout_rate, input_size);
    Rng rng(seed);
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        const std::size_t H = net.hidden_[l];
        const double bound = 1.0 / std::sqrt(static_cast<double>(H));
        const LayerOffsets o = net.layers_[l];
        const std::size_t end = o.b + 4 * H;
        for (std::size_t k = o.W; k < end; ++k) net.params_[k] = rng.uniform(-bound, bound);
        for (std::size_t k = 0; k < H; ++k) net.params_[o.b + k] = 1.0;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.hidden_.back()));
    for (std::size_t k = net.head_offset_; k < net.params_.size(); ++k) net.params_[k] = rng.uniform(-bound, bound);
    return net;
}

LstmCellParams LstmNetwork::cell(std::size_t layer) const {
    const LayerOffsets o = layers_.at(layer);
    const std::size_t H = hidden_[layer];
    const std::size_t D = layer == 0 ? input_size_ : hidden_[layer - 1];
    const std::span<const double> all(params_);
    return {D, H, all.subspan(o.W, 4 * H * D), all.subspan(o.U, 4 * H * H), all.subspan(o.b, 4 * H)};
}

std::span<const double> LstmNetwork::head_weights() const {
    return std::span<const double>(params_).subspan(head_offset_, hidden_.back());
}

std::vector<double> dropout_mask(std::size_t size, double rate, Rng& rng) {
    std::vector<double> mask(size, 1.0);
    if (rate <= 0.0) return mask;
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    return mask;
}

ForwardResult forward(const LstmNetwork& net, std::span<const double> window, bool train_mode, Rng* rng) {
    const std::size_t D = net.input_size();
    if (window.empty() || window.size() % D != 0) throw std::invalid_argument("lstm forward: bad window length");
    const std::size_t T = window.size() / D;
    ForwardResult out;
    auto& cache = out.cache;
    cache.inputs.resize(net.n_layers());
    cache.steps.resize(net.n_layers());

    for (std::size_t t = 0; t < T; ++t) {
        cache.inputs[0].emplace_back(window.begin() + static_cast<std::ptrdiff_t>(t * D),
                                     window.begin() + static_cast<std::ptrdiff_t>((t + 1) * D));
    }
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        const LstmCellParams p = net.cell(l);
        std::vector<double> h(p.hidden_size, 0.0), c(p.hidden_size, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            LstmStepResult step = lstm_step(p, cache.inputs[l][t], h, c);
            h = step.h;
            c = step.c;
            if (l + 1 < net.n_layers()) cache.inputs[l + 1].push_back(step.h);
            cache.steps[l].push_back(std::move(step));
        }
    }

    const std::size_t H = net.hidden_sizes().back();
    if (train_mode && net.dropout_rate() > 0.0) {
        if (rng == nullptr) throw std::invalid_argument("lstm forward: train mode with dropout needs an rng");
        cache.dropout_mask = dropout_mask(H, net.dropout_rate(), *rng);
    } else {
        cache.dropout_mask.assign(H, 1.0);
    }
    const auto& h_last = cache.steps.back().back().h;
    const auto w = net.head_weights();
    double y = net.head_bias();
    for (std::size_t k = 0; k < H; ++k) y += w[k] * h_last[k] * cache.dropout_mask[k];
    out.prediction = y;
    return out;
}

std::vector<double> backward(const LstmNetwork& net, const ForwardCache& cache, double loss_grad) {
    std::vector<double> grad(net.parameter_count(), 0.0);
    const std::size_t L = net.n_layers();
    const std::size_t T = cache.steps.front().size();
    const std::size_t H_last = net.hidden_sizes().back();
    const auto head_w = net.head_weights();
    const auto& h_last = cache.steps.back().back().h;

    for (std::size_t k = 0; k < H_last; ++k) grad[net.head_offset() + k] = loss_grad * h_last[k] * cache.dropout_mask[k];
    grad[net.head_offset() + H_last] = loss_grad;

    // Gradient arriving at each step's h from the layer above (or the head).
    std::vector<std::vector<double>> dh_above(T, std::vector<double>(H_last, 0.0));
    for (std::size_t k = 0; k < H_last; ++k) dh_above[T - 1][k] = loss_grad * head_w[k] * cache.dropout_mask[k];

    for (std::size_t l = L; l-- > 0;) {
        const LstmCellParams p = net.cell(l);
        const auto off = net.offsets(l);
        const std::size_t H = p.hidden_size;
        const std::size_t D = p.input_size;
        std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), da(4 * H);
        std::vector<std::vector<double>> dx(T, std::vector<double>(D, 0.0));
        const std::vector<double> zeros(H, 0.0);

        for (std::size_t t = T; t-- > 0;) {
            const LstmStepResult& s = cache.steps[l][t];
            const std::vector<double>& c_prev = t > 0 ? cache.steps[l][t - 1].c : zeros;
            const std::vector<double>& h_prev = t > 0 ? cache.steps[l][t - 1].h : zeros;
            const std::vector<double>& x = cache.inputs[l][t];
            for (std::size_t k = 0; k < H; ++k) {
                const double dh = dh_next[k] + dh_above[t][k];
                const double d_o = dh * s.tanh_c[k];
                const double dc = dc_next[k] + dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                da[k] = dc * c_prev[k] * s.f[k] * (1.0 - s.f[k]);
                da[H + k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
                da[2 * H + k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
                da[3 * H + k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dc_next[k] = dc * s.f[k];
            }
            std::fill(dh_next.begin(), dh_next.end(), 0.0);
            for (std::size_t r = 0; r < 4 * H; ++r) {
                const double a = da[r];
                if (a == 0.0) continue;
                double* gW = grad.data() + off.W + r * D;
                const double* W = p.W.data() + r * D;
                for (std::size_t j = 0; j < D; ++j) {
                    gW[j] += a * x[j];
                    dx[t][j] += a * W[j];
                }
                double* gU = grad.data() + off.U + r * H;
                const double* U = p.U.data() + r * H;
                for (std::size_t j = 0; j < H; ++j) {
                    gU[j] += a * h_prev[j];
                    dh_next[j] += a * U[j];
                }
                grad[off.b + r] += a;
            }
        }
        dh_above = std::move(dx);
    }
    return grad;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam: state size mismatch");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    const double decay = state.learning_rate * state.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
        params[k] -= decay * params[k];
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k] * grads[k];
        const double m_hat = state.m[k] / bias1;
        const double v_hat = state.v[k] / bias2;
        params[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

SequenceDataset build_sequences(const std::vector<std::vector<double>>& monthly, std::size_t window,
                                std::array<double, 3> fractions) {
    if (window < 1) throw std::invalid_argument("build_sequences: window must be >= 1");
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
        throw std::invalid_argument("build_sequences: fractions must be non-negative and sum to 1");
    }
    SequenceDataset data;
    data.window = window;

    struct Plan {
        std::size_t well, n_train, n_val, n_test;
    };
    std::vector<Plan> plans;
    double sum = 0.0, sumsq = 0.0;
    std::size_t count = 0;
    for (std::size_t w = 0; w < monthly.size(); ++w) {
        const auto& series = monthly[w];
        if (series.size() < window + 1) {
            data.skipped_wells.push_back(w);
            std::clog << "warning: well " << w << " has " << series.size() << " months, fewer than window+1 ("
                      << window + 1 << "); skipped\n";
            continue;
        }
        const std::size_t m = series.size() - window;
        Plan p{w, 0, 0, 0};
        p.n_val = static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(m) + 1e-9));
        p.n_test = static_cast<std::size_t>(std::floor(fractions[2] * static_cast<double>(m) + 1e-9));
        p.n_train = m - p.n_val - p.n_test;
        plans.push_back(p);
        // Months covered by training windows: 0 .. window + n_train - 1.
        for (std::size_t t = 0; t < window + p.n_train; ++t) {
            sum += series[t];
            sumsq += series[t] * series[t];
            ++count;
        }
    }
    if (count > 0) {
        data.center = sum / static_cast<double>(count);
        const double var = std::max(0.0, sumsq / static_cast<double>(count) - data.center * data.center);
        data.scale = var > 0.0 ? std::sqrt(var) : 1.0;
    }

    for (const auto& p : plans) {
        const auto& series = monthly[p.well];
        const std::size_t m = series.size() - window;
        for (std::size_t k = 0; k < m; ++k) {
            SequenceWindow sw;
            sw.well = p.well;
            sw.target_month = k + window;
            sw.inputs.reserve(window);
            for (std::size_t t = k; t < k + window; ++t) sw.inputs.push_back((series[t] - data.center) / data.scale);
            sw.target = (series[k + window] - data.center) / data.scale;
            if (k < p.n_train) {
                data.train.push_back(std::move(sw));
            } else if (k < p.n_train + p.n_val) {
                data.validation.push_back(std::move(sw));
            } else {
                data.test.push_back(std::move(sw));
            }
        }
    }
    return data;
}

double predict_lstm(const LstmNetwork& net, std::span<const double> window) {
    return forward(net, window, false).prediction;
}

namespace {

double mean_squared_error(const LstmNetwork& net, const std::vector<SequenceWindow>& windows) {
    double ss = 0.0;
    for (const auto& w : windows) {
        const double e = predict_lstm(net, w.inputs) - w.target;
        ss += e * e;
    }
    return ss / static_cast<double>(windows.size());
}

}  // namespace

LstmTrainResult train_lstm(const SequenceDataset& data, const LstmHyper& hyper) {
    if (data.train.empty() || data.validation.empty()) {
        throw std::invalid_argument("train_lstm: training and validation parts must be non-empty");
    }
    if (hyper.batch_size < 1) throw std::invalid_argument("train_lstm: batch_size must be >= 1");
    LstmTrainResult result;
    result.net = LstmNetwork::initialized(hyper.hidden, hyper.dropout, derive_seed(hyper.seed, 0));
    AdamState adam;
    adam.learning_rate = hyper.learning_rate;
    adam.weight_decay = hyper.weight_decay;
    Rng rng(derive_seed(hyper.seed, 1));

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> grad_sum(result.net.parameter_count());
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_ss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            const std::size_t end = std::min(order.size(), start + hyper.batch_size);
            const double batch = static_cast<double>(end - start);
            std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const SequenceWindow& w = data.train[order[k]];
                const ForwardResult fr = forward(result.net, w.inputs, true, &rng);
                const double err = fr.prediction - w.target;
                if (!std::isfinite(err)) {
                    throw std::runtime_error("train_lstm: non-finite loss at epoch " + std::to_string(epoch + 1));
                }
                epoch_ss += err * err;
                const auto g = backward(result.net, fr.cache, 2.0 * err / batch);
                for (std::size_t p = 0; p < g.size(); ++p) grad_sum[p] += g[p];
            }
            adam_step(result.net.parameters(), grad_sum, adam);
        }
        const double train_loss = epoch_ss / static_cast<double>(order.size());
        const double val_loss = mean_squared_error(result.net, data.validation);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            throw std::runtime_error("train_lstm: non-finite loss at epoch " + std::to_string(epoch + 1));
        }
        result.train_loss.push_back(train_loss);
        result.val_loss.push_back(val_loss);
    }
    return result;
}

nlohmann::json lstm_to_json(const LstmNetwork& net) {
    return {{"format", "wellml.lstm"},
            {"version", 1},
            {"input_size", net.input_size()},
            {"hidden", net.hidden_sizes()},
            {"dropout", net.dropout_rate()},
            {"parameters", std::vector<double>(net.parameters().begin(), net.parameters().end())}};
}

LstmNetwork lstm_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "wellml.lstm" || doc.value("version", 0) != 1) {
        throw std::runtime_error("lstm json: unsupported format or version");
    }
    LstmNetwork net(doc.at("hidden").get<std::vector<std::size_t>>(), doc.at("dropout").get<double>(),
                    doc.at("input_size").get<std::size_t>());
    const auto params = doc.at("parameters").get<std::vector<double>>();
    if (params.size() != net.parameter_count()) throw std::runtime_error("lstm json: parameter count mismatch");
    std::copy(params.begin(), params.end(), net.parameters().begin());
    return net;
}

}  // namespace wellml
