#include "ppap/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ppap {

Var ParamStore::add(const std::string& name, Tensor init, bool no_decay) {
    Var v = Var::param(std::move(init));
    track(name, v, no_decay);
    return v;
}

void ParamStore::track(const std::string& name, const Var& v, bool no_decay) {
    for (const auto& e : entries_)
        if (e.name == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
    entries_.push_back({name, v, no_decay});
}

const Var* ParamStore::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e.var;
    return nullptr;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.var.clear_grad();
}

int64_t ParamStore::total_parameters() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.var.val().numel();
    return n;
}

void AdamW::step(ParamStore& params, double lr) {
    auto& entries = params.entries();
    if (m_.size() != entries.size()) {
        m_.clear();
        v_.clear();
        for (const auto& e : entries) {
            m_.push_back(Tensor::zeros(e.var.val().shape()));
            v_.push_back(Tensor::zeros(e.var.val().shape()));
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t p = 0; p < entries.size(); ++p) {
        auto& var = entries[p].var;
        Tensor& x = var.val_mut();
        const Tensor& g = var.grad();
        for (int64_t i = 0; i < x.numel(); ++i) {
            m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
            v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m_[p][i] / bc1;
            const double vhat = v_[p][i] / bc2;
            double upd = mhat / (std::sqrt(vhat) + eps_);
            if (!entries[p].no_decay) upd += weight_decay_ * x[i];
            x[i] -= lr * upd;
        }
    }
}

Tensor randn_tensor(std::vector<int> shape, double stddev, RngStream& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.normal();
    return t;
}

Tensor lecun_tensor(std::vector<int> shape, int fan_in, RngStream& rng) {
    return randn_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, RngStream& rng,
               bool with_bias) {
    w = ps.add(name + ".w", lecun_tensor({in, out}, in, rng));
    if (with_bias) b = ps.add(name + ".b", Tensor({out}));
}

Var Linear::forward(const Var& x) const {
    Var y = matmul(x, w);
    if (b.defined()) y = add_rowvec(y, b);
    return y;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int width) {
    gain = ps.add(name + ".g", Tensor::full({width}, 1.0), /*no_decay=*/true);
    bias = ps.add(name + ".b", Tensor({width}), /*no_decay=*/true);
}

Var LayerNorm::forward(const Var& x) const { return layer_norm_rows(x, gain, bias); }

Mlp::Mlp(ParamStore& ps, const std::string& name, int width, int hidden, RngStream& rng)
    : fc1(ps, name + ".fc1", width, hidden, rng), fc2(ps, name + ".fc2", hidden, width, rng) {}

Var Mlp::forward(const Var& x) const { return fc2.forward(gelu(fc1.forward(x))); }

AttentionProj::AttentionProj(ParamStore& ps, const std::string& name, int width_, RngStream& rng)
    : q(ps, name + ".q", width_, width_, rng),
      k(ps, name + ".k", width_, width_, rng),
      v(ps, name + ".v", width_, width_, rng),
      out(ps, name + ".o", width_, width_, rng),
      width(width_) {}

Var AttentionProj::forward(const Var& queries, const Var& keys_values) const {
    Var Q = q.forward(queries);
    Var K = k.forward(keys_values);
    Var V = v.forward(keys_values);
    Var att = softmax_rows(scale(matmul_nt(Q, K), 1.0 / std::sqrt(static_cast<double>(width))));
    return out.forward(matmul(att, V));
}

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& name, int in_ch, int out_ch,
                         int kernel, int stride_, int pad_, RngStream& rng)
    : stride(stride_), pad(pad_) {
    w = ps.add(name + ".w", lecun_tensor({out_ch, in_ch, kernel, kernel},
                                         in_ch * kernel * kernel, rng));
    b = ps.add(name + ".b", Tensor({out_ch}));
}

Var Conv2dLayer::forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }

ConvT2dLayer::ConvT2dLayer(ParamStore& ps, const std::string& name, int in_ch, int out_ch,
                           int kernel, int stride_, int pad_, RngStream& rng)
    : stride(stride_), pad(pad_) {
    w = ps.add(name + ".w", lecun_tensor({in_ch, out_ch, kernel, kernel},
                                         in_ch * kernel * kernel, rng));
    b = ps.add(name + ".b", Tensor({out_ch}));
}

Var ConvT2dLayer::forward(const Var& x) const { return conv_transpose2d(x, w, b, stride, pad); }

}  // namespace ppap
