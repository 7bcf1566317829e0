#pragma once

#include <string>
#include <vector>

#include "ppap/autodiff.hpp"
#include "ppap/rng.hpp"

namespace ppap {

/// Ordered registry of learnable parameters. Registration order is
/// deterministic, which keeps optimizer state and checkpoints stable.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Var var;
        bool no_decay;
    };

    Var add(const std::string& name, Tensor init, bool no_decay = false);
    void track(const std::string& name, const Var& v, bool no_decay = false);

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    const Var* find(const std::string& name) const;
    void zero_grad();
    int64_t total_parameters() const;

private:
    std::vector<Entry> entries_;
};

/// Decoupled weight decay Adam. Decay is skipped for entries registered with
/// no_decay (layer-norm gains and biases).
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 2.5e-5)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void step(ParamStore& params, double lr);
    int64_t steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_, weight_decay_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// ---- initializers ----
Tensor randn_tensor(std::vector<int> shape, double stddev, RngStream& rng);
/// N(0, 1/fan_in) weights
Tensor lecun_tensor(std::vector<int> shape, int fan_in, RngStream& rng);

// ---- layers ----

struct Linear {
    Var w;  // (in, out)
    Var b;  // (out), undefined when bias-free
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int in, int out, RngStream& rng,
           bool with_bias = true);
    Var forward(const Var& x) const;  // (n, in) -> (n, out)
};

struct LayerNorm {
    Var gain, bias;
    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& name, int width);
    Var forward(const Var& x) const;
};

struct Mlp {
    Linear fc1, fc2;
    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& name, int width, int hidden, RngStream& rng);
    Var forward(const Var& x) const;  // fc2(gelu(fc1(x)))
};

/// Single-head scaled dot-product attention with projections.
struct AttentionProj {
    Linear q, k, v, out;
    int width = 0;
    AttentionProj() = default;
    AttentionProj(ParamStore& ps, const std::string& name, int width, RngStream& rng);
    /// queries (nq, d), keys/values (nk, d) -> (nq, d)
    Var forward(const Var& queries, const Var& keys_values) const;
};

struct Conv2dLayer {
    Var w, b;
    int stride = 1, pad = 0;
    Conv2dLayer() = default;
    Conv2dLayer(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int kernel,
                int stride, int pad, RngStream& rng);
    Var forward(const Var& x) const;
};

struct ConvT2dLayer {
    Var w, b;
    int stride = 2, pad = 1;
    ConvT2dLayer() = default;
    ConvT2dLayer(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int kernel,
                 int stride, int pad, RngStream& rng);
    Var forward(const Var& x) const;
};

}  // namespace ppap
