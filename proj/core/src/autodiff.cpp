#include "ppap/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace ppap {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap as_mat(const Tensor& t, int rows, int cols) { return ECMap(t.data(), rows, cols); }
EMap as_mat(Tensor& t, int rows, int cols) { return EMap(t.data(), rows, cols); }

void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
    bool req = false;
    for (const auto& v : inputs) req = req || v.requires_grad();
    Var out(std::move(value), req);
    if (req) {
        auto& n = *out.node();
        n.parents.reserve(inputs.size());
        for (auto& v : inputs) n.parents.push_back(v.node());
        n.backprop = std::move(backprop);
    }
    return out;
}

// bilinear taps for one output coordinate (align_corners = false)
struct Taps {
    int i0, i1;
    double w0, w1;
};
Taps taps_for(int out_i, int out_n, int in_n) {
    const double src = (out_i + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
    double s = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    int i0 = static_cast<int>(std::floor(s));
    i0 = std::min(i0, in_n - 2 >= 0 ? in_n - 2 : 0);
    const int i1 = std::min(i0 + 1, in_n - 1);
    const double w1 = s - i0;
    return {i0, i1, 1.0 - w1, w1};
}

}  // namespace

void backward(const Var& root) {
    check(root.defined() && root.val().numel() == 1, "backward: root must be scalar");
    if (!root.requires_grad()) return;

    Node* r = root.node().get();
    std::vector<Node*> order;
    std::unordered_set<Node*> visited{r};
    std::vector<std::pair<Node*, size_t>> stack{{r, 0}};
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    r->grad_ref()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    check(a.val().same_shape(b.val()), "add: shape mismatch");
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.val()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = *n.parents[k];
            if (!p.requires_grad) continue;
            auto& g = p.grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check(a.val().same_shape(b.val()), "sub: shape mismatch");
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.val()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check(a.val().same_shape(b.val()), "mul: shape mismatch");
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.val()[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

Var scale(const Var& a, double c) {
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return make_op(std::move(out), {a}, [c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += c * n.grad[i];
    });
}

Var add_scalar(const Var& a, double c) {
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var square(const Var& a) {
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += 2.0 * av[i] * n.grad[i];
    });
}

Var exp_op(const Var& a) {
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.value[i] * n.grad[i];
    });
}

Var log_op(const Var& a) {
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] / av[i];
    });
}

Var gelu(const Var& a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
    }
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) {
            const double x = av[i];
            const double u = kC * (x + kA * x * x * x);
            const double t = std::tanh(u);
            const double sech2 = 1.0 - t * t;
            const double d = 0.5 * (1.0 + t) + 0.5 * x * sech2 * kC * (1.0 + 3.0 * kA * x * x);
            g[i] += d * n.grad[i];
        }
    });
}

Var softplus(const Var& a) {
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double x = out[i];
        out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    }
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-av[i]));
            g[i] += s * n.grad[i];
        }
    });
}

Var clamp_min(const Var& a, double floor) {
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], floor);
    return make_op(std::move(out), {a}, [floor](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (av[i] > floor) g[i] += n.grad[i];
    });
}

Var mul_scalar_var(const Var& a, const Var& s) {
    check(s.val().numel() == 1, "mul_scalar_var: scale must be scalar");
    const double sv = s.val()[0];
    Tensor out = a.val();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= sv;
    return make_op(std::move(out), {a, s}, [sv](Node& n) {
        const Tensor& av = n.parents[0]->value;
        if (n.parents[0]->requires_grad) {
            auto& g = n.parents[0]->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += sv * n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            auto& g = n.parents[1]->grad_ref();
            double acc = 0.0;
            for (int64_t i = 0; i < av.numel(); ++i) acc += av[i] * n.grad[i];
            g[0] += acc;
        }
    });
}

// ------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
    check(a.val().ndim() == 2 && b.val().ndim() == 2, "matmul: expects 2-D");
    const int n = a.val().dim(0), k = a.val().dim(1), m = b.val().dim(1);
    check(b.val().dim(0) == k, "matmul: inner dims differ");
    Tensor out({n, m});
    as_mat(out, n, m).noalias() = as_mat(a.val(), n, k) * as_mat(b.val(), k, m);
    return make_op(std::move(out), {a, b}, [n, k, m](Node& nd) {
        auto g = as_mat(nd.grad, n, m);
        if (nd.parents[0]->requires_grad) {
            auto da = as_mat(nd.parents[0]->grad_ref(), n, k);
            da.noalias() += g * as_mat(nd.parents[1]->value, k, m).transpose();
        }
        if (nd.parents[1]->requires_grad) {
            auto db = as_mat(nd.parents[1]->grad_ref(), k, m);
            db.noalias() += as_mat(nd.parents[0]->value, n, k).transpose() * g;
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    check(a.val().ndim() == 2 && b.val().ndim() == 2, "matmul_nt: expects 2-D");
    const int n = a.val().dim(0), k = a.val().dim(1), m = b.val().dim(0);
    check(b.val().dim(1) == k, "matmul_nt: inner dims differ");
    Tensor out({n, m});
    as_mat(out, n, m).noalias() = as_mat(a.val(), n, k) * as_mat(b.val(), m, k).transpose();
    return make_op(std::move(out), {a, b}, [n, k, m](Node& nd) {
        auto g = as_mat(nd.grad, n, m);
        if (nd.parents[0]->requires_grad) {
            auto da = as_mat(nd.parents[0]->grad_ref(), n, k);
            da.noalias() += g * as_mat(nd.parents[1]->value, m, k);
        }
        if (nd.parents[1]->requires_grad) {
            auto db = as_mat(nd.parents[1]->grad_ref(), m, k);
            db.noalias() += g.transpose() * as_mat(nd.parents[0]->value, n, k);
        }
    });
}

Var transpose(const Var& a) {
    check(a.val().ndim() == 2, "transpose: expects 2-D");
    const int n = a.val().dim(0), m = a.val().dim(1);
    Tensor out({m, n});
    as_mat(out, m, n).noalias() = as_mat(a.val(), n, m).transpose();
    return make_op(std::move(out), {a}, [n, m](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto da = as_mat(nd.parents[0]->grad_ref(), n, m);
        da.noalias() += as_mat(nd.grad, m, n).transpose();
    });
}

Var add_rowvec(const Var& m, const Var& v) {
    check(m.val().ndim() == 2, "add_rowvec: expects 2-D");
    const int n = m.val().dim(0), c = m.val().dim(1);
    check(v.val().numel() == c, "add_rowvec: vector length mismatch");
    Tensor out = m.val();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) += v.val()[j];
    return make_op(std::move(out), {m, v}, [n, c](Node& nd) {
        if (nd.parents[0]->requires_grad) {
            auto& g = nd.parents[0]->grad_ref();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += nd.grad[i];
        }
        if (nd.parents[1]->requires_grad) {
            auto& g = nd.parents[1]->grad_ref();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) g[j] += nd.grad[static_cast<int64_t>(i) * c + j];
        }
    });
}

// ------------------------------------------------------------------ reductions

Var sum(const Var& a) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.val().numel(); ++i) acc += a.val()[i];
    return make_op(Tensor::scalar(acc), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0];
    });
}

Var mean(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a.val().numel());
    double acc = 0.0;
    for (int64_t i = 0; i < a.val().numel(); ++i) acc += a.val()[i];
    return make_op(Tensor::scalar(acc * inv), {a}, [inv](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0] * inv;
    });
}

Var sum_cols(const Var& a) {
    check(a.val().ndim() == 2, "sum_cols: expects 2-D");
    const int n = a.val().dim(0), c = a.val().dim(1);
    Tensor out({n, 1});
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < c; ++j) acc += a.val().at(i, j);
        out[i] = acc;
    }
    return make_op(std::move(out), {a}, [n, c](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) g[static_cast<int64_t>(i) * c + j] += nd.grad[i];
    });
}

Var mean_over_rows(const Var& a) {
    check(a.val().ndim() == 2, "mean_over_rows: expects 2-D");
    const int n = a.val().dim(0), c = a.val().dim(1);
    const double inv = 1.0 / n;
    Tensor out({1, c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) out[j] += a.val().at(i, j) * inv;
    return make_op(std::move(out), {a}, [n, c, inv](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) g[static_cast<int64_t>(i) * c + j] += nd.grad[j] * inv;
    });
}

Var mean_diag(const Var& a) {
    check(a.val().ndim() == 2 && a.val().dim(0) == a.val().dim(1), "mean_diag: expects square");
    const int n = a.val().dim(0);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a.val().at(i, i);
    return make_op(Tensor::scalar(acc / n), {a}, [n](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        for (int i = 0; i < n; ++i) g[static_cast<int64_t>(i) * n + i] += nd.grad[0] / n;
    });
}

// ---------------------------------------------------------------- rows / shape

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a.val().reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_ref();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

Var slice_rows(const Var& a, int r0, int r1) {
    check(a.val().ndim() == 2, "slice_rows: expects 2-D");
    const int c = a.val().dim(1);
    check(0 <= r0 && r0 < r1 && r1 <= a.val().dim(0), "slice_rows: bad range");
    Tensor out({r1 - r0, c});
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < c; ++j) out.at(i - r0, j) = a.val().at(i, j);
    return make_op(std::move(out), {a}, [r0, r1, c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_ref();
        for (int i = r0; i < r1; ++i)
            for (int j = 0; j < c; ++j)
                g[static_cast<int64_t>(i) * c + j] += n.grad[static_cast<int64_t>(i - r0) * c + j];
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    check(!parts.empty(), "concat_rows: empty input");
    const int c = parts[0].val().dim(1);
    int n = 0;
    for (const auto& p : parts) {
        check(p.val().ndim() == 2 && p.val().dim(1) == c, "concat_rows: column mismatch");
        n += p.val().dim(0);
    }
    Tensor out({n, c});
    int row = 0;
    for (const auto& p : parts) {
        const int pn = p.val().dim(0);
        std::copy(p.val().data(), p.val().data() + static_cast<int64_t>(pn) * c,
                  out.data() + static_cast<int64_t>(row) * c);
        row += pn;
    }
    return make_op(std::move(out), parts, [c](Node& nd) {
        int row = 0;
        for (auto& p : nd.parents) {
            const int pn = p->value.dim(0);
            if (p->requires_grad) {
                auto& g = p->grad_ref();
                for (int64_t i = 0; i < static_cast<int64_t>(pn) * c; ++i)
                    g[i] += nd.grad[static_cast<int64_t>(row) * c + i];
            }
            row += pn;
        }
    });
}

Var gather_rows(const Var& a, std::vector<int> rows) {
    check(a.val().ndim() == 2, "gather_rows: expects 2-D");
    const int c = a.val().dim(1);
    Tensor out({static_cast<int>(rows.size()), c});
    for (size_t i = 0; i < rows.size(); ++i) {
        check(rows[i] >= 0 && rows[i] < a.val().dim(0), "gather_rows: index out of range");
        for (int j = 0; j < c; ++j) out.at(static_cast<int>(i), j) = a.val().at(rows[i], j);
    }
    return make_op(std::move(out), {a}, [rows = std::move(rows), c](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->grad_ref();
        for (size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < c; ++j)
                g[static_cast<int64_t>(rows[i]) * c + j] += n.grad[static_cast<int64_t>(i) * c + j];
    });
}

Var mean_group_rows(const Var& a, int k, int g) {
    check(a.val().ndim() == 2 && a.val().dim(0) == k * g, "mean_group_rows: bad shape");
    const int c = a.val().dim(1);
    const double inv = 1.0 / g;
    Tensor out({k, c});
    for (int i = 0; i < k; ++i)
        for (int t = 0; t < g; ++t)
            for (int j = 0; j < c; ++j) out.at(i, j) += a.val().at(i * g + t, j) * inv;
    return make_op(std::move(out), {a}, [k, g, c, inv](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& gr = nd.parents[0]->grad_ref();
        for (int i = 0; i < k; ++i)
            for (int t = 0; t < g; ++t)
                for (int j = 0; j < c; ++j)
                    gr[(static_cast<int64_t>(i) * g + t) * c + j] +=
                        nd.grad[static_cast<int64_t>(i) * c + j] * inv;
    });
}

// ------------------------------------------------- normalization & attention

Var softmax_rows(const Var& a) {
    check(a.val().ndim() == 2, "softmax_rows: expects 2-D");
    const int n = a.val().dim(0), c = a.val().dim(1);
    Tensor out = a.val();
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < c; ++j) mx = std::max(mx, out.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - mx);
            z += out.at(i, j);
        }
        for (int j = 0; j < c; ++j) out.at(i, j) /= z;
    }
    return make_op(std::move(out), {a}, [n, c](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j)
                dot += nd.grad[static_cast<int64_t>(i) * c + j] * nd.value.at(i, j);
            for (int j = 0; j < c; ++j)
                g[static_cast<int64_t>(i) * c + j] +=
                    nd.value.at(i, j) * (nd.grad[static_cast<int64_t>(i) * c + j] - dot);
        }
    });
}

Var log_softmax_rows(const Var& a) {
    check(a.val().ndim() == 2, "log_softmax_rows: expects 2-D");
    const int n = a.val().dim(0), c = a.val().dim(1);
    Tensor out = a.val();
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < c; ++j) mx = std::max(mx, out.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(out.at(i, j) - mx);
        const double lse = mx + std::log(z);
        for (int j = 0; j < c; ++j) out.at(i, j) -= lse;
    }
    return make_op(std::move(out), {a}, [n, c](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        for (int i = 0; i < n; ++i) {
            double gsum = 0.0;
            for (int j = 0; j < c; ++j) gsum += nd.grad[static_cast<int64_t>(i) * c + j];
            for (int j = 0; j < c; ++j)
                g[static_cast<int64_t>(i) * c + j] +=
                    nd.grad[static_cast<int64_t>(i) * c + j] - std::exp(nd.value.at(i, j)) * gsum;
        }
    });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
    check(x.val().ndim() == 2, "layer_norm_rows: expects 2-D");
    const int n = x.val().dim(0), c = x.val().dim(1);
    check(gain.val().numel() == c && bias.val().numel() == c, "layer_norm_rows: param length");
    Tensor out({n, c});
    // cache per-row inverse std and normalized values for backward
    auto istds = std::make_shared<std::vector<double>>(n);
    auto xhat = std::make_shared<Tensor>(Tensor({n, c}));
    for (int i = 0; i < n; ++i) {
        double m = 0.0;
        for (int j = 0; j < c; ++j) m += x.val().at(i, j);
        m /= c;
        double v = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = x.val().at(i, j) - m;
            v += d * d;
        }
        v /= c;
        const double istd = 1.0 / std::sqrt(v + eps);
        (*istds)[i] = istd;
        for (int j = 0; j < c; ++j) {
            const double h = (x.val().at(i, j) - m) * istd;
            xhat->at(i, j) = h;
            out.at(i, j) = h * gain.val()[j] + bias.val()[j];
        }
    }
    return make_op(std::move(out), {x, gain, bias}, [n, c, istds, xhat](Node& nd) {
        const Tensor& gv = nd.parents[1]->value;
        for (int i = 0; i < n; ++i) {
            if (nd.parents[0]->requires_grad) {
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < c; ++j) {
                    const double dxh = nd.grad[static_cast<int64_t>(i) * c + j] * gv[j];
                    m1 += dxh;
                    m2 += dxh * xhat->at(i, j);
                }
                m1 /= c;
                m2 /= c;
                auto& g = nd.parents[0]->grad_ref();
                for (int j = 0; j < c; ++j) {
                    const double dxh = nd.grad[static_cast<int64_t>(i) * c + j] * gv[j];
                    g[static_cast<int64_t>(i) * c + j] +=
                        (dxh - m1 - xhat->at(i, j) * m2) * (*istds)[i];
                }
            }
            if (nd.parents[1]->requires_grad) {
                auto& g = nd.parents[1]->grad_ref();
                for (int j = 0; j < c; ++j)
                    g[j] += nd.grad[static_cast<int64_t>(i) * c + j] * xhat->at(i, j);
            }
            if (nd.parents[2]->requires_grad) {
                auto& g = nd.parents[2]->grad_ref();
                for (int j = 0; j < c; ++j) g[j] += nd.grad[static_cast<int64_t>(i) * c + j];
            }
        }
    });
}

Var l2_normalize_rows(const Var& x, double min_norm) {
    check(x.val().ndim() == 2, "l2_normalize_rows: expects 2-D");
    const int n = x.val().dim(0), c = x.val().dim(1);
    auto norms = std::make_shared<std::vector<double>>(n);
    Tensor out({n, c});
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += x.val().at(i, j) * x.val().at(i, j);
        const double nm = std::sqrt(s);
        if (!(nm >= min_norm))
            throw std::runtime_error("l2_normalize_rows: row norm below minimum (degenerate row)");
        (*norms)[i] = nm;
        for (int j = 0; j < c; ++j) out.at(i, j) = x.val().at(i, j) / nm;
    }
    return make_op(std::move(out), {x}, [n, c, norms](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j)
                dot += nd.grad[static_cast<int64_t>(i) * c + j] * nd.value.at(i, j);
            for (int j = 0; j < c; ++j)
                g[static_cast<int64_t>(i) * c + j] +=
                    (nd.grad[static_cast<int64_t>(i) * c + j] - nd.value.at(i, j) * dot) /
                    (*norms)[i];
        }
    });
}

Var l2_normalize_rows_stable(const Var& x, double eps) {
    check(x.val().ndim() == 2, "l2_normalize_rows_stable: expects 2-D");
    const int n = x.val().dim(0), c = x.val().dim(1);
    auto rs = std::make_shared<std::vector<double>>(n);  // 1/sqrt(s + eps^2)
    Tensor out({n, c});
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += x.val().at(i, j) * x.val().at(i, j);
        const double r = 1.0 / std::sqrt(s + eps * eps);
        (*rs)[i] = r;
        for (int j = 0; j < c; ++j) out.at(i, j) = x.val().at(i, j) * r;
    }
    return make_op(std::move(out), {x}, [n, c, rs](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        const Tensor& xv = nd.parents[0]->value;
        auto& g = nd.parents[0]->grad_ref();
        for (int i = 0; i < n; ++i) {
            const double r = (*rs)[i];
            double dot = 0.0;
            for (int j = 0; j < c; ++j)
                dot += nd.grad[static_cast<int64_t>(i) * c + j] * xv.at(i, j);
            for (int j = 0; j < c; ++j)
                g[static_cast<int64_t>(i) * c + j] +=
                    r * nd.grad[static_cast<int64_t>(i) * c + j] - xv.at(i, j) * r * r * r * dot;
        }
    });
}

// -------------------------------------------------------------- spatial (CHW)

namespace {

struct ConvGeom {
    int ci, hi, wi, co, kh, kw, stride, pad, ho, wo;
};

void im2col(const double* x, const ConvGeom& g, double* col) {
    // col is (ci*kh*kw) x (ho*wo)
    const int span = g.ho * g.wo;
    for (int c = 0; c < g.ci; ++c)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                double* dst = col + ((static_cast<int64_t>(c) * g.kh + ky) * g.kw + kx) * span;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        dst[oy * g.wo + ox] =
                            (iy >= 0 && iy < g.hi && ix >= 0 && ix < g.wi)
                                ? x[(static_cast<int64_t>(c) * g.hi + iy) * g.wi + ix]
                                : 0.0;
                    }
                }
            }
}

void col2im_accum(const double* col, const ConvGeom& g, double* x) {
    const int span = g.ho * g.wo;
    for (int c = 0; c < g.ci; ++c)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                const double* src = col + ((static_cast<int64_t>(c) * g.kh + ky) * g.kw + kx) * span;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.hi) continue;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix < 0 || ix >= g.wi) continue;
                        x[(static_cast<int64_t>(c) * g.hi + iy) * g.wi + ix] += src[oy * g.wo + ox];
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check(x.val().ndim() == 3 && w.val().ndim() == 4, "conv2d: expects CHW input, OIHW weight");
    ConvGeom g{};
    g.ci = x.val().dim(0);
    g.hi = x.val().dim(1);
    g.wi = x.val().dim(2);
    g.co = w.val().dim(0);
    g.kh = w.val().dim(2);
    g.kw = w.val().dim(3);
    g.stride = stride;
    g.pad = pad;
    check(w.val().dim(1) == g.ci, "conv2d: channel mismatch");
    check(b.val().numel() == g.co, "conv2d: bias length mismatch");
    g.ho = (g.hi + 2 * pad - g.kh) / stride + 1;
    g.wo = (g.wi + 2 * pad - g.kw) / stride + 1;
    check(g.ho > 0 && g.wo > 0, "conv2d: empty output");

    const int kdim = g.ci * g.kh * g.kw;
    const int span = g.ho * g.wo;
    auto col = std::make_shared<Tensor>(Tensor({kdim, span}));
    im2col(x.val().data(), g, col->data());

    Tensor out({g.co, g.ho, g.wo});
    as_mat(out, g.co, span).noalias() =
        as_mat(w.val(), g.co, kdim) * as_mat(*col, kdim, span);
    for (int o = 0; o < g.co; ++o)
        for (int i = 0; i < span; ++i) out[static_cast<int64_t>(o) * span + i] += b.val()[o];

    return make_op(std::move(out), {x, w, b}, [g, kdim, span, col](Node& nd) {
        auto gm = as_mat(nd.grad, g.co, span);
        if (nd.parents[1]->requires_grad) {
            auto dw = as_mat(nd.parents[1]->grad_ref(), g.co, kdim);
            dw.noalias() += gm * as_mat(*col, kdim, span).transpose();
        }
        if (nd.parents[2]->requires_grad) {
            auto& db = nd.parents[2]->grad_ref();
            for (int o = 0; o < g.co; ++o) {
                double acc = 0.0;
                for (int i = 0; i < span; ++i) acc += nd.grad[static_cast<int64_t>(o) * span + i];
                db[o] += acc;
            }
        }
        if (nd.parents[0]->requires_grad) {
            Tensor dcol({kdim, span});
            as_mat(dcol, kdim, span).noalias() =
                as_mat(nd.parents[1]->value, g.co, kdim).transpose() * gm;
            col2im_accum(dcol.data(), g, nd.parents[0]->grad_ref().data());
        }
    });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check(x.val().ndim() == 3 && w.val().ndim() == 4,
          "conv_transpose2d: expects CHW input, IOHW weight");
    const int ci = x.val().dim(0), hi = x.val().dim(1), wi = x.val().dim(2);
    check(w.val().dim(0) == ci, "conv_transpose2d: channel mismatch");
    const int co = w.val().dim(1), kh = w.val().dim(2), kw = w.val().dim(3);
    const int ho = (hi - 1) * stride - 2 * pad + kh;
    const int wo = (wi - 1) * stride - 2 * pad + kw;
    check(ho > 0 && wo > 0, "conv_transpose2d: empty output");
    check(b.val().numel() == co, "conv_transpose2d: bias length mismatch");

    // transposed conv output = col2im of (W^T . X) under the forward-conv
    // geometry whose input is the *output* of this op
    ConvGeom g{co, ho, wo, ci, kh, kw, stride, pad, hi, wi};
    const int kdim = co * kh * kw;
    const int span = hi * wi;

    Tensor cols({kdim, span});
    as_mat(cols, kdim, span).noalias() =
        as_mat(w.val(), ci, kdim).transpose() * as_mat(x.val(), ci, span);
    Tensor out({co, ho, wo});
    col2im_accum(cols.data(), g, out.data());
    for (int o = 0; o < co; ++o)
        for (int i = 0; i < ho * wo; ++i) out[static_cast<int64_t>(o) * ho * wo + i] += b.val()[o];

    return make_op(std::move(out), {x, w, b}, [g, ci, co, kdim, span, ho, wo](Node& nd) {
        Tensor gcol({kdim, span});
        im2col(nd.grad.data(), g, gcol.data());
        if (nd.parents[0]->requires_grad) {
            auto dx = as_mat(nd.parents[0]->grad_ref(), ci, span);
            dx.noalias() += as_mat(nd.parents[1]->value, ci, kdim) * as_mat(gcol, kdim, span);
        }
        if (nd.parents[1]->requires_grad) {
            auto dw = as_mat(nd.parents[1]->grad_ref(), ci, kdim);
            dw.noalias() +=
                as_mat(nd.parents[0]->value, ci, span) * as_mat(gcol, kdim, span).transpose();
        }
        if (nd.parents[2]->requires_grad) {
            auto& db = nd.parents[2]->grad_ref();
            for (int o = 0; o < co; ++o) {
                double acc = 0.0;
                for (int i = 0; i < ho * wo; ++i)
                    acc += nd.grad[static_cast<int64_t>(o) * ho * wo + i];
                db[o] += acc;
            }
        }
    });
}

Tensor resize_bilinear_tensor(const Tensor& x, int out_h, int out_w) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, out_h, out_w});
    for (int oy = 0; oy < out_h; ++oy) {
        const Taps ty = taps_for(oy, out_h, h);
        for (int ox = 0; ox < out_w; ++ox) {
            const Taps tx = taps_for(ox, out_w, w);
            for (int ch = 0; ch < c; ++ch) {
                out.at(ch, oy, ox) = ty.w0 * (tx.w0 * x.at(ch, ty.i0, tx.i0) +
                                              tx.w1 * x.at(ch, ty.i0, tx.i1)) +
                                     ty.w1 * (tx.w0 * x.at(ch, ty.i1, tx.i0) +
                                              tx.w1 * x.at(ch, ty.i1, tx.i1));
            }
        }
    }
    return out;
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    check(x.val().ndim() == 3, "resize_bilinear: expects CHW");
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    Tensor out = resize_bilinear_tensor(x.val(), out_h, out_w);
    return make_op(std::move(out), {x}, [c, h, w, out_h, out_w](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        for (int oy = 0; oy < out_h; ++oy) {
            const Taps ty = taps_for(oy, out_h, h);
            for (int ox = 0; ox < out_w; ++ox) {
                const Taps tx = taps_for(ox, out_w, w);
                for (int ch = 0; ch < c; ++ch) {
                    const double gv = nd.grad.at(ch, oy, ox);
                    g[(static_cast<int64_t>(ch) * h + ty.i0) * w + tx.i0] += ty.w0 * tx.w0 * gv;
                    g[(static_cast<int64_t>(ch) * h + ty.i0) * w + tx.i1] += ty.w0 * tx.w1 * gv;
                    g[(static_cast<int64_t>(ch) * h + ty.i1) * w + tx.i0] += ty.w1 * tx.w0 * gv;
                    g[(static_cast<int64_t>(ch) * h + ty.i1) * w + tx.i1] += ty.w1 * tx.w1 * gv;
                }
            }
        }
    });
}

Var grid_sample_rows(const Var& grid, int h, int w,
                     const std::vector<std::pair<double, double>>& pts) {
    check(grid.val().ndim() == 2 && grid.val().dim(0) == h * w, "grid_sample_rows: bad grid");
    const int c = grid.val().dim(1);
    const int np = static_cast<int>(pts.size());

    struct Tap4 {
        int r00, r01, r10, r11;
        double w00, w01, w10, w11;
    };
    auto taps = std::make_shared<std::vector<Tap4>>();
    taps->reserve(pts.size());
    Tensor out({np, c});
    for (int p = 0; p < np; ++p) {
        double gx = std::clamp(pts[p].first, 0.0, static_cast<double>(w - 1));
        double gy = std::clamp(pts[p].second, 0.0, static_cast<double>(h - 1));
        int x0 = std::min(static_cast<int>(std::floor(gx)), std::max(w - 2, 0));
        int y0 = std::min(static_cast<int>(std::floor(gy)), std::max(h - 2, 0));
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double fx = gx - x0, fy = gy - y0;
        Tap4 t{y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1,
               (1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
        taps->push_back(t);
        for (int j = 0; j < c; ++j)
            out.at(p, j) = t.w00 * grid.val().at(t.r00, j) + t.w01 * grid.val().at(t.r01, j) +
                           t.w10 * grid.val().at(t.r10, j) + t.w11 * grid.val().at(t.r11, j);
    }
    return make_op(std::move(out), {grid}, [c, taps](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        for (size_t p = 0; p < taps->size(); ++p) {
            const auto& t = (*taps)[p];
            for (int j = 0; j < c; ++j) {
                const double gv = nd.grad[static_cast<int64_t>(p) * c + j];
                g[static_cast<int64_t>(t.r00) * c + j] += t.w00 * gv;
                g[static_cast<int64_t>(t.r01) * c + j] += t.w01 * gv;
                g[static_cast<int64_t>(t.r10) * c + j] += t.w10 * gv;
                g[static_cast<int64_t>(t.r11) * c + j] += t.w11 * gv;
            }
        }
    });
}

Var masked_mse(const Var& pred, const Tensor& target, const Tensor& weights) {
    check(pred.val().same_shape(target), "masked_mse: shape mismatch");
    check(pred.val().ndim() == 3, "masked_mse: expects CHW");
    const int k = pred.val().dim(0);
    check(weights.numel() == k, "masked_mse: weight length mismatch");
    const int span = pred.val().dim(1) * pred.val().dim(2);
    int nvis = 0;
    for (int i = 0; i < k; ++i)
        if (weights[i] > 0) ++nvis;
    if (nvis == 0) return Var::constant(Tensor::scalar(0.0));  // caller decides how loud to be

    const double inv = 1.0 / (static_cast<double>(nvis) * span);
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        if (weights[i] <= 0) continue;
        for (int s = 0; s < span; ++s) {
            const double d =
                pred.val()[static_cast<int64_t>(i) * span + s] - target[static_cast<int64_t>(i) * span + s];
            acc += d * d;
        }
    }
    auto tgt = std::make_shared<Tensor>(target);
    auto wts = std::make_shared<Tensor>(weights);
    return make_op(Tensor::scalar(acc * inv), {pred}, [k, span, inv, tgt, wts](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        auto& g = nd.parents[0]->grad_ref();
        const Tensor& pv = nd.parents[0]->value;
        for (int i = 0; i < k; ++i) {
            if ((*wts)[i] <= 0) continue;
            for (int s = 0; s < span; ++s) {
                const int64_t idx = static_cast<int64_t>(i) * span + s;
                g[idx] += 2.0 * (pv[idx] - (*tgt)[idx]) * inv * nd.grad[0];
            }
        }
    });
}

Var grouped_mix(const std::vector<Var>& stack, const Var& w, const Var& b) {
    check(!stack.empty(), "grouped_mix: empty stack");
    const int k = stack[0].val().dim(0);
    const int span = stack[0].val().dim(1);
    const int ns = static_cast<int>(stack.size());
    check(w.val().ndim() == 2 && w.val().dim(0) == k && w.val().dim(1) == ns,
          "grouped_mix: mixing weights must be (K, N_s)");
    check(b.val().numel() == k, "grouped_mix: bias length mismatch");
    for (const auto& s : stack)
        check(s.val().dim(0) == k && s.val().dim(1) == span, "grouped_mix: stack shape mismatch");

    Tensor out({k, span});
    for (int i = 0; i < k; ++i)
        for (int s = 0; s < span; ++s) {
            double acc = b.val()[i];
            for (int n = 0; n < ns; ++n) acc += w.val().at(i, n) * stack[n].val().at(i, s);
            out.at(i, s) = acc;
        }
    std::vector<Var> inputs = stack;
    inputs.push_back(w);
    inputs.push_back(b);
    return make_op(std::move(out), std::move(inputs), [k, span, ns](Node& nd) {
        Node& wn = *nd.parents[ns];
        Node& bn = *nd.parents[ns + 1];
        for (int n = 0; n < ns; ++n) {
            if (!nd.parents[n]->requires_grad) continue;
            auto& g = nd.parents[n]->grad_ref();
            for (int i = 0; i < k; ++i)
                for (int s = 0; s < span; ++s)
                    g[static_cast<int64_t>(i) * span + s] +=
                        wn.value.at(i, n) * nd.grad[static_cast<int64_t>(i) * span + s];
        }
        if (wn.requires_grad) {
            auto& g = wn.grad_ref();
            for (int i = 0; i < k; ++i)
                for (int n = 0; n < ns; ++n) {
                    double acc = 0.0;
                    for (int s = 0; s < span; ++s)
                        acc += nd.parents[n]->value.at(i, s) *
                               nd.grad[static_cast<int64_t>(i) * span + s];
                    g[static_cast<int64_t>(i) * ns + n] += acc;
                }
        }
        if (bn.requires_grad) {
            auto& g = bn.grad_ref();
            for (int i = 0; i < k; ++i) {
                double acc = 0.0;
                for (int s = 0; s < span; ++s) acc += nd.grad[static_cast<int64_t>(i) * span + s];
                g[i] += acc;
            }
        }
    });
}

}  // namespace ppap
