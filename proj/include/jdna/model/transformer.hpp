#pragma once

// Pre-LayerNorm transformer encoder with exact manual backpropagation.
//
//   x      = token_embed[tok] + pos_embed[t]
//   block: x += Wo * attn(LN1(x));  x += W2 * gelu(W1 * LN2(x))
//   head:  classification reads position 0 of LNf(x); token prediction reads every
//          position that carries a label.
//
// Linear layers store W as [out x in]; y = x W^T + b. All reductions run in a fixed order.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jdna/core/param_set.hpp"
#include "jdna/core/rng.hpp"
#include "jdna/core/tensor.hpp"
#include "jdna/model/config.hpp"
#include "jdna/prune/mask.hpp"

namespace jdna::model {

inline std::string block_param(int b, const char* suffix) {
    return "block" + std::to_string(b) + "." + suffix;
}

inline const char* head_prefix(HeadKind k) { return k == HeadKind::classification ? "cls_head" : "lm_head"; }

namespace detail {

inline void add_uniform(ParamSet& p, std::string name, Shape shape, double scale, Rng& rng, bool prunable) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(-scale, scale);
    p.add(std::move(name), std::move(t), prunable);
}

inline void add_head(ParamSet& p, const ModelConfig& cfg, Rng& rng) {
    const std::string prefix = head_prefix(cfg.head);
    add_uniform(p, prefix + ".weight", {std::size_t(cfg.output_size()), std::size_t(cfg.d_model)},
                1.0 / std::sqrt(double(cfg.d_model)), rng, false);
    p.add(prefix + ".bias", Tensor({std::size_t(cfg.output_size())}));
}

}  // namespace detail

// Deterministic init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), embeddings use fan_in = d_model,
// biases 0, LayerNorm gains 1. Parameter order is the order of the add() calls below.
inline ParamSet init_params(const ModelConfig& cfg, Rng& rng) {
    validate(cfg);
    const auto d = std::size_t(cfg.d_model);
    const auto ff = std::size_t(cfg.d_ff());
    const double sd = 1.0 / std::sqrt(double(d));
    const double sff = 1.0 / std::sqrt(double(ff));
    ParamSet p;
    detail::add_uniform(p, "embed.token.weight", {std::size_t(cfg.vocab_size), d}, sd, rng, false);
    detail::add_uniform(p, "embed.pos.weight", {std::size_t(cfg.max_seq_len), d}, sd, rng, false);
    for (int b = 0; b < cfg.n_blocks; ++b) {
        p.add(block_param(b, "ln1.gain"), Tensor({d}, 1.0));
        p.add(block_param(b, "ln1.bias"), Tensor({d}));
        for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
            detail::add_uniform(p, block_param(b, proj) + ".weight", {d, d}, sd, rng, true);
            p.add(block_param(b, proj) + ".bias", Tensor({d}));
        }
        p.add(block_param(b, "ln2.gain"), Tensor({d}, 1.0));
        p.add(block_param(b, "ln2.bias"), Tensor({d}));
        detail::add_uniform(p, block_param(b, "ff1.weight"), {ff, d}, sd, rng, true);
        p.add(block_param(b, "ff1.bias"), Tensor({ff}));
        detail::add_uniform(p, block_param(b, "ff2.weight"), {d, ff}, sff, rng, true);
        p.add(block_param(b, "ff2.bias"), Tensor({d}));
    }
    p.add("final_ln.gain", Tensor({d}, 1.0));
    p.add("final_ln.bias", Tensor({d}));
    detail::add_head(p, cfg, rng);
    return p;
}

// Drops any existing head and appends a freshly initialised one for `cfg.head`.
inline void replace_head(ParamSet& params, const ModelConfig& cfg, Rng& rng) {
    for (auto kind : {HeadKind::classification, HeadKind::token_prediction}) {
        params.remove(std::string(head_prefix(kind)) + ".weight");
        params.remove(std::string(head_prefix(kind)) + ".bias");
    }
    detail::add_head(params, cfg, rng);
}

// What backward reports for pruned coordinates of a masked forward.
enum class MaskedGrad {
    effective,  // dL/dW_eff at every coordinate, as if the pruned weight were free
    zeroed,     // dL/dW for W_eff = W * mask, i.e. zero at pruned coordinates
};

namespace detail {

inline constexpr double kLnEps = 1e-5;
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

inline double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

struct LnCache {
    std::vector<double> rstd;
    Tensor xhat;
};

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, LnCache& cache) {
    const std::size_t n = x.rows(), d = x.cols();
    Tensor y({n, d});
    cache.xhat = Tensor({n, d});
    cache.rstd.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = x.row(i);
        double mean = 0.0;
        for (double v : xi) mean += v;
        mean /= double(d);
        double var = 0.0;
        for (double v : xi) var += (v - mean) * (v - mean);
        var /= double(d);
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        cache.rstd[i] = rstd;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xi[j] - mean) * rstd;
            cache.xhat.at(i, j) = xh;
            y.at(i, j) = gain[j] * xh + bias[j];
        }
    }
    return y;
}

// Accumulates into dx, dgain, dbias.
inline void layer_norm_backward(const Tensor& dy, const Tensor& gain, const LnCache& cache, Tensor& dx,
                                Tensor& dgain, Tensor& dbias) {
    const std::size_t n = dy.rows(), d = dy.cols();
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double g = dy.at(i, j);
            const double xh = cache.xhat.at(i, j);
            dgain[j] += g * xh;
            dbias[j] += g;
            dxhat[j] = g * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh;
        }
        mean_dxhat /= double(d);
        mean_dxhat_xhat /= double(d);
        for (std::size_t j = 0; j < d; ++j)
            dx.at(i, j) += cache.rstd[i] * (dxhat[j] - mean_dxhat - cache.xhat.at(i, j) * mean_dxhat_xhat);
    }
}

// y = x W^T + b
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t n = x.rows(), in = w.cols(), out = w.rows();
    Tensor wt({in, out});
    kernels::transpose(w.data(), wt.data(), out, in);
    Tensor y({n, out});
    kernels::gemm_acc(x.data(), wt.data(), y.data(), n, in, out);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) y.at(i, j) += b[j];
    return y;
}

// dx += dy W; dW += dy^T x; db += colsum(dy)
inline void linear_backward(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor* dx, Tensor& dw, Tensor& db) {
    const std::size_t n = x.rows(), in = w.cols(), out = w.rows();
    if (dx) kernels::gemm_acc(dy.data(), w.data(), dx->data(), n, out, in);
    kernels::gemm_tn_acc(dy.data(), x.data(), dw.data(), n, out, in);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) db[j] += dy.at(i, j);
}

struct BlockCache {
    Tensor x_in, h, q, k, v, probs, ctx, x_mid, h2, u, g;
    LnCache ln1, ln2;
};

}  // namespace detail

// Every intermediate of one forward pass; consumed by backward and by activation statistics.
struct ForwardCache {
    int batch_size = 0, seq_len = 0;
    std::vector<detail::BlockCache> blocks;
    Tensor x_out, hf;
    detail::LnCache lnf;
    std::vector<std::size_t> target_rows;  // rows of hf (b * seq_len + t) that feed the head
    std::vector<int> targets;
    Tensor logits, probs;
    double loss = 0.0;
    std::map<std::string, Tensor> masked_weights;  // W_eff for prunable tensors when a mask is given
};

struct ForwardResult {
    double loss = 0.0;
    Tensor logits;  // [targets x output_size], targets in row-major (batch, position) order
};

struct BackwardResult {
    double loss = 0.0;
    GradSet grads;
};

namespace detail {

class WeightView {
public:
    WeightView(const ParamSet& params, const prune::PruneMask* mask, ForwardCache& cache)
        : params_(params), mask_(mask), cache_(cache) {
        if (mask_) prune::check_aligned(params_, *mask_);
    }

    const Tensor& weight(const std::string& name) {
        const auto* e = params_.find(name);
        if (!e) throw AlignmentError("missing parameter '" + name + "'");
        if (!mask_ || !e->prunable) return e->value;
        const auto* m = mask_->find(name);
        Tensor eff = e->value;
        for (std::size_t i = 0; i < eff.size(); ++i)
            if (!m->keep[i]) eff[i] = 0.0;
        return cache_.masked_weights[name] = std::move(eff);
    }
    const Tensor& param(const std::string& name) const { return params_.at(name); }

private:
    const ParamSet& params_;
    const prune::PruneMask* mask_;
    ForwardCache& cache_;
};

inline void attention_forward(const ModelConfig& cfg, const Batch& batch, BlockCache& c) {
    const int B = batch.batch_size, T = batch.seq_len, H = cfg.n_heads, dh = cfg.d_head();
    const auto d = std::size_t(cfg.d_model);
    const double scale = 1.0 / std::sqrt(double(dh));
    c.probs = Tensor({std::size_t(B) * H * T * T});
    c.ctx = Tensor({std::size_t(B) * T, d});
    std::vector<double> s(T);
    for (int b = 0; b < B; ++b) {
        const int len = batch.lengths[b];
        for (int h = 0; h < H; ++h) {
            const std::size_t off = std::size_t(h) * dh;
            for (int i = 0; i < T; ++i) {
                const double* qi = &c.q[(std::size_t(b) * T + i) * d + off];
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < len; ++j) {
                    const double* kj = &c.k[(std::size_t(b) * T + j) * d + off];
                    double acc = 0.0;
                    for (int e = 0; e < dh; ++e) acc += qi[e] * kj[e];
                    s[j] = acc * scale;
                    mx = std::max(mx, s[j]);
                }
                double z = 0.0;
                for (int j = 0; j < len; ++j) {
                    s[j] = std::exp(s[j] - mx);
                    z += s[j];
                }
                double* p = &c.probs[((std::size_t(b) * H + h) * T + i) * T];
                for (int j = 0; j < len; ++j) p[j] = s[j] / z;
                double* ci = &c.ctx[(std::size_t(b) * T + i) * d + off];
                for (int j = 0; j < len; ++j) {
                    const double* vj = &c.v[(std::size_t(b) * T + j) * d + off];
                    for (int e = 0; e < dh; ++e) ci[e] += p[j] * vj[e];
                }
            }
        }
    }
}

inline void attention_backward(const ModelConfig& cfg, const Batch& batch, const BlockCache& c, const Tensor& dctx,
                               Tensor& dq, Tensor& dk, Tensor& dv) {
    const int B = batch.batch_size, T = batch.seq_len, H = cfg.n_heads, dh = cfg.d_head();
    const auto d = std::size_t(cfg.d_model);
    const double scale = 1.0 / std::sqrt(double(dh));
    std::vector<double> dp(T), ds(T);
    for (int b = 0; b < B; ++b) {
        const int len = batch.lengths[b];
        for (int h = 0; h < H; ++h) {
            const std::size_t off = std::size_t(h) * dh;
            for (int i = 0; i < T; ++i) {
                const double* p = &c.probs[((std::size_t(b) * H + h) * T + i) * T];
                const double* dci = &dctx[(std::size_t(b) * T + i) * d + off];
                double dot = 0.0;
                for (int j = 0; j < len; ++j) {
                    const double* vj = &c.v[(std::size_t(b) * T + j) * d + off];
                    double acc = 0.0;
                    for (int e = 0; e < dh; ++e) acc += dci[e] * vj[e];
                    dp[j] = acc;
                    dot += p[j] * acc;
                    double* dvj = &dv[(std::size_t(b) * T + j) * d + off];
                    for (int e = 0; e < dh; ++e) dvj[e] += p[j] * dci[e];
                }
                const double* qi = &c.q[(std::size_t(b) * T + i) * d + off];
                double* dqi = &dq[(std::size_t(b) * T + i) * d + off];
                for (int j = 0; j < len; ++j) {
                    ds[j] = p[j] * (dp[j] - dot) * scale;
                    const double* kj = &c.k[(std::size_t(b) * T + j) * d + off];
                    double* dkj = &dk[(std::size_t(b) * T + j) * d + off];
                    for (int e = 0; e < dh; ++e) {
                        dqi[e] += ds[j] * kj[e];
                        dkj[e] += ds[j] * qi[e];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Full forward pass retaining intermediates.
inline ForwardCache forward_cached(const ModelConfig& cfg, const ParamSet& params, const Batch& batch,
                                   const prune::PruneMask* mask = nullptr) {
    validate(cfg, batch);
    ForwardCache c;
    c.batch_size = batch.batch_size;
    c.seq_len = batch.seq_len;
    detail::WeightView w(params, mask, c);
    const int B = batch.batch_size, T = batch.seq_len;
    const auto N = std::size_t(B) * T, d = std::size_t(cfg.d_model);

    const Tensor& tok = w.param("embed.token.weight");
    const Tensor& pos = w.param("embed.pos.weight");
    Tensor x({N, d});
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t) {
            const auto r = std::size_t(b) * T + t;
            const auto id = std::size_t(batch.token(b, t));
            for (std::size_t j = 0; j < d; ++j) x.at(r, j) = tok.at(id, j) + pos.at(std::size_t(t), j);
        }

    c.blocks.resize(std::size_t(cfg.n_blocks));
    for (int bi = 0; bi < cfg.n_blocks; ++bi) {
        auto& bc = c.blocks[std::size_t(bi)];
        auto name = [&](const char* s) { return block_param(bi, s); };
        bc.x_in = x;
        bc.h = detail::layer_norm(x, w.param(name("ln1.gain")), w.param(name("ln1.bias")), bc.ln1);
        bc.q = detail::linear(bc.h, w.weight(name("attn.q.weight")), w.param(name("attn.q.bias")));
        bc.k = detail::linear(bc.h, w.weight(name("attn.k.weight")), w.param(name("attn.k.bias")));
        bc.v = detail::linear(bc.h, w.weight(name("attn.v.weight")), w.param(name("attn.v.bias")));
        detail::attention_forward(cfg, batch, bc);
        Tensor a = detail::linear(bc.ctx, w.weight(name("attn.o.weight")), w.param(name("attn.o.bias")));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += a[i];
        bc.x_mid = x;
        bc.h2 = detail::layer_norm(x, w.param(name("ln2.gain")), w.param(name("ln2.bias")), bc.ln2);
        bc.u = detail::linear(bc.h2, w.weight(name("ff1.weight")), w.param(name("ff1.bias")));
        bc.g = Tensor(bc.u.shape());
        for (std::size_t i = 0; i < bc.u.size(); ++i) bc.g[i] = detail::gelu(bc.u[i]);
        Tensor f = detail::linear(bc.g, w.weight(name("ff2.weight")), w.param(name("ff2.bias")));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += f[i];
    }
    c.x_out = x;
    c.hf = detail::layer_norm(x, w.param("final_ln.gain"), w.param("final_ln.bias"), c.lnf);

    if (cfg.head == HeadKind::classification) {
        for (int b = 0; b < B; ++b) {
            c.target_rows.push_back(std::size_t(b) * T);
            c.targets.push_back(batch.labels[std::size_t(b)]);
        }
    } else {
        for (std::size_t r = 0; r < N; ++r)
            if (batch.labels[r] != kIgnoreLabel) {
                c.target_rows.push_back(r);
                c.targets.push_back(batch.labels[r]);
            }
    }
    if (c.target_rows.empty()) throw ValidationError("batch has no prediction targets");
    const auto nt = c.target_rows.size();
    Tensor sel({nt, d});
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < d; ++j) sel.at(i, j) = c.hf.at(c.target_rows[i], j);
    const std::string head = head_prefix(cfg.head);
    c.logits = detail::linear(sel, w.param(head + ".weight"), w.param(head + ".bias"));

    const auto k = c.logits.cols();
    c.probs = Tensor(c.logits.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < nt; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, c.logits.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(c.logits.at(i, j) - mx);
        for (std::size_t j = 0; j < k; ++j) c.probs.at(i, j) = std::exp(c.logits.at(i, j) - mx) / z;
        if (c.targets[i] >= 0) total += -(c.logits.at(i, std::size_t(c.targets[i])) - mx - std::log(z));
    }
    c.loss = total / double(nt);
    return c;
}

inline ForwardResult forward(const ModelConfig& cfg, const ParamSet& params, const Batch& batch,
                             const prune::PruneMask* mask = nullptr) {
    auto c = forward_cached(cfg, params, batch, mask);
    return {c.loss, std::move(c.logits)};
}

// Exact gradients of `loss_scale * loss` with respect to every parameter.
inline BackwardResult backward(const ModelConfig& cfg, const ParamSet& params, const Batch& batch,
                               const prune::PruneMask* mask = nullptr, MaskedGrad policy = MaskedGrad::effective,
                               double loss_scale = 1.0) {
    ForwardCache c = forward_cached(cfg, params, batch, mask);
    GradSet g = zeros_like(params);
    const int B = batch.batch_size, T = batch.seq_len;
    const auto N = std::size_t(B) * T, d = std::size_t(cfg.d_model);
    auto weight = [&](const std::string& name) -> const Tensor& {
        auto it = c.masked_weights.find(name);
        return it != c.masked_weights.end() ? it->second : params.at(name);
    };

    // head
    const auto nt = c.target_rows.size();
    Tensor dlogits = c.probs;
    for (std::size_t i = 0; i < nt; ++i) {
        if (c.targets[i] >= 0) dlogits.at(i, std::size_t(c.targets[i])) -= 1.0;
        for (std::size_t j = 0; j < dlogits.cols(); ++j) dlogits.at(i, j) *= loss_scale / double(nt);
    }
    Tensor sel({nt, d});
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < d; ++j) sel.at(i, j) = c.hf.at(c.target_rows[i], j);
    const std::string head = head_prefix(cfg.head);
    Tensor dsel({nt, d});
    detail::linear_backward(dlogits, sel, params.at(head + ".weight"), &dsel, g.at(head + ".weight"),
                            g.at(head + ".bias"));
    Tensor dhf({N, d});
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < d; ++j) dhf.at(c.target_rows[i], j) += dsel.at(i, j);

    Tensor dx({N, d});
    detail::layer_norm_backward(dhf, params.at("final_ln.gain"), c.lnf, dx, g.at("final_ln.gain"),
                                g.at("final_ln.bias"));

    for (int bi = cfg.n_blocks - 1; bi >= 0; --bi) {
        const auto& bc = c.blocks[std::size_t(bi)];
        auto name = [&](const char* s) { return block_param(bi, s); };

        // feed-forward branch
        Tensor dg(bc.g.shape());
        detail::linear_backward(dx, bc.g, weight(name("ff2.weight")), &dg, g.at(name("ff2.weight")),
                                g.at(name("ff2.bias")));
        for (std::size_t i = 0; i < dg.size(); ++i) dg[i] *= detail::gelu_grad(bc.u[i]);
        Tensor dh2(bc.h2.shape());
        detail::linear_backward(dg, bc.h2, weight(name("ff1.weight")), &dh2, g.at(name("ff1.weight")),
                                g.at(name("ff1.bias")));
        detail::layer_norm_backward(dh2, params.at(name("ln2.gain")), bc.ln2, dx, g.at(name("ln2.gain")),
                                    g.at(name("ln2.bias")));

        // attention branch
        Tensor dctx(bc.ctx.shape());
        detail::linear_backward(dx, bc.ctx, weight(name("attn.o.weight")), &dctx, g.at(name("attn.o.weight")),
                                g.at(name("attn.o.bias")));
        Tensor dq(bc.q.shape()), dk(bc.k.shape()), dv(bc.v.shape());
        detail::attention_backward(cfg, batch, bc, dctx, dq, dk, dv);
        Tensor dh(bc.h.shape());
        detail::linear_backward(dq, bc.h, weight(name("attn.q.weight")), &dh, g.at(name("attn.q.weight")),
                                g.at(name("attn.q.bias")));
        detail::linear_backward(dk, bc.h, weight(name("attn.k.weight")), &dh, g.at(name("attn.k.weight")),
                                g.at(name("attn.k.bias")));
        detail::linear_backward(dv, bc.h, weight(name("attn.v.weight")), &dh, g.at(name("attn.v.weight")),
                                g.at(name("attn.v.bias")));
        detail::layer_norm_backward(dh, params.at(name("ln1.gain")), bc.ln1, dx, g.at(name("ln1.gain")),
                                    g.at(name("ln1.bias")));
    }

    Tensor& dtok = g.at("embed.token.weight");
    Tensor& dpos = g.at("embed.pos.weight");
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t) {
            const auto r = std::size_t(b) * T + t;
            const auto id = std::size_t(batch.token(b, t));
            for (std::size_t j = 0; j < d; ++j) {
                dtok.at(id, j) += dx.at(r, j);
                dpos.at(std::size_t(t), j) += dx.at(r, j);
            }
        }

    if (mask && policy == MaskedGrad::zeroed) {
        for (const auto& m : mask->entries) {
            auto& t = g.at(m.name);
            for (std::size_t i = 0; i < t.size(); ++i)
                if (!m.keep[i]) t[i] = 0.0;
        }
    }
    return {c.loss * loss_scale, std::move(g)};
}

// Inputs reaching each prunable linear layer, restricted to valid (non-padding) token rows.
// Entries follow ParamSet order of the prunable weights.
inline std::vector<std::pair<std::string, Tensor>> layer_inputs(const ModelConfig& cfg, const ParamSet& params,
                                                                const Batch& batch,
                                                                const prune::PruneMask* mask = nullptr) {
    const auto c = forward_cached(cfg, params, batch, mask);
    std::vector<std::size_t> rows;
    for (int b = 0; b < batch.batch_size; ++b)
        for (int t = 0; t < batch.lengths[std::size_t(b)]; ++t) rows.push_back(std::size_t(b) * batch.seq_len + t);
    auto gather = [&](const Tensor& x) {
        Tensor out({rows.size(), x.cols()});
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(rows[i], j);
        return out;
    };
    std::vector<std::pair<std::string, Tensor>> out;
    for (int bi = 0; bi < cfg.n_blocks; ++bi) {
        const auto& bc = c.blocks[std::size_t(bi)];
        const Tensor h = gather(bc.h);
        out.emplace_back(block_param(bi, "attn.q.weight"), h);
        out.emplace_back(block_param(bi, "attn.k.weight"), h);
        out.emplace_back(block_param(bi, "attn.v.weight"), h);
        out.emplace_back(block_param(bi, "attn.o.weight"), gather(bc.ctx));
        out.emplace_back(block_param(bi, "ff1.weight"), gather(bc.h2));
        out.emplace_back(block_param(bi, "ff2.weight"), gather(bc.g));
    }
    return out;
}

// Index of the largest logit per row; ties resolve to the lowest index.
inline std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        out[i] = int(best);
    }
    return out;
}

}  // namespace jdna::model
