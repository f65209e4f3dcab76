#include "epinn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace epinn {

namespace {

constexpr int kMaxWidth = 64;
constexpr int kMaxDirs = 4;
constexpr int kMaxIn = 8;
constexpr std::size_t kMaxPointWs = 4096;

// y = W x (+ bias), W row-major [nout][nin]
inline void gemv(const double* __restrict w, const double* __restrict x,
                 double* __restrict y, int nout, int nin,
                 const double* __restrict bias) {
    for (int o = 0; o < nout; ++o) {
        double acc = bias ? bias[o] : 0.0;
        const double* row = w + static_cast<std::size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// xbar += W^T ybar, written as row-wise axpy so the inner loop is contiguous
inline void gemv_t_acc(const double* __restrict w, const double* __restrict ybar,
                       double* __restrict xbar, int nout, int nin) {
    for (int o = 0; o < nout; ++o) {
        const double yb = ybar[o];
        const double* row = w + static_cast<std::size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) xbar[i] += row[i] * yb;
    }
}

// Wbar += ybar x^T
inline void outer_acc(double* __restrict wbar, const double* __restrict ybar,
                      const double* __restrict x, int nout, int nin) {
    for (int o = 0; o < nout; ++o) {
        const double yb = ybar[o];
        double* row = wbar + static_cast<std::size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) row[i] += yb * x[i];
    }
}

inline double dropout_factor(const DropoutCtx& ctx, std::uint64_t pid, int layer,
                             int unit) {
    const std::uint64_t point_key = ctx.per_point ? pid : 0;
    const std::uint64_t slot =
        (static_cast<std::uint64_t>(layer) << 8) | static_cast<std::uint64_t>(unit);
    const double u = hash_uniform(ctx.seed, ctx.draw, point_key, slot);
    return u < ctx.rate ? 0.0 : 1.0 / (1.0 - ctx.rate);
}

} // namespace

void ChannelSpec::validate(int input_dim) const {
    for (int a : first)
        if (a < 0 || a >= input_dim)
            throw ContractError(strf("ChannelSpec: first-derivative axis ", a,
                                     " out of range for dim ", input_dim));
    for (int c : second) {
        if (c < 0 || c >= input_dim)
            throw ContractError(strf("ChannelSpec: second-derivative axis ", c,
                                     " out of range for dim ", input_dim));
        if (std::find(first.begin(), first.end(), c) == first.end())
            throw ContractError(
                strf("ChannelSpec: second-derivative axis ", c,
                     " needs a matching first-derivative channel"));
    }
    for (std::size_t i = 0; i < first.size(); ++i)
        for (std::size_t j = i + 1; j < first.size(); ++j)
            if (first[i] == first[j])
                throw ContractError("ChannelSpec: duplicate first-derivative axis");
    for (std::size_t i = 0; i < second.size(); ++i)
        for (std::size_t j = i + 1; j < second.size(); ++j)
            if (second[i] == second[j])
                throw ContractError("ChannelSpec: duplicate second-derivative axis");
}

ChannelKernel::ChannelKernel(MlpArchitecture arch, InputMap in_map,
                             ChannelSpec spec)
    : arch_(arch), in_map_(std::move(in_map)), spec_(std::move(spec)) {
    arch_.validate();
    if (arch_.output_dim != 1)
        throw ContractError("ChannelKernel: output_dim must be 1");
    if (arch_.hidden_width > kMaxWidth)
        throw ContractError(strf("ChannelKernel: width above ", kMaxWidth));
    if (arch_.input_dim > kMaxIn)
        throw ContractError(strf("ChannelKernel: input_dim above ", kMaxIn));
    in_map_.validate(arch_.input_dim);
    spec_.validate(arch_.input_dim);
    k_ = static_cast<int>(spec_.first.size());
    m_ = static_cast<int>(spec_.second.size());
    if (k_ > kMaxDirs || m_ > kMaxDirs)
        throw ContractError(strf("ChannelKernel: more than ", kMaxDirs,
                                 " derivative channels per order"));
    scale_.resize(arch_.input_dim);
    for (int i = 0; i < arch_.input_dim; ++i) scale_[i] = in_map_.scale(i);
    sec_in_first_.resize(m_);
    for (int c = 0; c < m_; ++c) {
        const auto it =
            std::find(spec_.first.begin(), spec_.first.end(), spec_.second[c]);
        sec_in_first_[c] = static_cast<int>(it - spec_.first.begin());
    }
    const std::size_t w = arch_.hidden_width;
    ws_layer_ = w * (2 + 2 * static_cast<std::size_t>(k_) + 2 * m_);
    ws_point_ = arch_.input_dim +
                static_cast<std::size_t>(arch_.hidden_layers) * ws_layer_;
    if (ws_point_ > kMaxPointWs)
        throw ContractError("ChannelKernel: per-point workspace too large");

    const bool w20 = arch_.hidden_width == 20;
    switch (k_ * 16 + m_) {
    case 0x00:
        pf_ = w20 ? &ChannelKernel::point_forward_t<0, 0, 20> : &ChannelKernel::point_forward_t<0, 0, 0>;
        pb_ = w20 ? &ChannelKernel::point_backward_t<0, 0, 20> : &ChannelKernel::point_backward_t<0, 0, 0>;
        break;
    case 0x10:
        pf_ = w20 ? &ChannelKernel::point_forward_t<1, 0, 20> : &ChannelKernel::point_forward_t<1, 0, 0>;
        pb_ = w20 ? &ChannelKernel::point_backward_t<1, 0, 20> : &ChannelKernel::point_backward_t<1, 0, 0>;
        break;
    case 0x20:
        pf_ = w20 ? &ChannelKernel::point_forward_t<2, 0, 20> : &ChannelKernel::point_forward_t<2, 0, 0>;
        pb_ = w20 ? &ChannelKernel::point_backward_t<2, 0, 20> : &ChannelKernel::point_backward_t<2, 0, 0>;
        break;
    case 0x21:
        pf_ = w20 ? &ChannelKernel::point_forward_t<2, 1, 20> : &ChannelKernel::point_forward_t<2, 1, 0>;
        pb_ = w20 ? &ChannelKernel::point_backward_t<2, 1, 20> : &ChannelKernel::point_backward_t<2, 1, 0>;
        break;
    case 0x22:
        pf_ = w20 ? &ChannelKernel::point_forward_t<2, 2, 20> : &ChannelKernel::point_forward_t<2, 2, 0>;
        pb_ = w20 ? &ChannelKernel::point_backward_t<2, 2, 20> : &ChannelKernel::point_backward_t<2, 2, 0>;
        break;
    default: // generic pair already installed
        break;
    }
}

// Workspace block per hidden layer:
//   [ t (w) ][ h (w) ][ zp (k*w) ][ p (k*w) ][ zq (m*w) ][ q (m*w) ]
// t is the activation before dropout, h after; zp/zq are pre-activation
// tangents, p/q the channel outputs after dropout. A point block starts
// with the normalized input.
namespace {
struct LayerView {
    double* t;
    double* h;
    double* zp;
    double* p;
    double* zq;
    double* q;
};
} // namespace

static inline LayerView layer_view(double* base, int w, int k, int m) {
    LayerView v;
    v.t = base;
    v.h = base + w;
    v.zp = base + 2 * w;
    v.p = v.zp + static_cast<std::size_t>(k) * w;
    v.zq = v.p + static_cast<std::size_t>(k) * w;
    v.q = v.zq + static_cast<std::size_t>(m) * w;
    return v;
}

void ChannelKernel::point_forward(const double* params, const double* x,
                                  double* out, double* wsp,
                                  const DropoutCtx* dropout,
                                  std::uint64_t pid) const {
    const int d = arch_.input_dim;
    const int w = arch_.hidden_width;
    const int hl = arch_.hidden_layers;
    const bool drop = dropout != nullptr && dropout->rate > 0.0;

    double* n = wsp;
    for (int i = 0; i < d; ++i) n[i] = (x[i] - in_map_.lo[i]) * scale_[i];

    double z[kMaxWidth];

    for (int l = 0; l < hl; ++l) {
        LayerView cur = layer_view(wsp + d + l * ws_layer_, w, k_, m_);
        const double* wl = params + arch_.weight_offset(l);
        const double* bl = params + arch_.bias_offset(l);
        const int nin = arch_.layer_in(l);

        if (l == 0) {
            gemv(wl, n, z, w, d, bl);
            for (int a = 0; a < k_; ++a) {
                const int ax = spec_.first[a];
                const double sa = scale_[ax];
                double* zp = cur.zp + a * w;
                for (int o = 0; o < w; ++o) zp[o] = wl[o * d + ax] * sa;
            }
            for (int c = 0; c < m_; ++c) {
                double* zq = cur.zq + c * w;
                for (int o = 0; o < w; ++o) zq[o] = 0.0;
            }
        } else {
            LayerView prev = layer_view(wsp + d + (l - 1) * ws_layer_, w, k_, m_);
            gemv(wl, prev.h, z, w, nin, bl);
            for (int a = 0; a < k_; ++a)
                gemv(wl, prev.p + a * w, cur.zp + a * w, w, nin, nullptr);
            for (int c = 0; c < m_; ++c)
                gemv(wl, prev.q + c * w, cur.zq + c * w, w, nin, nullptr);
        }

        for (int o = 0; o < w; ++o) cur.t[o] = std::tanh(z[o]);
        for (int a = 0; a < k_; ++a) {
            const double* zp = cur.zp + a * w;
            double* p = cur.p + a * w;
            for (int o = 0; o < w; ++o) {
                const double tp = 1.0 - cur.t[o] * cur.t[o];
                p[o] = tp * zp[o];
            }
        }
        for (int c = 0; c < m_; ++c) {
            const double* zpf = cur.zp + sec_in_first_[c] * w;
            const double* zq = cur.zq + c * w;
            double* q = cur.q + c * w;
            for (int o = 0; o < w; ++o) {
                const double t = cur.t[o];
                const double tp = 1.0 - t * t;
                const double tpp = -2.0 * t * tp;
                q[o] = tpp * zpf[o] * zpf[o] + tp * zq[o];
            }
        }
        if (drop) {
            for (int o = 0; o < w; ++o) {
                const double f = dropout_factor(*dropout, pid, l, o);
                cur.h[o] = f * cur.t[o];
                for (int a = 0; a < k_; ++a) cur.p[a * w + o] *= f;
                for (int c = 0; c < m_; ++c) cur.q[c * w + o] *= f;
            }
        } else {
            std::memcpy(cur.h, cur.t, sizeof(double) * w);
        }
    }

    LayerView last = layer_view(wsp + d + (hl - 1) * ws_layer_, w, k_, m_);
    const double* wo = params + arch_.weight_offset(hl);
    const double* bo = params + arch_.bias_offset(hl);
    {
        double acc = bo[0];
        for (int i = 0; i < w; ++i) acc += wo[i] * last.h[i];
        out[0] = acc;
    }
    for (int a = 0; a < k_; ++a) {
        const double* p = last.p + a * w;
        double acc = 0.0;
        for (int i = 0; i < w; ++i) acc += wo[i] * p[i];
        out[1 + a] = acc;
    }
    for (int c = 0; c < m_; ++c) {
        const double* q = last.q + c * w;
        double acc = 0.0;
        for (int i = 0; i < w; ++i) acc += wo[i] * q[i];
        out[1 + k_ + c] = acc;
    }
}

void ChannelKernel::point_backward(const double* params, const double* wsp,
                                   const double* adj, double* grad,
                                   const DropoutCtx* dropout,
                                   std::uint64_t pid) const {
    const int d = arch_.input_dim;
    const int w = arch_.hidden_width;
    const int hl = arch_.hidden_layers;
    const bool drop = dropout != nullptr && dropout->rate > 0.0;

    const double* n = wsp;
    auto view = [&](int l) {
        return layer_view(const_cast<double*>(wsp) + d + l * ws_layer_, w, k_, m_);
    };

    // Incoming channel adjoints for the layer currently being processed
    // (post-dropout side), double-buffered across layers.
    double buf_h[2][kMaxWidth];
    double buf_p[2][kMaxDirs][kMaxWidth];
    double buf_q[2][kMaxDirs][kMaxWidth];
    int cur = 0;

    // Output layer: linear, adjoints of its pre-activations are the channel
    // adjoints themselves.
    {
        LayerView prev = view(hl - 1);
        const double* wo = params + arch_.weight_offset(hl);
        double* gwo = grad + arch_.weight_offset(hl);
        double* gbo = grad + arch_.bias_offset(hl);
        const double vbar = adj[0];
        for (int i = 0; i < w; ++i) gwo[i] += vbar * prev.h[i];
        gbo[0] += vbar;
        for (int a = 0; a < k_; ++a) {
            const double pb = adj[1 + a];
            const double* p = prev.p + a * w;
            for (int i = 0; i < w; ++i) gwo[i] += pb * p[i];
        }
        for (int c = 0; c < m_; ++c) {
            const double qb = adj[1 + k_ + c];
            const double* q = prev.q + c * w;
            for (int i = 0; i < w; ++i) gwo[i] += qb * q[i];
        }
        for (int i = 0; i < w; ++i) buf_h[cur][i] = wo[i] * vbar;
        for (int a = 0; a < k_; ++a) {
            const double pb = adj[1 + a];
            for (int i = 0; i < w; ++i) buf_p[cur][a][i] = wo[i] * pb;
        }
        for (int c = 0; c < m_; ++c) {
            const double qb = adj[1 + k_ + c];
            for (int i = 0; i < w; ++i) buf_q[cur][c][i] = wo[i] * qb;
        }
    }

    double zbar[kMaxWidth];
    double zpbar[kMaxDirs][kMaxWidth];
    double zqbar[kMaxDirs][kMaxWidth];

    for (int l = hl - 1; l >= 0; --l) {
        LayerView lv = view(l);
        double* hbar = buf_h[cur];
        auto& pbar = buf_p[cur];
        auto& qbar = buf_q[cur];

        if (drop) {
            for (int o = 0; o < w; ++o) {
                const double f = dropout_factor(*dropout, pid, l, o);
                hbar[o] *= f;
                for (int a = 0; a < k_; ++a) pbar[a][o] *= f;
                for (int c = 0; c < m_; ++c) qbar[c][o] *= f;
            }
        }

        for (int o = 0; o < w; ++o) {
            const double t = lv.t[o];
            const double tp = 1.0 - t * t;
            const double tpp = -2.0 * t * tp;
            double zb = hbar[o] * tp;
            for (int a = 0; a < k_; ++a)
                zb += pbar[a][o] * tpp * lv.zp[a * w + o];
            if (m_ > 0) {
                const double tppp = -2.0 * tp * tp + 4.0 * t * t * tp;
                for (int c = 0; c < m_; ++c) {
                    const double zpf = lv.zp[sec_in_first_[c] * w + o];
                    zb += qbar[c][o] * (tppp * zpf * zpf + tpp * lv.zq[c * w + o]);
                }
            }
            zbar[o] = zb;
            for (int a = 0; a < k_; ++a) zpbar[a][o] = pbar[a][o] * tp;
            for (int c = 0; c < m_; ++c) {
                const int fa = sec_in_first_[c];
                zpbar[fa][o] +=
                    2.0 * qbar[c][o] * tpp * lv.zp[fa * w + o];
                zqbar[c][o] = qbar[c][o] * tp;
            }
        }

        const double* wl = params + arch_.weight_offset(l);
        double* gwl = grad + arch_.weight_offset(l);
        double* gbl = grad + arch_.bias_offset(l);

        if (l == 0) {
            outer_acc(gwl, zbar, n, w, d);
            for (int a = 0; a < k_; ++a) {
                const int ax = spec_.first[a];
                const double sa = scale_[ax];
                for (int o = 0; o < w; ++o) gwl[o * d + ax] += zpbar[a][o] * sa;
            }
            for (int o = 0; o < w; ++o) gbl[o] += zbar[o];
        } else {
            LayerView prev = view(l - 1);
            outer_acc(gwl, zbar, prev.h, w, w);
            for (int a = 0; a < k_; ++a)
                outer_acc(gwl, zpbar[a], prev.p + a * w, w, w);
            for (int c = 0; c < m_; ++c)
                outer_acc(gwl, zqbar[c], prev.q + c * w, w, w);
            for (int o = 0; o < w; ++o) gbl[o] += zbar[o];

            const int nxt = 1 - cur;
            std::memset(buf_h[nxt], 0, sizeof(double) * w);
            gemv_t_acc(wl, zbar, buf_h[nxt], w, w);
            for (int a = 0; a < k_; ++a) {
                std::memset(buf_p[nxt][a], 0, sizeof(double) * w);
                gemv_t_acc(wl, zpbar[a], buf_p[nxt][a], w, w);
            }
            for (int c = 0; c < m_; ++c) {
                std::memset(buf_q[nxt][c], 0, sizeof(double) * w);
                gemv_t_acc(wl, zqbar[c], buf_q[nxt][c], w, w);
            }
            cur = nxt;
        }
    }
}

template <int K, int M, int W>
void ChannelKernel::point_forward_t(const double* params, const double* x,
                                    double* out, double* wsp,
                                    const DropoutCtx* dropout,
                                    std::uint64_t pid) const {
    const int d = arch_.input_dim;
    const int w = W > 0 ? W : arch_.hidden_width;
    const int hl = arch_.hidden_layers;
    const bool drop = dropout != nullptr && dropout->rate > 0.0;

    double* n = wsp;
    for (int i = 0; i < d; ++i) n[i] = (x[i] - in_map_.lo[i]) * scale_[i];

    double z[kMaxWidth];

    for (int l = 0; l < hl; ++l) {
        LayerView cur = layer_view(wsp + d + l * ws_layer_, w, K, M);
        const double* wl = params + arch_.weight_offset(l);
        const double* bl = params + arch_.bias_offset(l);

        if (l == 0) {
            gemv(wl, n, z, w, d, bl);
            for (int a = 0; a < K; ++a) {
                const int ax = spec_.first[a];
                const double sa = scale_[ax];
                double* zp = cur.zp + a * w;
                for (int o = 0; o < w; ++o) zp[o] = wl[o * d + ax] * sa;
            }
            for (int c = 0; c < M; ++c) {
                double* zq = cur.zq + c * w;
                for (int o = 0; o < w; ++o) zq[o] = 0.0;
            }
        } else {
            LayerView prev = layer_view(wsp + d + (l - 1) * ws_layer_, w, K, M);
            const double* __restrict ph = prev.h;
            const double* __restrict pp = prev.p;
            const double* __restrict pq = prev.q;
            // One pass over the weight row feeds the value and every
            // derivative channel, so the row is loaded once instead of
            // 1 + K + M times.
            for (int o = 0; o < w; ++o) {
                const double* __restrict row = wl + o * w;
                double vh = 0.0;
                double vp[K > 0 ? K : 1] = {};
                double vq[M > 0 ? M : 1] = {};
                for (int i = 0; i < w; ++i) {
                    const double wv = row[i];
                    vh += wv * ph[i];
                    for (int a = 0; a < K; ++a) vp[a] += wv * pp[a * w + i];
                    for (int c = 0; c < M; ++c) vq[c] += wv * pq[c * w + i];
                }
                z[o] = vh + bl[o];
                for (int a = 0; a < K; ++a) cur.zp[a * w + o] = vp[a];
                for (int c = 0; c < M; ++c) cur.zq[c * w + o] = vq[c];
            }
        }

        for (int o = 0; o < w; ++o) cur.t[o] = std::tanh(z[o]);
        for (int a = 0; a < K; ++a) {
            const double* zp = cur.zp + a * w;
            double* p = cur.p + a * w;
            for (int o = 0; o < w; ++o) {
                const double tp = 1.0 - cur.t[o] * cur.t[o];
                p[o] = tp * zp[o];
            }
        }
        for (int c = 0; c < M; ++c) {
            const double* zpf = cur.zp + sec_in_first_[c] * w;
            const double* zq = cur.zq + c * w;
            double* q = cur.q + c * w;
            for (int o = 0; o < w; ++o) {
                const double t = cur.t[o];
                const double tp = 1.0 - t * t;
                const double tpp = -2.0 * t * tp;
                q[o] = tpp * zpf[o] * zpf[o] + tp * zq[o];
            }
        }
        if (drop) {
            for (int o = 0; o < w; ++o) {
                const double f = dropout_factor(*dropout, pid, l, o);
                cur.h[o] = f * cur.t[o];
                for (int a = 0; a < K; ++a) cur.p[a * w + o] *= f;
                for (int c = 0; c < M; ++c) cur.q[c * w + o] *= f;
            }
        } else {
            std::memcpy(cur.h, cur.t, sizeof(double) * w);
        }
    }

    LayerView last = layer_view(wsp + d + (hl - 1) * ws_layer_, w, K, M);
    const double* wo = params + arch_.weight_offset(hl);
    const double* bo = params + arch_.bias_offset(hl);
    {
        double acc = bo[0];
        for (int i = 0; i < w; ++i) acc += wo[i] * last.h[i];
        out[0] = acc;
    }
    for (int a = 0; a < K; ++a) {
        const double* p = last.p + a * w;
        double acc = 0.0;
        for (int i = 0; i < w; ++i) acc += wo[i] * p[i];
        out[1 + a] = acc;
    }
    for (int c = 0; c < M; ++c) {
        const double* q = last.q + c * w;
        double acc = 0.0;
        for (int i = 0; i < w; ++i) acc += wo[i] * q[i];
        out[1 + K + c] = acc;
    }
}

template <int K, int M, int W>
void ChannelKernel::point_backward_t(const double* params, const double* wsp,
                                     const double* adj, double* grad,
                                     const DropoutCtx* dropout,
                                     std::uint64_t pid) const {
    const int d = arch_.input_dim;
    const int w = W > 0 ? W : arch_.hidden_width;
    const int hl = arch_.hidden_layers;
    const bool drop = dropout != nullptr && dropout->rate > 0.0;

    const double* n = wsp;
    auto view = [&](int l) {
        return layer_view(const_cast<double*>(wsp) + d + l * ws_layer_, w, K, M);
    };

    double buf_h[2][kMaxWidth];
    double buf_p[2][K > 0 ? K : 1][kMaxWidth];
    double buf_q[2][M > 0 ? M : 1][kMaxWidth];
    int cur = 0;

    {
        LayerView prev = view(hl - 1);
        const double* wo = params + arch_.weight_offset(hl);
        double* gwo = grad + arch_.weight_offset(hl);
        double* gbo = grad + arch_.bias_offset(hl);
        const double vbar = adj[0];
        for (int i = 0; i < w; ++i) gwo[i] += vbar * prev.h[i];
        gbo[0] += vbar;
        for (int a = 0; a < K; ++a) {
            const double pb = adj[1 + a];
            const double* p = prev.p + a * w;
            for (int i = 0; i < w; ++i) gwo[i] += pb * p[i];
        }
        for (int c = 0; c < M; ++c) {
            const double qb = adj[1 + K + c];
            const double* q = prev.q + c * w;
            for (int i = 0; i < w; ++i) gwo[i] += qb * q[i];
        }
        for (int i = 0; i < w; ++i) buf_h[cur][i] = wo[i] * adj[0];
        for (int a = 0; a < K; ++a) {
            const double pb = adj[1 + a];
            for (int i = 0; i < w; ++i) buf_p[cur][a][i] = wo[i] * pb;
        }
        for (int c = 0; c < M; ++c) {
            const double qb = adj[1 + K + c];
            for (int i = 0; i < w; ++i) buf_q[cur][c][i] = wo[i] * qb;
        }
    }

    double zbar[kMaxWidth];
    double zpbar[K > 0 ? K : 1][kMaxWidth];
    double zqbar[M > 0 ? M : 1][kMaxWidth];

    for (int l = hl - 1; l >= 0; --l) {
        LayerView lv = view(l);
        double* hbar = buf_h[cur];
        auto& pbar = buf_p[cur];
        auto& qbar = buf_q[cur];

        if (drop) {
            for (int o = 0; o < w; ++o) {
                const double f = dropout_factor(*dropout, pid, l, o);
                hbar[o] *= f;
                for (int a = 0; a < K; ++a) pbar[a][o] *= f;
                for (int c = 0; c < M; ++c) qbar[c][o] *= f;
            }
        }

        for (int o = 0; o < w; ++o) {
            const double t = lv.t[o];
            const double tp = 1.0 - t * t;
            const double tpp = -2.0 * t * tp;
            double zb = hbar[o] * tp;
            for (int a = 0; a < K; ++a)
                zb += pbar[a][o] * tpp * lv.zp[a * w + o];
            if (M > 0) {
                const double tppp = -2.0 * tp * tp + 4.0 * t * t * tp;
                for (int c = 0; c < M; ++c) {
                    const double zpf = lv.zp[sec_in_first_[c] * w + o];
                    zb += qbar[c][o] * (tppp * zpf * zpf + tpp * lv.zq[c * w + o]);
                }
            }
            zbar[o] = zb;
            for (int a = 0; a < K; ++a) zpbar[a][o] = pbar[a][o] * tp;
            for (int c = 0; c < M; ++c) {
                const int fa = sec_in_first_[c];
                zpbar[fa][o] += 2.0 * qbar[c][o] * tpp * lv.zp[fa * w + o];
                zqbar[c][o] = qbar[c][o] * tp;
            }
        }

        const double* wl = params + arch_.weight_offset(l);
        double* gwl = grad + arch_.weight_offset(l);
        double* gbl = grad + arch_.bias_offset(l);

        if (l == 0) {
            outer_acc(gwl, zbar, n, w, d);
            for (int a = 0; a < K; ++a) {
                const int ax = spec_.first[a];
                const double sa = scale_[ax];
                for (int o = 0; o < w; ++o) gwl[o * d + ax] += zpbar[a][o] * sa;
            }
            for (int o = 0; o < w; ++o) gbl[o] += zbar[o];
        } else {
            LayerView prev = view(l - 1);
            const double* __restrict ph = prev.h;
            const double* __restrict pp = prev.p;
            const double* __restrict pq = prev.q;
            const int nxt = 1 - cur;
            double* __restrict bh = buf_h[nxt];
            std::memset(bh, 0, sizeof(double) * w);
            for (int a = 0; a < K; ++a) std::memset(buf_p[nxt][a], 0, sizeof(double) * w);
            for (int c = 0; c < M; ++c) std::memset(buf_q[nxt][c], 0, sizeof(double) * w);
            for (int o = 0; o < w; ++o) {
                const double zb = zbar[o];
                double zpb[K > 0 ? K : 1], zqb[M > 0 ? M : 1];
                for (int a = 0; a < K; ++a) zpb[a] = zpbar[a][o];
                for (int c = 0; c < M; ++c) zqb[c] = zqbar[c][o];
                const double* __restrict wrow = wl + o * w;
                double* __restrict grow = gwl + o * w;
                for (int i = 0; i < w; ++i) {
                    double gacc = zb * ph[i];
                    for (int a = 0; a < K; ++a) gacc += zpb[a] * pp[a * w + i];
                    for (int c = 0; c < M; ++c) gacc += zqb[c] * pq[c * w + i];
                    grow[i] += gacc;
                    const double wv = wrow[i];
                    bh[i] += wv * zb;
                    for (int a = 0; a < K; ++a) buf_p[nxt][a][i] += wv * zpb[a];
                    for (int c = 0; c < M; ++c) buf_q[nxt][c][i] += wv * zqb[c];
                }
                gbl[o] += zb;
            }
            cur = nxt;
        }
    }
}

void ChannelKernel::forward(std::span<const double> params,
                            std::span<const double> xs, std::size_t n,
                            std::span<double> out, Workspace* ws, Backend be,
                            const DropoutCtx* dropout) const {
    const int d = arch_.input_dim;
    const int nch = n_channels();
    if (params.size() != arch_.param_count())
        throw ContractError("ChannelKernel::forward: parameter size mismatch");
    if (xs.size() != n * static_cast<std::size_t>(d))
        throw ContractError("ChannelKernel::forward: coordinate array mismatch");
    if (out.size() != n * static_cast<std::size_t>(nch))
        throw ContractError("ChannelKernel::forward: output array mismatch");
    if (ws != nullptr) {
        ws->data.resize(n * ws_point_);
        ws->n_points = n;
    }
    const bool par = be == Backend::Parallel;
    const std::uint64_t base = dropout != nullptr ? dropout->point_base : 0;

#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        double local[kMaxPointWs];
        double* wsp = ws != nullptr ? ws->data.data() + i * ws_point_ : local;
        (this->*pf_)(params.data(), xs.data() + i * d, out.data() + i * nch,
                     wsp, dropout, base + static_cast<std::uint64_t>(i));
    }
}

void ChannelKernel::backward(std::span<const double> params,
                             const Workspace& ws,
                             std::span<const double> adjoints,
                             std::span<double> grad, Scratch& scratch,
                             Backend be, const DropoutCtx* dropout) const {
    const std::size_t p_count = arch_.param_count();
    const std::size_t n = ws.n_points;
    const int nch = n_channels();
    if (params.size() != p_count)
        throw ContractError("ChannelKernel::backward: parameter size mismatch");
    if (ws.data.size() != n * ws_point_)
        throw ContractError("ChannelKernel::backward: stale workspace");
    if (adjoints.size() != n * static_cast<std::size_t>(nch))
        throw ContractError("ChannelKernel::backward: adjoint array mismatch");
    if (grad.size() != p_count)
        throw ContractError("ChannelKernel::backward: gradient array mismatch");

    const std::size_t n_chunks = (n + kChunkSize - 1) / kChunkSize;
    scratch.chunk_grads.assign(n_chunks * p_count, 0.0);
    const bool par = be == Backend::Parallel;
    const std::uint64_t base = dropout != nullptr ? dropout->point_base : 0;

#pragma omp parallel for schedule(static) if (par)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(n_chunks); ++c) {
        double* g = scratch.chunk_grads.data() + c * p_count;
        const std::size_t lo = c * kChunkSize;
        const std::size_t hi = std::min(n, lo + kChunkSize);
        for (std::size_t i = lo; i < hi; ++i)
            (this->*pb_)(params.data(), ws.data.data() + i * ws_point_,
                         adjoints.data() + i * nch, g, dropout,
                         base + static_cast<std::uint64_t>(i));
    }

    // Serial reduction in chunk order keeps the sum bit-identical for any
    // thread count.
    for (std::size_t c = 0; c < n_chunks; ++c) {
        const double* g = scratch.chunk_grads.data() + c * p_count;
        for (std::size_t j = 0; j < p_count; ++j) grad[j] += g[j];
    }
}

} // namespace epinn
