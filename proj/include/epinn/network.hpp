#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "epinn/common.hpp"
#include "epinn/dual.hpp"

namespace epinn {

// Fully connected tanh network with a linear output layer. Parameters live
// in one flat vector, per layer: weight matrix row-major [out][in], then
// bias [out]. All heavy paths index through the offsets below, so the
// layout is part of the checkpoint format and must not change.

struct MlpArchitecture {
    int input_dim = 0;
    int hidden_layers = 0;
    int hidden_width = 0;
    int output_dim = 1;

    void validate() const;

    int n_layers() const { return hidden_layers + 1; }
    int layer_in(int l) const { return l == 0 ? input_dim : hidden_width; }
    int layer_out(int l) const {
        return l == hidden_layers ? output_dim : hidden_width;
    }
    std::size_t layer_offset(int l) const;
    std::size_t weight_offset(int l) const { return layer_offset(l); }
    std::size_t bias_offset(int l) const {
        return layer_offset(l) +
               static_cast<std::size_t>(layer_out(l)) * layer_in(l);
    }
    std::size_t param_count() const { return layer_offset(n_layers()); }
};

// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
// Draw order is layer-major, then row-major within each weight matrix,
// with an explicit 53-bit mapping so the stream is platform-independent.
std::vector<double> glorot_init(const MlpArchitecture& arch, std::uint64_t seed);

// Forward pass generic over the computation scalar S and parameter scalar P.
// `lift` embeds a parameter into S (identity when S == P); activations are
// built with push_back so S needs no default constructor.
template <class S, class P, class Lift>
void mlp_apply(const MlpArchitecture& arch, std::span<const P> params,
               std::span<const S> x, std::vector<S>& out, Lift&& lift) {
    if (params.size() != arch.param_count())
        throw ContractError(strf("mlp_apply: expected ", arch.param_count(),
                                 " parameters, got ", params.size()));
    if (static_cast<int>(x.size()) != arch.input_dim)
        throw ContractError(strf("mlp_apply: expected ", arch.input_dim,
                                 " inputs, got ", x.size()));
    using std::tanh;
    std::vector<S> h(x.begin(), x.end());
    std::vector<S> next;
    for (int l = 0; l < arch.n_layers(); ++l) {
        const int nin = arch.layer_in(l);
        const int nout = arch.layer_out(l);
        const P* w = params.data() + arch.weight_offset(l);
        const P* b = params.data() + arch.bias_offset(l);
        next.clear();
        next.reserve(nout);
        for (int o = 0; o < nout; ++o) {
            S acc = lift(b[o]);
            for (int i = 0; i < nin; ++i) acc = acc + lift(w[o * nin + i]) * h[i];
            if (l < arch.hidden_layers) acc = tanh(acc);
            next.push_back(acc);
        }
        h.swap(next);
    }
    out = std::move(h);
}

inline double mlp_scalar(const MlpArchitecture& arch,
                         std::span<const double> params,
                         std::span<const double> x) {
    if (arch.output_dim != 1)
        throw ContractError("mlp_scalar: network has more than one output");
    std::vector<double> out;
    mlp_apply(arch, params, x, out, [](double w) { return w; });
    return out[0];
}

// Affine map taking each coordinate of a box to [0,1]. Networks always see
// normalized inputs; derivative seeds pick up the 1/range factor through
// the chain rule, so reported derivatives stay in physical units.
struct InputMap {
    std::vector<double> lo;
    std::vector<double> hi;

    void validate(int dim) const;
    double scale(int i) const { return 1.0 / (hi[i] - lo[i]); }
    double smallest_range() const;

    template <class S>
    S normalize(int i, const S& xi) const {
        return (xi - lo[i]) * scale(i);
    }
};

enum class OutputTransform {
    Identity,
    ShiftedSoftplus, // floor + softplus(raw); keeps the field above floor
};

template <class S>
S apply_output_transform(OutputTransform t, double floor, const S& raw) {
    switch (t) {
        case OutputTransform::Identity: return raw;
        case OutputTransform::ShiftedSoftplus: return floor + softplus(raw);
    }
    throw ContractError("apply_output_transform: unknown transform");
}

// Quantity aggregated across the ensemble: raw output for Identity,
// log of the positive part for ShiftedSoftplus (log(field - floor)).
template <class S>
S metric_output(OutputTransform t, const S& raw) {
    using std::log;
    switch (t) {
        case OutputTransform::Identity: return raw;
        case OutputTransform::ShiftedSoftplus: return log(softplus(raw));
    }
    throw ContractError("metric_output: unknown transform");
}

struct Surrogate {
    MlpArchitecture arch;
    InputMap in_map;
    OutputTransform out_transform = OutputTransform::Identity;
    double transform_floor = 0.0;

    void validate() const;

    // Raw network output on normalized inputs; x is in physical coordinates.
    template <class S, class P, class Lift>
    S raw(std::span<const P> params, std::span<const S> x, Lift&& lift) const {
        std::vector<S> xn;
        xn.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            xn.push_back(in_map.normalize(static_cast<int>(i), x[i]));
        std::vector<S> out;
        mlp_apply(arch, params, std::span<const S>(xn), out, lift);
        return out[0];
    }

    template <class S, class P, class Lift>
    S value(std::span<const P> params, std::span<const S> x, Lift&& lift) const {
        return apply_output_transform(out_transform, transform_floor,
                                      raw(params, x, lift));
    }

    double value(std::span<const double> params, std::span<const double> x) const {
        return value<double, double>(params, x, [](double w) { return w; });
    }
};

} // namespace epinn
