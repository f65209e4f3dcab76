#include "epinn/network.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace epinn {

void MlpArchitecture::validate() const {
    if (input_dim < 1) throw ContractError("MlpArchitecture: input_dim must be >= 1");
    if (hidden_layers < 1)
        throw ContractError("MlpArchitecture: hidden_layers must be >= 1");
    if (hidden_width < 1)
        throw ContractError("MlpArchitecture: hidden_width must be >= 1");
    if (output_dim < 1) throw ContractError("MlpArchitecture: output_dim must be >= 1");
}

std::size_t MlpArchitecture::layer_offset(int l) const {
    std::size_t off = 0;
    for (int k = 0; k < l; ++k)
        off += static_cast<std::size_t>(layer_out(k)) * layer_in(k) + layer_out(k);
    return off;
}

std::vector<double> glorot_init(const MlpArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    std::mt19937_64 rng(seed);
    auto uniform_pm1 = [&rng] {
        // 53 uniform bits in [0,1), then mapped to [-1,1).
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return 2.0 * u - 1.0;
    };
    std::vector<double> params(arch.param_count(), 0.0);
    for (int l = 0; l < arch.n_layers(); ++l) {
        const int nin = arch.layer_in(l);
        const int nout = arch.layer_out(l);
        const double bound = std::sqrt(6.0 / (nin + nout));
        double* w = params.data() + arch.weight_offset(l);
        for (int o = 0; o < nout; ++o)
            for (int i = 0; i < nin; ++i) w[o * nin + i] = bound * uniform_pm1();
        // biases stay zero
    }
    return params;
}

void InputMap::validate(int dim) const {
    if (static_cast<int>(lo.size()) != dim || static_cast<int>(hi.size()) != dim)
        throw ContractError(strf("InputMap: expected ", dim, " coordinate ranges"));
    for (int i = 0; i < dim; ++i)
        if (!(hi[i] > lo[i]))
            throw ContractError(strf("InputMap: empty range in coordinate ", i));
}

double InputMap::smallest_range() const {
    if (lo.empty()) throw ContractError("InputMap: no coordinates");
    double r = hi[0] - lo[0];
    for (std::size_t i = 1; i < lo.size(); ++i) r = std::min(r, hi[i] - lo[i]);
    return r;
}

void Surrogate::validate() const {
    arch.validate();
    if (arch.output_dim != 1)
        throw ContractError("Surrogate: output_dim must be 1");
    in_map.validate(arch.input_dim);
    if (out_transform == OutputTransform::ShiftedSoftplus &&
        !(transform_floor >= 0.0))
        throw ContractError("Surrogate: transform_floor must be >= 0");
}

} // namespace epinn
