#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "epinn/common.hpp"
#include "epinn/network.hpp"

namespace epinn {

// Hand-written forward/reverse passes for MLP batches that carry input
// derivative channels alongside the value: per point the kernel produces
//   [ u, du/dx_a (a in first), d2u/dx_c^2 (c in second) ]
// in physical units, and the reverse pass turns per-point adjoints of those
// channels into parameter gradients. Both passes exist because recording the
// same computation on a tape is two orders of magnitude slower; the tape
// stays the correctness reference in the tests.
//
// Determinism contract: gradients are accumulated per fixed-size point chunk
// and the chunk buffers are reduced serially in chunk order, so results are
// bit-identical for any thread count, including the serial backend.

inline constexpr int kChunkSize = 64;

enum class Backend { Serial, Parallel };

struct ChannelSpec {
    std::vector<int> first;  // input axes of first-derivative channels
    std::vector<int> second; // axes of pure second-derivative channels

    int count() const {
        return 1 + static_cast<int>(first.size() + second.size());
    }
    void validate(int input_dim) const;
};

// Multiplicative unit masks after each hidden activation. Masks are drawn
// from a counter-based hash, so forward and backward regenerate the same
// mask from the same key instead of storing it.
struct DropoutCtx {
    double rate = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t draw = 0;   // training step or prediction pass index
    bool per_point = true;    // false: one mask shared by the whole batch
    std::uint64_t point_base = 0;
};

class ChannelKernel {
public:
    ChannelKernel(MlpArchitecture arch, InputMap in_map, ChannelSpec spec);

    const MlpArchitecture& arch() const { return arch_; }
    const InputMap& in_map() const { return in_map_; }
    const ChannelSpec& channels() const { return spec_; }
    int n_channels() const { return spec_.count(); }

    // Per-point intermediate state captured by forward for a later backward.
    struct Workspace {
        std::vector<double> data;
        std::size_t n_points = 0;
    };

    struct Scratch {
        std::vector<double> chunk_grads;
    };

    // xs: [n][input_dim] physical coordinates, out: [n][n_channels()].
    // ws may be nullptr when no backward pass will follow.
    void forward(std::span<const double> params, std::span<const double> xs,
                 std::size_t n, std::span<double> out, Workspace* ws,
                 Backend be, const DropoutCtx* dropout = nullptr) const;

    // adjoints: [n][n_channels()] dLoss/dchannel; grad += dLoss/dparams.
    void backward(std::span<const double> params, const Workspace& ws,
                  std::span<const double> adjoints, std::span<double> grad,
                  Scratch& scratch, Backend be,
                  const DropoutCtx* dropout = nullptr) const;

    std::size_t point_ws_size() const { return ws_point_; }

private:
    void point_forward(const double* params, const double* x, double* out,
                       double* wsp, const DropoutCtx* dropout,
                       std::uint64_t pid) const;
    void point_backward(const double* params, const double* wsp,
                        const double* adj, double* grad,
                        const DropoutCtx* dropout, std::uint64_t pid) const;

    // Channel-count-specialized variants; the generic pair above stays the
    // fallback for unusual specs. Specialization fuses the per-channel
    // matrix passes into one traversal with independent accumulators, which
    // is what lets the inner loops pipeline. W pins the hidden width at
    // compile time (0 keeps it runtime) so the common 20-wide network gets
    // fully unrolled inner loops.
    template <int K, int M, int W>
    void point_forward_t(const double* params, const double* x, double* out,
                         double* wsp, const DropoutCtx* dropout,
                         std::uint64_t pid) const;
    template <int K, int M, int W>
    void point_backward_t(const double* params, const double* wsp,
                          const double* adj, double* grad,
                          const DropoutCtx* dropout, std::uint64_t pid) const;

    using PointFwd = void (ChannelKernel::*)(const double*, const double*, double*,
                                             double*, const DropoutCtx*,
                                             std::uint64_t) const;
    using PointBwd = void (ChannelKernel::*)(const double*, const double*,
                                             const double*, double*,
                                             const DropoutCtx*, std::uint64_t) const;
    PointFwd pf_ = &ChannelKernel::point_forward;
    PointBwd pb_ = &ChannelKernel::point_backward;

    MlpArchitecture arch_;
    InputMap in_map_;
    ChannelSpec spec_;
    std::vector<double> scale_;   // d(normalized)/d(physical) per axis
    std::vector<int> sec_in_first_; // second[c] -> index within first
    int k_ = 0;                   // number of first-derivative channels
    int m_ = 0;                   // number of second-derivative channels
    std::size_t ws_point_ = 0;    // doubles per point in the workspace
    std::size_t ws_layer_ = 0;    // doubles per hidden layer block
};

} // namespace epinn
