#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "epinn/common.hpp"
#include "epinn/kernels.hpp"
#include "epinn/network.hpp"

namespace epinn {

// Flat row-major point storage, [n][dim].
struct PointSet {
    int dim = 0;
    std::vector<double> x;

    std::size_t n() const {
        return dim > 0 ? x.size() / static_cast<std::size_t>(dim) : 0;
    }
    const double* point(std::size_t i) const { return x.data() + i * dim; }
    void validate() const {
        if (dim < 1) throw ContractError("PointSet: dim must be >= 1");
        if (x.size() % static_cast<std::size_t>(dim) != 0)
            throw ContractError("PointSet: coordinate array not a multiple of dim");
    }
};

struct ObservationSet {
    PointSet pts;
    std::vector<double> values;

    void validate() const {
        pts.validate();
        if (values.size() != pts.n())
            throw ContractError("ObservationSet: value count mismatch");
        if (values.empty()) throw ContractError("ObservationSet: empty");
    }
};

// Steady source inversion on the unit square:
//   lambda * (u_xx + u_yy) + s(x, y) = 0,  u = 0 on the boundary,
// with s a sum of two unnormalized Gaussian bumps.
struct SourceProblemSpec {
    double lambda = 0.02;
    std::array<double, 2> strength{1.0, 2.0};
    std::array<double, 2> width{0.15, 0.05};
    std::array<std::array<double, 2>, 2> center{{{0.3, 0.4}, {0.8, 0.8}}};

    void validate() const;
    double source_value(double x, double y) const;
};

// Transient diffusion on [0,1] with an unknown positive diffusivity:
//   u_t = (v(x) u_x)_x + S(x, t),  u_x = 0 at both ends,  u(x, 0) = 0,
// S: three Gaussian injections active on t in [0, cutoff) via a Heaviside
// window with H(0) = 1. The inverted quantity is m(x) = log(v(x) - floor).
struct DiffusionProblemSpec {
    double t_end = 0.03;
    double strength = 100.0;
    double source_variance = 1e-3;
    std::array<double, 3> center{0.25, 0.5, 0.75};
    double cutoff = 0.01;
    double v_floor = 0.1;

    void validate() const;
    double source_value(double x, double t) const;
};

enum class ProblemKind { Source2d, Diffusion1d };

enum class BcKind { Value, FirstDeriv };

// Homogeneous boundary/initial operator group: residual is the selected
// output channel itself (target 0).
struct BcGroup {
    BcKind kind = BcKind::Value;
    int axis = 0; // derivative axis for FirstDeriv
    PointSet pts;
};

// Everything the trainer needs to know about a benchmark: surrogate shapes,
// derivative channels, residual assembly, boundary groups.
//
// Channel layouts (fixed by the specs returned from the factories below):
//   source    u: [u, u_x, u_y, u_xx, u_yy]   m: [s_raw]
//   diffusion u: [u, u_x, u_t, u_xx]         m: [raw, raw_x]
struct InverseProblem {
    ProblemKind kind = ProblemKind::Source2d;
    SourceProblemSpec source;
    DiffusionProblemSpec diffusion;

    MlpArchitecture u_arch;
    MlpArchitecture m_arch;
    InputMap u_map;
    InputMap m_map;
    OutputTransform m_transform = OutputTransform::Identity;
    double m_floor = 0.0;

    std::vector<BcGroup> bc_groups;

    void validate() const;

    ChannelSpec u_collocation_channels() const;
    ChannelSpec u_data_channels(bool with_input_grads) const;
    ChannelSpec u_bc_channels() const;
    ChannelSpec m_collocation_channels() const;

    // m-net input coordinates for a u-net collocation set (diffusion drops t).
    PointSet m_points_for(const PointSet& collocation) const;

    // residuals[i] from the kernel channel rows (layouts above).
    void residuals(const PointSet& collocation,
                   std::span<const double> u_channels,
                   std::span<const double> m_channels,
                   std::span<double> out) const;

    // Given dLoss/dresidual per point, accumulate channel adjoints.
    void residual_adjoints(const PointSet& collocation,
                           std::span<const double> u_channels,
                           std::span<const double> m_channels,
                           std::span<const double> res_bar,
                           std::span<double> u_adj,
                           std::span<double> m_adj) const;

    // Maps a raw m-net output to the aggregation-space QoI value.
    double qoi_metric(double raw) const { return metric_value(raw); }
    double metric_value(double raw) const;
    double metric_derivative(double raw) const; // d(metric)/d(raw)
};

// Factories with the benchmark defaults wired in (architectures 4x20,
// normalization boxes, boundary groups on the given resolutions).
InverseProblem make_source_problem(int bc_points_per_edge);
InverseProblem make_diffusion_problem(int bc_time_points, int ic_points,
                                      double t_end = 0.03);

// True log-diffusivity profiles for the diffusion benchmark.
double sinusoidal_log_diffusivity(double x);

} // namespace epinn
