#pragma once

#include <cstdint>
#include <vector>

#include "epinn/common.hpp"
#include "epinn/problems.hpp"

namespace epinn {

// Deterministic standard normals: explicit Box-Muller over mt19937_64 so the
// stream is identical across standard libraries.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
    double operator()();

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Nodal field on an equispaced (nx x ny) grid over the unit square,
// value(ix, iy) at (ix*hx, iy*hy), row-major in iy.
struct Grid2d {
    int nx = 0, ny = 0;
    std::vector<double> v;

    double hx() const { return 1.0 / (nx - 1); }
    double hy() const { return 1.0 / (ny - 1); }
    double& at(int ix, int iy) { return v[static_cast<std::size_t>(iy) * nx + ix]; }
    double at(int ix, int iy) const { return v[static_cast<std::size_t>(iy) * nx + ix]; }
};

// Space-time field: nx nodes on [0,1], nt time levels 0..t_end, u[it*nx + ix].
struct Grid1dTime {
    int nx = 0, nt = 0;
    double t_end = 0.0;
    std::vector<double> u;

    double hx() const { return 1.0 / (nx - 1); }
    double dt() const { return t_end / (nt - 1); }
    double at(int ix, int it) const { return u[static_cast<std::size_t>(it) * nx + ix]; }
};

// Solves lambda*(u_xx + u_yy) + s = 0 with homogeneous Dirichlet data on an
// n x n node grid by conjugate gradients on the 5-point system. The returned
// discrete residual satisfies ||lambda*Lh(u) + s||_2 < 1e-10 over interior
// nodes, else NumericalError.
Grid2d solve_poisson(const SourceProblemSpec& spec, int n);

// As above with a caller-supplied right-hand side (for convergence studies).
Grid2d solve_poisson_rhs(double lambda, const Grid2d& s);

// Crank-Nicolson solve of u_t = (v u_x)_x + S with zero-flux ends and u = 0
// at t = 0, conservative face-averaged fluxes and mirror ghost nodes.
// v holds nodal diffusivities (size nx).
Grid1dTime solve_diffusion(const DiffusionProblemSpec& spec,
                           const std::vector<double>& v, int nx, int nt);

// Trapezoid-rule mass of one time level.
double grid_mass(const Grid1dTime& g, int it);

// Zero-mean unit-variance Gaussian random field on the given 1D nodes,
// squared-exponential covariance exp(-0.5*(dx/length)^2), dense Cholesky
// with escalating diagonal jitter.
std::vector<double> sample_grf(const std::vector<double>& nodes, double length,
                               std::uint64_t seed);

// Sensor placement: flat node indices into an oracle grid plus coordinates.
struct SensorLayout {
    PointSet pts;
    std::vector<std::size_t> node_index;
};

// Random distinct nodes of the (sub_n x sub_n) subgrid embedded in an
// (n x n) oracle grid; requires (n-1) divisible by (sub_n-1).
SensorLayout random_subgrid_sensors(int n, int sub_n, int count, std::uint64_t seed);

// Fixed space-time sensor array: x stride over nodes, times it0, it0+stride, ...
SensorLayout spacetime_sensors(const Grid1dTime& g, int x_stride, int it_first,
                               int it_stride, int it_last);

// d_i = field[node_i] + xi_i, xi ~ N(0, noise_std^2). Same seed, same data.
ObservationSet observe(const std::vector<double>& field, const SensorLayout& layout,
                       double noise_std, std::uint64_t seed);

} // namespace epinn
