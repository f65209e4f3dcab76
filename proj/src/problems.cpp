#include "epinn/problems.hpp"

#include <cmath>

namespace epinn {

void SourceProblemSpec::validate() const {
    if (lambda <= 0.0) throw ContractError("SourceProblemSpec: lambda must be positive");
    for (double w : width)
        if (w <= 0.0) throw ContractError("SourceProblemSpec: width must be positive");
}

double SourceProblemSpec::source_value(double x, double y) const {
    double s = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double dx = x - center[i][0];
        const double dy = y - center[i][1];
        s += strength[i] * std::exp(-(dx * dx + dy * dy) / (2.0 * width[i] * width[i]));
    }
    return s;
}

void DiffusionProblemSpec::validate() const {
    if (t_end <= 0.0) throw ContractError("DiffusionProblemSpec: t_end must be positive");
    if (source_variance <= 0.0)
        throw ContractError("DiffusionProblemSpec: source_variance must be positive");
    if (cutoff <= 0.0 || cutoff > t_end)
        throw ContractError("DiffusionProblemSpec: cutoff must lie in (0, t_end]");
    if (v_floor < 0.0) throw ContractError("DiffusionProblemSpec: v_floor must be >= 0");
}

double DiffusionProblemSpec::source_value(double x, double t) const {
    // Window [0, cutoff) with H(0) = 1, so the source is off at t == cutoff.
    if (t >= cutoff || t < 0.0) return 0.0;
    const double sigma = std::sqrt(source_variance);
    const double pref = strength / (std::sqrt(2.0 * kPi) * sigma);
    double s = 0.0;
    for (double c : center) {
        const double dx = x - c;
        s += pref * std::exp(-dx * dx / (2.0 * source_variance));
    }
    return s;
}

void InverseProblem::validate() const {
    u_arch.validate();
    m_arch.validate();
    u_map.validate(u_arch.input_dim);
    m_map.validate(m_arch.input_dim);
    if (kind == ProblemKind::Source2d) {
        source.validate();
        if (u_arch.input_dim != 2 || m_arch.input_dim != 2)
            throw ContractError("InverseProblem: source benchmark is 2D in both nets");
    } else {
        diffusion.validate();
        if (u_arch.input_dim != 2 || m_arch.input_dim != 1)
            throw ContractError("InverseProblem: diffusion benchmark needs u(x,t), m(x)");
        if (m_transform != OutputTransform::ShiftedSoftplus)
            throw ContractError("InverseProblem: diffusion m-net must map to v > floor");
    }
    for (const auto& g : bc_groups) {
        g.pts.validate();
        if (g.pts.dim != u_arch.input_dim)
            throw ContractError("InverseProblem: bc point dim mismatch");
        if (g.kind == BcKind::FirstDeriv && (g.axis < 0 || g.axis >= u_arch.input_dim))
            throw ContractError("InverseProblem: bc derivative axis out of range");
    }
}

ChannelSpec InverseProblem::u_collocation_channels() const {
    if (kind == ProblemKind::Source2d) return ChannelSpec{{0, 1}, {0, 1}};
    return ChannelSpec{{0, 1}, {0}};
}

ChannelSpec InverseProblem::u_data_channels(bool with_input_grads) const {
    if (!with_input_grads) return ChannelSpec{{}, {}};
    return ChannelSpec{{0, 1}, {}};
}

ChannelSpec InverseProblem::u_bc_channels() const {
    if (kind == ProblemKind::Source2d) return ChannelSpec{{}, {}};
    return ChannelSpec{{0}, {}};
}

ChannelSpec InverseProblem::m_collocation_channels() const {
    if (kind == ProblemKind::Source2d) return ChannelSpec{{}, {}};
    return ChannelSpec{{0}, {}};
}

PointSet InverseProblem::m_points_for(const PointSet& collocation) const {
    if (kind == ProblemKind::Source2d) return collocation;
    PointSet out;
    out.dim = 1;
    out.x.resize(collocation.n());
    for (std::size_t i = 0; i < collocation.n(); ++i)
        out.x[i] = collocation.point(i)[0];
    return out;
}

void InverseProblem::residuals(const PointSet& collocation,
                               std::span<const double> u_channels,
                               std::span<const double> m_channels,
                               std::span<double> out) const {
    const std::size_t n = collocation.n();
    if (out.size() != n) throw ContractError("residuals: output size mismatch");
    if (kind == ProblemKind::Source2d) {
        if (u_channels.size() != 5 * n || m_channels.size() != n)
            throw ContractError("residuals: channel buffer mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            const double* uc = u_channels.data() + 5 * i;
            out[i] = source.lambda * (uc[3] + uc[4]) + m_channels[i];
        }
    } else {
        if (u_channels.size() != 4 * n || m_channels.size() != 2 * n)
            throw ContractError("residuals: channel buffer mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            const double* uc = u_channels.data() + 4 * i;
            const double raw = m_channels[2 * i];
            const double raw_x = m_channels[2 * i + 1];
            const double v = diffusion.v_floor + softplus(raw);
            const double v_x = sigmoid(raw) * raw_x;
            const double* p = collocation.point(i);
            out[i] = uc[2] - (v_x * uc[1] + v * uc[3]) - diffusion.source_value(p[0], p[1]);
        }
    }
}

void InverseProblem::residual_adjoints(const PointSet& collocation,
                                       std::span<const double> u_channels,
                                       std::span<const double> m_channels,
                                       std::span<const double> res_bar,
                                       std::span<double> u_adj,
                                       std::span<double> m_adj) const {
    const std::size_t n = collocation.n();
    if (res_bar.size() != n) throw ContractError("residual_adjoints: res_bar size mismatch");
    if (kind == ProblemKind::Source2d) {
        if (u_adj.size() != 5 * n || m_adj.size() != n)
            throw ContractError("residual_adjoints: adjoint buffer mismatch");
        (void)u_channels;
        (void)m_channels;
        for (std::size_t i = 0; i < n; ++i) {
            const double rb = res_bar[i];
            u_adj[5 * i + 3] += source.lambda * rb;
            u_adj[5 * i + 4] += source.lambda * rb;
            m_adj[i] += rb;
        }
    } else {
        if (u_adj.size() != 4 * n || m_adj.size() != 2 * n)
            throw ContractError("residual_adjoints: adjoint buffer mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            const double rb = res_bar[i];
            const double* uc = u_channels.data() + 4 * i;
            const double raw = m_channels[2 * i];
            const double raw_x = m_channels[2 * i + 1];
            const double sig = sigmoid(raw);
            const double v = diffusion.v_floor + softplus(raw);
            const double v_x = sig * raw_x;
            u_adj[4 * i + 2] += rb;
            u_adj[4 * i + 1] += -v_x * rb;
            u_adj[4 * i + 3] += -v * rb;
            // dv/draw = sigmoid,  dv_x/draw = sigmoid' * raw_x,  dv_x/draw_x = sigmoid
            m_adj[2 * i] += rb * (-(sig * (1.0 - sig) * raw_x * uc[1] + sig * uc[3]));
            m_adj[2 * i + 1] += rb * (-sig * uc[1]);
        }
    }
}

double InverseProblem::metric_value(double raw) const {
    if (m_transform == OutputTransform::Identity) return raw;
    return std::log(softplus(raw));
}

double InverseProblem::metric_derivative(double raw) const {
    if (m_transform == OutputTransform::Identity) return 1.0;
    return sigmoid(raw) / softplus(raw);
}

InverseProblem make_source_problem(int bc_points_per_edge) {
    if (bc_points_per_edge < 2)
        throw ContractError("make_source_problem: need at least the edge endpoints");
    InverseProblem p;
    p.kind = ProblemKind::Source2d;
    p.u_arch = MlpArchitecture{2, 4, 20, 1};
    p.m_arch = MlpArchitecture{2, 4, 20, 1};
    p.u_map = InputMap{{0.0, 0.0}, {1.0, 1.0}};
    p.m_map = p.u_map;
    p.m_transform = OutputTransform::Identity;

    // Perimeter nodes of an equispaced edge grid, corners counted once.
    BcGroup g;
    g.kind = BcKind::Value;
    g.pts.dim = 2;
    const int ne = bc_points_per_edge;
    const double h = 1.0 / (ne - 1);
    for (int i = 0; i < ne; ++i) {
        const double c = i * h;
        g.pts.x.insert(g.pts.x.end(), {c, 0.0});
        g.pts.x.insert(g.pts.x.end(), {c, 1.0});
    }
    for (int i = 1; i + 1 < ne; ++i) {
        const double c = i * h;
        g.pts.x.insert(g.pts.x.end(), {0.0, c});
        g.pts.x.insert(g.pts.x.end(), {1.0, c});
    }
    p.bc_groups.push_back(std::move(g));
    p.validate();
    return p;
}

InverseProblem make_diffusion_problem(int bc_time_points, int ic_points, double t_end) {
    if (bc_time_points < 2 || ic_points < 2)
        throw ContractError("make_diffusion_problem: need at least two points per group");
    InverseProblem p;
    p.kind = ProblemKind::Diffusion1d;
    p.diffusion.t_end = t_end;
    p.u_arch = MlpArchitecture{2, 4, 20, 1};
    p.m_arch = MlpArchitecture{1, 4, 20, 1};
    p.u_map = InputMap{{0.0, 0.0}, {1.0, t_end}};
    p.m_map = InputMap{{0.0}, {1.0}};
    p.m_transform = OutputTransform::ShiftedSoftplus;
    p.m_floor = p.diffusion.v_floor;

    const double dt = t_end / (bc_time_points - 1);
    for (double edge : {0.0, 1.0}) {
        BcGroup g;
        g.kind = BcKind::FirstDeriv;
        g.axis = 0;
        g.pts.dim = 2;
        for (int i = 0; i < bc_time_points; ++i)
            g.pts.x.insert(g.pts.x.end(), {edge, i * dt});
        p.bc_groups.push_back(std::move(g));
    }
    BcGroup ic;
    ic.kind = BcKind::Value;
    ic.pts.dim = 2;
    const double hx = 1.0 / (ic_points - 1);
    for (int i = 0; i < ic_points; ++i)
        ic.pts.x.insert(ic.pts.x.end(), {i * hx, 0.0});
    p.bc_groups.push_back(std::move(ic));
    p.validate();
    return p;
}

double sinusoidal_log_diffusivity(double x) { return std::sin(2.0 * kPi * x); }

} // namespace epinn
