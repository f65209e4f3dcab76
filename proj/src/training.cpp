#include "epinn/training.hpp"

#include <cmath>

namespace epinn {

double fgm_radius(const InputMap& map) {
    return 0.01 * map.smallest_range();
}

void fgm_perturbation(std::span<const double> grads, int dim, double tau,
                      std::span<double> delta) {
    if (dim < 1) throw ContractError("fgm_perturbation: dim must be >= 1");
    if (tau < 0.0) throw ContractError("fgm_perturbation: tau must be >= 0");
    if (grads.size() % dim != 0 || delta.size() != grads.size())
        throw ContractError("fgm_perturbation: buffer shape mismatch");
    const std::size_t n = grads.size() / dim;
    for (std::size_t i = 0; i < n; ++i) {
        double nrm2 = 0.0;
        for (int a = 0; a < dim; ++a) nrm2 += square(grads[i * dim + a]);
        if (nrm2 == 0.0) {
            for (int a = 0; a < dim; ++a) delta[i * dim + a] = 0.0;
            continue;
        }
        const double s = tau / std::sqrt(nrm2);
        for (int a = 0; a < dim; ++a) delta[i * dim + a] = s * grads[i * dim + a];
    }
}

AdamState::AdamState(std::size_t n, const AdamConfig& cfg)
    : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
    if (!(cfg.lr > 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
        !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.eps > 0.0))
        throw ContractError("AdamState: invalid optimizer settings");
}

void AdamState::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw ContractError("AdamState: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
        const double g = grad[i];
        if (!std::isfinite(g))
            throw NumericalError(strf("AdamState: non-finite gradient at index ", i,
                                      ", step ", t_));
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

namespace {

PointSet copy_points(const PointSet& p) { return p; }

} // namespace

MemberTrainer::MemberTrainer(const InverseProblem& problem, const ObservationSet& obs,
                             const PointSet& collocation, const Options& opt,
                             std::uint64_t u_init_seed, std::uint64_t m_init_seed)
    : problem_(problem),
      opt_(opt),
      data_pts_(copy_points(obs.pts)),
      data_values_(obs.values),
      colloc_pts_(copy_points(collocation)),
      m_colloc_pts_(problem.m_points_for(collocation)),
      u_data_k_(problem.u_arch, problem.u_map, problem.u_data_channels(opt.at.enabled)),
      u_at_k_(problem.u_arch, problem.u_map, ChannelSpec{{}, {}}),
      u_colloc_k_(problem.u_arch, problem.u_map, problem.u_collocation_channels()),
      u_bc_k_(problem.u_arch, problem.u_map, problem.u_bc_channels()),
      m_colloc_k_(problem.m_arch, problem.m_map, problem.m_collocation_channels()),
      m_val_k_(problem.m_arch, problem.m_map, ChannelSpec{{}, {}}) {
    problem.validate();
    obs.validate();
    collocation.validate();
    if (obs.pts.dim != problem.u_arch.input_dim ||
        collocation.dim != problem.u_arch.input_dim)
        throw ContractError("MemberTrainer: point dimension mismatch");
    if (collocation.n() == 0) throw ContractError("MemberTrainer: empty collocation set");
    if (opt.at.enabled && !(opt.at.tau > 0.0))
        throw ContractError("MemberTrainer: adversarial radius must be positive");
    if (opt.qoi_dropout_rate < 0.0 || opt.qoi_dropout_rate >= 1.0)
        throw ContractError("MemberTrainer: dropout rate must lie in [0, 1)");

    qoi_obs_.pts.dim = problem.m_arch.input_dim;

    u_params_ = glorot_init(problem.u_arch, u_init_seed);
    m_params_ = glorot_init(problem.m_arch, m_init_seed);
    u_grad_.assign(u_params_.size(), 0.0);
    m_grad_.assign(m_params_.size(), 0.0);

    const std::size_t nd = data_pts_.n();
    const std::size_t nf = colloc_pts_.n();
    out_data_.resize(nd * u_data_k_.n_channels());
    adj_data_.resize(out_data_.size());
    out_at_.resize(nd);
    adj_at_.resize(nd);
    at_points_.resize(nd * problem.u_arch.input_dim);
    at_grads_.resize(at_points_.size());
    at_values_.resize(nd);
    out_colloc_u_.resize(nf * u_colloc_k_.n_channels());
    adj_colloc_u_.resize(out_colloc_u_.size());
    out_colloc_m_.resize(nf * m_colloc_k_.n_channels());
    adj_colloc_m_.resize(out_colloc_m_.size());
    residual_.resize(nf);
    ws_bc_.resize(problem.bc_groups.size());
    out_bc_.resize(problem.bc_groups.size());
    adj_bc_.resize(problem.bc_groups.size());
    for (std::size_t g = 0; g < problem.bc_groups.size(); ++g) {
        out_bc_[g].resize(problem.bc_groups[g].pts.n() * u_bc_k_.n_channels());
        adj_bc_[g].resize(out_bc_[g].size());
    }

    dropout_.rate = opt.qoi_dropout_rate;
    dropout_.seed = opt.dropout_seed;
    dropout_.per_point = true;
}

const DropoutCtx* MemberTrainer::qoi_dropout() {
    if (dropout_.rate <= 0.0) return nullptr;
    dropout_.draw = global_step_;
    return &dropout_;
}

void MemberTrainer::add_qoi_observation(const double* x, double value) {
    for (int a = 0; a < qoi_obs_.pts.dim; ++a) qoi_obs_.pts.x.push_back(x[a]);
    qoi_obs_.values.push_back(value);
    out_qoi_.resize(qoi_obs_.pts.n());
    adj_qoi_.resize(qoi_obs_.pts.n());
}

void MemberTrainer::set_params(std::span<const double> u, std::span<const double> m) {
    if (u.size() != u_params_.size() || m.size() != m_params_.size())
        throw ContractError("MemberTrainer: parameter size mismatch");
    u_params_.assign(u.begin(), u.end());
    m_params_.assign(m.begin(), m.end());
}

LossTerms MemberTrainer::compute(bool with_grad, bool data_only) {
    const Backend be = opt_.backend;
    const int dim = problem_.u_arch.input_dim;
    const std::size_t nd = data_pts_.n();
    LossTerms L;

    if (with_grad) {
        std::fill(u_grad_.begin(), u_grad_.end(), 0.0);
        std::fill(m_grad_.begin(), m_grad_.end(), 0.0);
    }

    // Data misfit at the sensors.
    const int cd = u_data_k_.n_channels();
    u_data_k_.forward(u_params_, data_pts_.x, nd, out_data_,
                      with_grad ? &ws_data_ : nullptr, be);
    double acc = 0.0;
    for (std::size_t i = 0; i < nd; ++i)
        acc += square(out_data_[i * cd] - data_values_[i]);
    L.data = acc / static_cast<double>(nd);
    if (with_grad) {
        std::fill(adj_data_.begin(), adj_data_.end(), 0.0);
        const double s = opt_.weights.data * 2.0 / static_cast<double>(nd);
        for (std::size_t i = 0; i < nd; ++i)
            adj_data_[i * cd] = s * (out_data_[i * cd] - data_values_[i]);
        u_data_k_.backward(u_params_, ws_data_, adj_data_, u_grad_, scratch_u_, be);
    }

    // Misfit at inputs nudged along the per-sample data-loss gradient. The
    // perturbed locations are treated as constants: no gradient flows
    // through the perturbation itself.
    if (!data_only && opt_.at.enabled) {
        const double gs = 2.0 / static_cast<double>(nd);
        for (std::size_t i = 0; i < nd; ++i) {
            const double diff = out_data_[i * cd] - data_values_[i];
            for (int a = 0; a < dim; ++a)
                at_grads_[i * dim + a] = gs * diff * out_data_[i * cd + 1 + a];
        }
        fgm_perturbation(at_grads_, dim, opt_.at.tau, at_points_);
        for (std::size_t i = 0; i < nd * dim; ++i) at_points_[i] += data_pts_.x[i];
        u_at_k_.forward(u_params_, at_points_, nd, out_at_,
                        with_grad ? &ws_at_ : nullptr, be);
        acc = 0.0;
        for (std::size_t i = 0; i < nd; ++i)
            acc += square(out_at_[i] - data_values_[i]);
        L.at = acc / static_cast<double>(nd);
        if (with_grad) {
            const double s = opt_.weights.data * 2.0 / static_cast<double>(nd);
            for (std::size_t i = 0; i < nd; ++i)
                adj_at_[i] = s * (out_at_[i] - data_values_[i]);
            u_at_k_.backward(u_params_, ws_at_, adj_at_, u_grad_, scratch_u_, be);
        }
    }

    if (!data_only) {
        // Interior residual.
        const std::size_t nf = colloc_pts_.n();
        const DropoutCtx* mdrop = qoi_dropout();
        u_colloc_k_.forward(u_params_, colloc_pts_.x, nf, out_colloc_u_,
                            with_grad ? &ws_colloc_u_ : nullptr, be);
        m_colloc_k_.forward(m_params_, m_colloc_pts_.x, nf, out_colloc_m_,
                            with_grad ? &ws_colloc_m_ : nullptr, be, mdrop);
        problem_.residuals(colloc_pts_, out_colloc_u_, out_colloc_m_, residual_);
        acc = 0.0;
        for (double r : residual_) acc += r * r;
        L.pde = acc / static_cast<double>(nf);
        if (with_grad) {
            const double s = opt_.weights.pde * 2.0 / static_cast<double>(nf);
            std::fill(adj_colloc_u_.begin(), adj_colloc_u_.end(), 0.0);
            std::fill(adj_colloc_m_.begin(), adj_colloc_m_.end(), 0.0);
            std::vector<double>& rb = residual_; // reuse in place
            for (double& r : rb) r *= s;
            problem_.residual_adjoints(colloc_pts_, out_colloc_u_, out_colloc_m_, rb,
                                       adj_colloc_u_, adj_colloc_m_);
            u_colloc_k_.backward(u_params_, ws_colloc_u_, adj_colloc_u_, u_grad_,
                                 scratch_u_, be);
            m_colloc_k_.backward(m_params_, ws_colloc_m_, adj_colloc_m_, m_grad_,
                                 scratch_m_, be, mdrop);
        }

        // Boundary and initial conditions, pooled over every group.
        std::size_t nb = 0;
        for (const auto& g : problem_.bc_groups) nb += g.pts.n();
        if (nb > 0) {
            const int cb = u_bc_k_.n_channels();
            acc = 0.0;
            for (std::size_t g = 0; g < problem_.bc_groups.size(); ++g) {
                const auto& grp = problem_.bc_groups[g];
                u_bc_k_.forward(u_params_, grp.pts.x, grp.pts.n(), out_bc_[g],
                                with_grad ? &ws_bc_[g] : nullptr, be);
                int ch = 0;
                if (grp.kind == BcKind::FirstDeriv) {
                    const auto& fs = u_bc_k_.channels().first;
                    for (std::size_t a = 0; a < fs.size(); ++a)
                        if (fs[a] == grp.axis) ch = 1 + static_cast<int>(a);
                }
                for (std::size_t i = 0; i < grp.pts.n(); ++i)
                    acc += square(out_bc_[g][i * cb + ch]);
                if (with_grad) {
                    const double s = opt_.weights.bc * 2.0 / static_cast<double>(nb);
                    std::fill(adj_bc_[g].begin(), adj_bc_[g].end(), 0.0);
                    for (std::size_t i = 0; i < grp.pts.n(); ++i)
                        adj_bc_[g][i * cb + ch] = s * out_bc_[g][i * cb + ch];
                    u_bc_k_.backward(u_params_, ws_bc_[g], adj_bc_[g], u_grad_,
                                     scratch_u_, be);
                }
            }
            L.bc = acc / static_cast<double>(nb);
        }

        // Direct QoI anchors in aggregation space.
        const std::size_t nq = qoi_obs_.pts.n();
        if (nq > 0) {
            DropoutCtx qdrop_storage;
            const DropoutCtx* qdrop = nullptr;
            if (mdrop != nullptr) {
                qdrop_storage = *mdrop;
                qdrop_storage.point_base = std::uint64_t{1} << 32;
                qdrop = &qdrop_storage;
            }
            m_val_k_.forward(m_params_, qoi_obs_.pts.x, nq, out_qoi_,
                             with_grad ? &ws_qoi_ : nullptr, be, qdrop);
            acc = 0.0;
            for (std::size_t i = 0; i < nq; ++i)
                acc += square(problem_.metric_value(out_qoi_[i]) - qoi_obs_.values[i]);
            L.qoi = acc / static_cast<double>(nq);
            if (with_grad) {
                const double s = opt_.weights.data * 2.0 / static_cast<double>(nq);
                for (std::size_t i = 0; i < nq; ++i)
                    adj_qoi_[i] = s *
                                  (problem_.metric_value(out_qoi_[i]) - qoi_obs_.values[i]) *
                                  problem_.metric_derivative(out_qoi_[i]);
                m_val_k_.backward(m_params_, ws_qoi_, adj_qoi_, m_grad_, scratch_m_, be,
                                  qdrop);
            }
        }
    }

    if (data_only) {
        L.total = L.data;
    } else {
        L.total = opt_.weights.data * (L.data + L.at + L.qoi) +
                  opt_.weights.pde * L.pde + opt_.weights.bc * L.bc;
    }
    if (!std::isfinite(L.total))
        throw NumericalError(strf("MemberTrainer: non-finite loss at step ", global_step_));
    return L;
}

void MemberTrainer::apply_step(bool data_only) {
    u_adam_->step(u_params_, u_grad_);
    if (!data_only) m_adam_->step(m_params_, m_grad_);
    ++global_step_;
}

LossTerms MemberTrainer::losses() { return compute(false, false); }

LossTerms MemberTrainer::loss_and_grad(std::vector<double>& u_grad,
                                       std::vector<double>& m_grad) {
    LossTerms L = compute(true, false);
    u_grad = u_grad_;
    m_grad = m_grad_;
    return L;
}

std::size_t MemberTrainer::pretrain(std::size_t max_steps, double target,
                                    std::vector<TraceRow>* trace) {
    u_adam_.emplace(u_params_.size(), opt_.u_opt);
    const std::size_t iv = opt_.trace_interval;
    std::size_t taken = 0;
    for (std::size_t s = 1; s <= max_steps; ++s) {
        LossTerms L = compute(true, true);
        apply_step(true);
        taken = s;
        const bool done = target > 0.0 && L.data < target;
        if (trace != nullptr && (s == 1 || done || s == max_steps ||
                                 (iv > 0 && s % iv == 0)))
            trace->push_back(TraceRow{global_step_, L});
        if (done) break;
    }
    return taken;
}

void MemberTrainer::train(std::size_t steps, std::vector<TraceRow>* trace) {
    u_adam_.emplace(u_params_.size(), opt_.u_opt);
    m_adam_.emplace(m_params_.size(), opt_.m_opt);
    const std::size_t iv = opt_.trace_interval;
    for (std::size_t s = 1; s <= steps; ++s) {
        LossTerms L = compute(true, false);
        apply_step(false);
        if (trace != nullptr &&
            (s == 1 || s == steps || (iv > 0 && s % iv == 0)))
            trace->push_back(TraceRow{global_step_, L});
    }
}

} // namespace epinn
