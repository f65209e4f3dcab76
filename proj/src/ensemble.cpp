#include "epinn/ensemble.hpp"

#include <algorithm>
#include <cmath>

namespace epinn {

EnsembleResult train_ensemble(const InverseProblem& problem, const ObservationSet& obs,
                              const PointSet& collocation, const EnsembleConfig& cfg) {
    if (cfg.members < 2)
        throw ContractError("train_ensemble: an ensemble needs at least 2 members");
    if (cfg.train_steps == 0)
        throw ContractError("train_ensemble: zero joint training steps");

    EnsembleResult out;
    out.members.resize(cfg.members);
    for (int i = 0; i < cfg.members; ++i) {
        MemberResult& mr = out.members[i];
        try {
            MemberTrainer tr(problem, obs, collocation, cfg.member,
                             derive_seed(cfg.master_seed, "member-u", i),
                             derive_seed(cfg.master_seed, "member-m", i));
            if (cfg.pretrain_steps > 0)
                mr.pretrain_steps_taken =
                    tr.pretrain(cfg.pretrain_steps, cfg.pretrain_target, &mr.pretrain_trace);
            tr.train(cfg.train_steps, &mr.trace);
            mr.u_params = tr.u_params();
            mr.m_params = tr.m_params();
        } catch (const NumericalError& e) {
            mr.failed = true;
            mr.failure = e.what();
        }
    }
    return out;
}

PosteriorField aggregate_members(const PointSet& pts,
                                 std::vector<std::vector<double>> member_values) {
    pts.validate();
    const std::size_t m = member_values.size();
    const std::size_t n = pts.n();
    if (m < 2)
        throw ContractError("aggregate_members: need at least 2 member predictions");
    for (const auto& row : member_values)
        if (row.size() != n)
            throw ContractError("aggregate_members: prediction length mismatch");

    PosteriorField f;
    f.pts = pts;
    f.mean.assign(n, 0.0);
    f.variance.assign(n, 0.0);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double v = member_values[i][j];
            s += v;
            s2 += v * v;
        }
        const double mu = s * inv_m;
        f.mean[j] = mu;
        // population variance; cancellation can leave a tiny negative
        f.variance[j] = std::max(0.0, s2 * inv_m - mu * mu);
    }
    f.member_values = std::move(member_values);
    return f;
}

PosteriorField member_posterior(const InverseProblem& problem,
                                const std::vector<const std::vector<double>*>& m_params,
                                const PointSet& eval, Backend be) {
    ChannelKernel k(problem.m_arch, problem.m_map, ChannelSpec{{}, {}});
    std::vector<std::vector<double>> rows;
    rows.reserve(m_params.size());
    std::vector<double> raw(eval.n());
    for (const auto* p : m_params) {
        k.forward(*p, eval.x, eval.n(), raw, nullptr, be);
        std::vector<double> vals(eval.n());
        for (std::size_t j = 0; j < eval.n(); ++j)
            vals[j] = problem.metric_value(raw[j]);
        rows.push_back(std::move(vals));
    }
    return aggregate_members(eval, std::move(rows));
}

PosteriorField ensemble_posterior(const InverseProblem& problem,
                                  const EnsembleResult& ens, const PointSet& eval,
                                  Backend be) {
    std::vector<const std::vector<double>*> params;
    for (const auto& m : ens.members)
        if (!m.failed) params.push_back(&m.m_params);
    if (params.size() < 2)
        throw ContractError("ensemble_posterior: fewer than 2 surviving members");
    return member_posterior(problem, params, eval, be);
}

Band credibility_band(const PosteriorField& field, double width) {
    if (width <= 0.0) throw ContractError("credibility_band: width must be positive");
    Band b;
    const std::size_t n = field.mean.size();
    b.lower.resize(n);
    b.upper.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double half = width * std::sqrt(field.variance[j]);
        b.lower[j] = field.mean[j] - half;
        b.upper[j] = field.mean[j] + half;
    }
    return b;
}

double coverage_fraction(const PosteriorField& field, std::span<const double> truth,
                         double width) {
    if (truth.size() != field.mean.size())
        throw ContractError("coverage_fraction: truth length mismatch");
    if (truth.empty()) throw ContractError("coverage_fraction: empty field");
    Band b = credibility_band(field, width);
    std::size_t inside = 0;
    for (std::size_t j = 0; j < truth.size(); ++j)
        if (truth[j] >= b.lower[j] && truth[j] <= b.upper[j]) ++inside;
    return static_cast<double>(inside) / static_cast<double>(truth.size());
}

PosteriorField mc_dropout_posterior(const InverseProblem& problem,
                                    const std::vector<double>& m_params,
                                    const PointSet& eval, int passes, double rate,
                                    std::uint64_t seed, Backend be) {
    if (passes < 2) throw ContractError("mc_dropout_posterior: need at least 2 passes");
    if (rate <= 0.0 || rate >= 1.0)
        throw ContractError("mc_dropout_posterior: rate must lie in (0, 1)");
    ChannelKernel k(problem.m_arch, problem.m_map, ChannelSpec{{}, {}});
    std::vector<std::vector<double>> rows;
    rows.reserve(passes);
    std::vector<double> raw(eval.n());
    for (int p = 0; p < passes; ++p) {
        DropoutCtx ctx;
        ctx.rate = rate;
        ctx.seed = seed;
        ctx.draw = static_cast<std::uint64_t>(p);
        ctx.per_point = false; // one mask per pass, shared across the batch
        k.forward(m_params, eval.x, eval.n(), raw, nullptr, be, &ctx);
        std::vector<double> vals(eval.n());
        for (std::size_t j = 0; j < eval.n(); ++j)
            vals[j] = problem.metric_value(raw[j]);
        rows.push_back(std::move(vals));
    }
    return aggregate_members(eval, std::move(rows));
}

} // namespace epinn
