#include "epinn/active.hpp"

#include <algorithm>
#include <cmath>

#include "epinn/metrics.hpp"

namespace epinn {

namespace {

struct Criterion {
    double eta = 0.0;
    double max_sigma = 0.0;
    std::size_t idx = 0;
    bool any_candidate = false;
    bool flat_mean = false;
};

Criterion evaluate_criterion(const PosteriorField& post, double alpha,
                             const std::vector<char>& acquired) {
    Criterion c;
    double mn = post.mean[0], mx = post.mean[0];
    for (double v : post.mean) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    c.flat_mean = (mx == mn);
    c.eta = alpha * (mx - mn);
    double best = -1.0;
    for (std::size_t j = 0; j < post.variance.size(); ++j) {
        if (acquired[j]) continue;
        if (post.variance[j] > best) { // strict: ties resolve to the lowest index
            best = post.variance[j];
            c.idx = j;
            c.any_candidate = true;
        }
    }
    if (c.any_candidate) c.max_sigma = std::sqrt(best);
    return c;
}

} // namespace

AsResult run_active_sampling(std::vector<MemberTrainer>& members,
                             const PointSet& candidates,
                             const std::vector<double>& truth_metric,
                             const AsConfig& cfg) {
    if (members.size() < 2)
        throw ContractError("run_active_sampling: need at least 2 members");
    candidates.validate();
    if (candidates.n() == 0 || truth_metric.size() != candidates.n())
        throw ContractError("run_active_sampling: candidate/truth mismatch");
    if (!(cfg.alpha > 0.0)) throw ContractError("run_active_sampling: alpha must be positive");
    if (cfg.retrain_steps == 0 || cfg.max_iterations == 0)
        throw ContractError("run_active_sampling: degenerate iteration budget");
    const InverseProblem& problem = members.front().problem();
    if (candidates.dim != problem.m_arch.input_dim)
        throw ContractError("run_active_sampling: candidate dimension mismatch");

    AsResult result;
    std::vector<char> acquired(candidates.n(), 0);

    auto posterior_now = [&]() {
        std::vector<const std::vector<double>*> ps;
        ps.reserve(members.size());
        for (const auto& t : members) ps.push_back(&t.m_params());
        return member_posterior(problem, ps, candidates, Backend::Serial);
    };

    for (std::size_t iter = 1; iter <= cfg.max_iterations; ++iter) {
        PosteriorField post = posterior_now();
        Criterion c = evaluate_criterion(post, cfg.alpha, acquired);
        result.eta_degenerate = result.eta_degenerate || c.flat_mean;
        if (!c.any_candidate) { // every candidate already measured
            result.final_posterior = std::move(post);
            return result;
        }
        if (c.max_sigma < c.eta) {
            result.converged = true;
            result.final_posterior = std::move(post);
            return result;
        }

        acquired[c.idx] = 1;
        const double* x = candidates.point(c.idx);
        for (auto& t : members) t.add_qoi_observation(x, truth_metric[c.idx]);
        for (auto& t : members) t.train(cfg.retrain_steps, nullptr);

        PosteriorField after = posterior_now();
        AsIterationRow row;
        row.iteration = iter;
        row.x_s.assign(x, x + candidates.dim);
        row.m_s = truth_metric[c.idx];
        row.max_sigma = c.max_sigma;
        row.eta = c.eta;
        row.r2 = r_squared(after.mean, truth_metric);
        row.rel_l2 = relative_l2(after.mean, truth_metric);
        row.acquired_index = c.idx;
        row.sigma2_field = post.variance;
        result.iterations.push_back(std::move(row));
    }

    // Budget exhausted; the last retraining may still have satisfied the rule.
    PosteriorField post = posterior_now();
    Criterion c = evaluate_criterion(post, cfg.alpha, acquired);
    result.eta_degenerate = result.eta_degenerate || c.flat_mean;
    result.converged = c.any_candidate && c.max_sigma < c.eta;
    result.final_posterior = std::move(post);
    return result;
}

} // namespace epinn
