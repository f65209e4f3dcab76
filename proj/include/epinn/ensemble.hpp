#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epinn/training.hpp"

namespace epinn {

struct EnsembleConfig {
    int members = 5;
    std::uint64_t master_seed = 0;
    MemberTrainer::Options member;
    std::size_t pretrain_steps = 0; // 0 skips the warmup phase
    double pretrain_target = 0.0;
    std::size_t train_steps = 0;
};

struct MemberResult {
    std::vector<double> u_params, m_params;
    std::vector<TraceRow> pretrain_trace, trace;
    std::size_t pretrain_steps_taken = 0;
    bool failed = false;
    std::string failure;
};

struct EnsembleResult {
    std::vector<MemberResult> members;

    int n_failed() const {
        int k = 0;
        for (const auto& m : members) k += m.failed ? 1 : 0;
        return k;
    }
};

// Trains the members sequentially; each member is initialized from seeds
// derived off the master seed by member index. A member that dies with a
// NumericalError is recorded as failed instead of aborting the ensemble.
EnsembleResult train_ensemble(const InverseProblem& problem, const ObservationSet& obs,
                              const PointSet& collocation, const EnsembleConfig& cfg);

// Pointwise mean and population variance over member predictions in
// aggregation space, plus the raw per-member values for export.
struct PosteriorField {
    PointSet pts;
    std::vector<double> mean, variance;
    std::vector<std::vector<double>> member_values;
};

// rows = one prediction vector per member; at least two rows required.
PosteriorField aggregate_members(const PointSet& pts,
                                 std::vector<std::vector<double>> member_values);

// Evaluates the QoI nets at the given points and aggregates.
PosteriorField member_posterior(const InverseProblem& problem,
                                const std::vector<const std::vector<double>*>& m_params,
                                const PointSet& eval, Backend be);

// Failed members are skipped; fewer than two survivors is a contract error.
PosteriorField ensemble_posterior(const InverseProblem& problem,
                                  const EnsembleResult& ens, const PointSet& eval,
                                  Backend be);

struct Band {
    std::vector<double> lower, upper;
};
Band credibility_band(const PosteriorField& field, double width = 2.0);

// Fraction of points whose truth value lies inside the band.
double coverage_fraction(const PosteriorField& field, std::span<const double> truth,
                         double width = 2.0);

// Stochastic-mask baseline: `passes` forward evaluations of one trained QoI
// net, each pass with its own batch-shared dropout mask, aggregated with the
// same statistics as an ensemble.
PosteriorField mc_dropout_posterior(const InverseProblem& problem,
                                    const std::vector<double>& m_params,
                                    const PointSet& eval, int passes, double rate,
                                    std::uint64_t seed, Backend be);

} // namespace epinn
