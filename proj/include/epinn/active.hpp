#pragma once

#include <cstddef>
#include <vector>

#include "epinn/ensemble.hpp"

namespace epinn {

struct AsConfig {
    double alpha = 0.02;
    std::size_t max_iterations = 15;
    std::size_t retrain_steps = 10000;
};

struct AsIterationRow {
    std::size_t iteration = 0; // 1-based
    std::vector<double> x_s;   // acquired location
    double m_s = 0.0;          // noise-free QoI value supplied for it
    double max_sigma = 0.0;    // triggering posterior std, before retraining
    double eta = 0.0;          // threshold alpha * range(mean), same posterior
    double r2 = 0.0;           // quality after retraining with the point
    double rel_l2 = 0.0;
    std::size_t acquired_index = 0;        // candidate index
    std::vector<double> sigma2_field;      // full variance field before acquisition
};

struct AsResult {
    std::vector<AsIterationRow> iterations;
    bool converged = false;
    bool eta_degenerate = false; // a flat mean field forced eta to 0
    PosteriorField final_posterior;
};

// Max-variance acquisition over a fixed candidate grid. `members` must hold
// already-trained trainers; each acquired point is queried exactly from
// `truth_metric` (aggregation space, indexed like `candidates`), appended to
// every member's direct-QoI set, and followed by a warm-start retraining
// phase. The loop stops as soon as max sigma over unacquired candidates
// drops below eta, or after max_iterations acquisitions.
AsResult run_active_sampling(std::vector<MemberTrainer>& members,
                             const PointSet& candidates,
                             const std::vector<double>& truth_metric,
                             const AsConfig& cfg);

} // namespace epinn
