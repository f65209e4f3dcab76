#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "epinn/kernels.hpp"
#include "epinn/problems.hpp"

namespace epinn {

struct LossWeights {
    double data = 1.0;
    double pde = 1.0;
    double bc = 1.0;
};

struct AdversarialConfig {
    bool enabled = false;
    double tau = 0.0; // perturbation radius in physical input units
};

// Radius rule: one percent of the smallest input coordinate range.
double fgm_radius(const InputMap& map);

// delta_i = tau * g_i / ||g_i||_2 rowwise over [n][dim] gradients; a zero
// gradient row maps to a zero perturbation.
void fgm_perturbation(std::span<const double> grads, int dim, double tau,
                      std::span<double> delta);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    AdamState(std::size_t n, const AdamConfig& cfg);
    // In-place update; throws NumericalError on a non-finite gradient.
    void step(std::span<double> params, std::span<const double> grad);
    std::size_t t() const { return t_; }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::vector<double> m_, v_;
};

// Unweighted components; total carries the weights.
struct LossTerms {
    double data = 0.0;
    double pde = 0.0;
    double bc = 0.0;
    double at = 0.0;
    double qoi = 0.0;
    double total = 0.0;
};

struct TraceRow {
    std::size_t step = 0;
    LossTerms losses;
};

// Trains one network pair against one dataset. Deterministic given the
// seeds; all randomness is in the initialization (and dropout masks when a
// rate is set on the QoI net).
class MemberTrainer {
public:
    struct Options {
        LossWeights weights;
        AdversarialConfig at;
        AdamConfig u_opt{0.003, 0.9, 0.999, 1e-8};
        AdamConfig m_opt{0.005, 0.9, 0.999, 1e-8};
        Backend backend = Backend::Serial;
        double qoi_dropout_rate = 0.0; // 0 disables dropout entirely
        std::uint64_t dropout_seed = 0;
        std::size_t trace_interval = 100;
    };

    MemberTrainer(const InverseProblem& problem, const ObservationSet& obs,
                  const PointSet& collocation, const Options& opt,
                  std::uint64_t u_init_seed, std::uint64_t m_init_seed);

    // Data-only warmup of the u-net with a fresh optimizer; stops early once
    // the data loss drops below target (0 disables the early stop). Returns
    // the number of steps taken.
    std::size_t pretrain(std::size_t max_steps, double target,
                         std::vector<TraceRow>* trace);

    // Joint phase with fresh optimizers for both nets.
    void train(std::size_t steps, std::vector<TraceRow>* trace);

    // Direct squared-error anchor on the QoI in aggregation space.
    void add_qoi_observation(const double* x, double value);
    std::size_t qoi_observation_count() const { return qoi_obs_.pts.n(); }

    LossTerms losses();
    LossTerms loss_and_grad(std::vector<double>& u_grad, std::vector<double>& m_grad);

    const std::vector<double>& u_params() const { return u_params_; }
    const std::vector<double>& m_params() const { return m_params_; }
    void set_params(std::span<const double> u, std::span<const double> m);
    std::size_t steps_taken() const { return global_step_; }

    const InverseProblem& problem() const { return problem_; }

private:
    LossTerms compute(bool with_grad, bool data_only);
    void apply_step(bool data_only);
    const DropoutCtx* qoi_dropout();

    const InverseProblem& problem_;
    Options opt_;
    PointSet data_pts_;
    std::vector<double> data_values_;
    PointSet colloc_pts_;
    PointSet m_colloc_pts_;
    ObservationSet qoi_obs_;

    ChannelKernel u_data_k_, u_at_k_, u_colloc_k_, u_bc_k_, m_colloc_k_, m_val_k_;
    ChannelKernel::Workspace ws_data_, ws_at_, ws_colloc_u_, ws_colloc_m_, ws_qoi_;
    std::vector<ChannelKernel::Workspace> ws_bc_;
    ChannelKernel::Scratch scratch_u_, scratch_m_;

    std::vector<double> u_params_, m_params_;
    std::vector<double> u_grad_, m_grad_;
    std::optional<AdamState> u_adam_, m_adam_;
    std::size_t global_step_ = 0;
    DropoutCtx dropout_;

    // scratch buffers reused across steps
    std::vector<double> out_data_, out_at_, out_colloc_u_, out_colloc_m_, out_qoi_;
    std::vector<double> adj_data_, adj_at_, adj_colloc_u_, adj_colloc_m_, adj_qoi_;
    std::vector<double> residual_, at_points_, at_grads_, at_values_;
    std::vector<std::vector<double>> out_bc_, adj_bc_;
};

} // namespace epinn
