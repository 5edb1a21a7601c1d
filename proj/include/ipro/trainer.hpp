#pragma once

#include "ipro/embedder.hpp"
#include "ipro/flow.hpp"
#include "ipro/reward.hpp"
#include "ipro/world.hpp"

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipro {

enum class RewardKind { kFsm, kSingleRef };
const char* reward_kind_name(RewardKind k);
RewardKind reward_kind_from(const std::string& name);

struct TrainConfig {
    double learning_rate = 2e-5;
    int k_truncate = 4;
    double lambda_face = 0.1;
    double lambda_kl = 1.0;
    int batch_size = 64;
    int total_steps = 100;
    TapePlacement placement = TapePlacement::kLastK;
    std::vector<double> kl_weights;   // empty -> uniform 1/K over the taped steps
    bool kl_fresh_trajectory = false; // sample a separate trajectory for the KL term
    int checkpoint_every = 0;         // 0 -> final checkpoint only

    void validate(int sampler_steps) const;
    /// Per-step KL weights resolved against K.
    std::vector<double> resolved_kl_weights() const;
};

struct PretrainConfig {
    double learning_rate = 1.5e-4;
    int batch_size = 32;
    int total_steps = 2000;
};

/// Adam with bias-corrected moments.
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;
    std::vector<Array> m;
    std::vector<Array> v;

    static OptimizerState init(const DenoiserParams& p);
};

void adam_update(DenoiserParams& params, const std::array<Array, 6>& grads, OptimizerState& opt,
                 double learning_rate);

struct MetricsRow {
    std::int64_t step = 0;
    double loss = 0.0;
    double mean_r_face = 0.0;
    double mean_kl = 0.0;
    double grad_norm = 0.0;
    double wall_time_s = 0.0;  // logged to a timing sidecar, not the metrics CSV
};

/// Raised when a training step produces a non-finite loss or gradient; the
/// parameters are left untouched.
class TrainingAbort : public std::runtime_error {
  public:
    explicit TrainingAbort(const std::string& what) : std::runtime_error(what) {}
};

/// Everything a fine-tuning step needs beyond the parameters themselves.
struct TrainContext {
    WorldConfig world;
    SamplerConfig sampler;
    ModelDims dims;
    EmbedderKind embedder = EmbedderKind::kStrong;
    RewardKind reward = RewardKind::kFsm;
    TrainConfig cfg;
    std::uint64_t seed = 0;
};

/// Sum over the trajectory's parameter-live steps of
/// w_t * mean((v_theta(x_t) - v_ref(x_t))^2), with the reference velocities
/// recomputed at the taped states and gradient-blocked.
Var kl_penalty(const Trajectory& traj, const DenoiserParams& theta_ref, const Tensor& cond,
               std::span<const double> weights);

/// Plain value of the same quantity (used for logging when lambda_kl = 0).
double kl_penalty_value(const Trajectory& traj, const DenoiserParams& theta_ref, const Tensor& cond,
                        std::span<const double> weights);

std::vector<FacePool> build_pools(const Dataset& ds, const Embedder& e);

/// One on-policy fine-tuning step over a batch drawn (with replacement) from
/// the train split. Throws TrainingAbort on non-finite loss or gradient.
MetricsRow ipro_step(DenoiserParams& theta, const DenoiserParams& theta_ref, const Dataset& ds,
                     const std::vector<FacePool>& pools, const TrainContext& ctx,
                     OptimizerState& opt, int step);

/// Teacher-forced baseline step: flow-matching MSE plus the identity reward of
/// the one-step x0 prediction as an auxiliary loss.
MetricsRow sft_step(DenoiserParams& theta, const Dataset& ds, const std::vector<FacePool>& pools,
                    const TrainContext& ctx, OptimizerState& opt, int step);

MetricsRow pretrain_step(DenoiserParams& theta, const Dataset& ds, const PretrainConfig& pcfg,
                         const TrainContext& ctx, OptimizerState& opt, int step);

using StepHook = std::function<void(const MetricsRow&, const DenoiserParams&)>;

std::vector<MetricsRow> train_pretrain(DenoiserParams& theta, const Dataset& ds,
                                       const PretrainConfig& pcfg, const TrainContext& ctx,
                                       const StepHook& hook = {});

std::vector<MetricsRow> train_ipro(DenoiserParams& theta, const DenoiserParams& theta_ref,
                                   const Dataset& ds, const TrainContext& ctx,
                                   const StepHook& hook = {});

std::vector<MetricsRow> train_sft(DenoiserParams& theta, const Dataset& ds, const TrainContext& ctx,
                                  const StepHook& hook = {});

}  // namespace ipro
