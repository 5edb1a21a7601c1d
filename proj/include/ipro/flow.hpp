#pragma once

#include "ipro/rng.hpp"
#include "ipro/tape.hpp"
#include "ipro/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace ipro {

/// Architecture of the conditioned velocity-prediction MLP:
/// [x_t (frames*frame_dim) | sinusoidal t-embedding | condition frame] ->
/// hidden -> hidden -> velocity, tanh activations on the hidden layers.
struct ModelDims {
    int frames = 8;
    int frame_dim = 32;
    int hidden = 256;
    int t_embed = 8;

    int state_dim() const { return frames * frame_dim; }
    int input_dim() const { return state_dim() + t_embed + frame_dim; }
    int output_dim() const { return state_dim(); }

    bool operator==(const ModelDims&) const = default;
};

struct DenoiserParams {
    ModelDims dims;
    Tensor w1, b1, w2, b2, w3, b3;

    /// Zero-mean normal init scaled by 1/sqrt(fan_in); biases zero.
    static DenoiserParams init(const ModelDims& dims, Rng& rng);
    static DenoiserParams zeros(const ModelDims& dims);

    std::array<Tensor*, 6> tensors() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
    std::array<const Tensor*, 6> tensors() const { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
    static const char* tensor_name(int i);
    std::int64_t parameter_count() const;
};

struct SamplerConfig {
    int steps = 8;  // uniform grid t = 1 -> 0

    double time_at(int k) const { return static_cast<double>(k) / steps; }
    double dt() const { return 1.0 / steps; }
    void validate() const;
};

/// 4 sine/cosine pairs at geometric frequencies pi * 2^p (p = 0..dim/2-1).
Tensor time_embedding(double t, int dim);

/// Linear corruption path x_t = (1-t) x0 + t eps.
Tensor forward_corrupt(const Tensor& x0, const Tensor& eps, double t);

/// Inversion of the linear path given a velocity: x0_hat = x_t - t v.
/// At t = 0 returns x_t unchanged.
Tensor predict_x0(const Tensor& x_t, const Tensor& v, double t);
Var predict_x0(Var x_t, Var v, double t);

/// Plain (tape-free) forward pass; bitwise identical to the taped pass.
Tensor velocity_value(const DenoiserParams& p, const Array& x_t, double t, const Array& cond);

/// Parameter leaves on a tape.
struct ParamVars {
    Var w1, b1, w2, b2, w3, b3;
    std::array<Var, 6> list() const { return {w1, b1, w2, b2, w3, b3}; }
};

ParamVars insert_params(Tape& tape, const DenoiserParams& p);
ParamVars stop_gradient(const ParamVars& pv);

Var velocity_pred(const ModelDims& dims, const ParamVars& pv, Var x_t, double t, Var cond);

enum class TapePlacement { kLastK, kFirstK };

/// One sampled reverse trajectory. States and velocities are stored in
/// execution order: states[0] = x at t=1, states[steps] = x at t=0;
/// velocities[j] moves states[j] to states[j+1] and was evaluated at times[j].
struct Trajectory {
    std::vector<Tensor> states;
    std::vector<Tensor> velocities;
    std::vector<double> times;
    std::vector<bool> theta_live;   // per step: parameter gradient flows through it
    std::vector<Var> state_vars;    // invalid handles where the state is off-tape
    std::vector<Var> velocity_vars; // invalid handles where the step is off-tape
    Var final_state{};
    bool from_pure_noise = false;

    int steps() const { return static_cast<int>(velocities.size()); }
    int taped_steps() const;
};

/// Euler integration from x_T under the given taping policy. With kLastK the
/// first steps-k steps run off the tape and the cutoff state enters as a
/// gradient-blocked constant; with kFirstK every step is taped for the state
/// chain but only the first k apply live parameters.
Trajectory sample(Tape& tape, const DenoiserParams& p, const ParamVars& pv, const Tensor& x_T,
                  const Tensor& cond, const SamplerConfig& sc, int tape_last_k,
                  TapePlacement placement = TapePlacement::kLastK, bool from_pure_noise = false);

/// Taped tail only: the last k steps starting from a caller-supplied cutoff
/// state (test hook for truncation-equivalence and gradient oracles).
Trajectory sample_tail(Tape& tape, const ParamVars& pv, const ModelDims& dims,
                       const Tensor& cutoff_state, const Tensor& cond, const SamplerConfig& sc,
                       int k);

/// Tape-free sampling for evaluation.
struct PlainTrajectory {
    std::vector<Tensor> states;
    std::vector<Tensor> velocities;
    std::vector<double> times;
};
PlainTrajectory sample_value(const DenoiserParams& p, const Tensor& x_T, const Tensor& cond,
                             const SamplerConfig& sc);

/// Velocity-matching pretraining loss for one item: t ~ U[0,1], eps ~ N(0,I),
/// mean squared error against the target eps - x0.
Var pretrain_loss(Tape& tape, const ModelDims& dims, const ParamVars& pv, const Tensor& x0,
                  const Tensor& cond, Rng& rng);

/// Same loss at caller-chosen (t, eps).
Var pretrain_loss_at(Tape& tape, const ModelDims& dims, const ParamVars& pv, const Tensor& x0,
                     const Tensor& cond, double t, const Tensor& eps);

}  // namespace ipro
