#include "ipro/trainer.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace ipro {

const char* reward_kind_name(RewardKind k) {
    return k == RewardKind::kFsm ? "fsm" : "single_ref";
}

RewardKind reward_kind_from(const std::string& name) {
    if (name == "fsm") return RewardKind::kFsm;
    if (name == "single_ref") return RewardKind::kSingleRef;
    throw std::invalid_argument("unknown reward kind: " + name);
}

void TrainConfig::validate(int sampler_steps) const {
    if (k_truncate < 1 || k_truncate > sampler_steps)
        throw std::invalid_argument("TrainConfig: k_truncate must lie in [1, sampler steps]");
    if (lambda_face < 0.0 || lambda_kl < 0.0)
        throw std::invalid_argument("TrainConfig: reward/KL weights must be >= 0");
    if (batch_size < 1 || total_steps < 0)
        throw std::invalid_argument("TrainConfig: batch_size must be >= 1 and total_steps >= 0");
    if (!kl_weights.empty() && static_cast<int>(kl_weights.size()) != k_truncate)
        throw std::invalid_argument("TrainConfig: kl_weights must have k_truncate entries");
}

std::vector<double> TrainConfig::resolved_kl_weights() const {
    if (!kl_weights.empty()) return kl_weights;
    return std::vector<double>(static_cast<std::size_t>(k_truncate), 1.0 / k_truncate);
}

OptimizerState OptimizerState::init(const DenoiserParams& p) {
    OptimizerState s;
    for (const Tensor* t : p.tensors()) {
        s.m.push_back(Array::Zero(t->size()));
        s.v.push_back(Array::Zero(t->size()));
    }
    return s;
}

void adam_update(DenoiserParams& params, const std::array<Array, 6>& grads, OptimizerState& opt,
                 double learning_rate) {
    ++opt.step_count;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
    auto ts = params.tensors();
    for (int i = 0; i < 6; ++i) {
        const Array& g = grads[static_cast<std::size_t>(i)];
        if (g.size() != ts[i]->size())
            throw std::invalid_argument("adam_update: gradient shape mismatch on " +
                                        std::string(DenoiserParams::tensor_name(i)));
        Array& m = opt.m[static_cast<std::size_t>(i)];
        Array& v = opt.v[static_cast<std::size_t>(i)];
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g.square();
        Array m_hat = m / bc1;
        Array v_hat = v / bc2;
        ts[i]->data -= learning_rate * m_hat / (v_hat.sqrt() + opt.eps);
    }
}

// ---------------------------------------------------------------------------
// KL penalty
// ---------------------------------------------------------------------------

namespace {

void check_kl_inputs(const Trajectory& traj, const DenoiserParams& theta_ref, const Tensor& cond,
                     std::span<const double> weights) {
    if (static_cast<int>(weights.size()) != traj.taped_steps())
        throw std::invalid_argument("kl_penalty: got " + std::to_string(weights.size()) +
                                    " weights for " + std::to_string(traj.taped_steps()) +
                                    " taped steps");
    if (cond.size() != theta_ref.dims.frame_dim)
        throw std::invalid_argument("kl_penalty: condition size does not match reference model");
    for (int j = 0; j < traj.steps(); ++j) {
        if (traj.theta_live[static_cast<std::size_t>(j)] &&
            traj.velocities[static_cast<std::size_t>(j)].size() != theta_ref.dims.output_dim())
            throw std::invalid_argument("kl_penalty: trajectory and reference model architectures differ");
    }
}

}  // namespace

Var kl_penalty(const Trajectory& traj, const DenoiserParams& theta_ref, const Tensor& cond,
               std::span<const double> weights) {
    check_kl_inputs(traj, theta_ref, cond, weights);
    Var acc{};
    std::size_t w = 0;
    for (int j = 0; j < traj.steps(); ++j) {
        if (!traj.theta_live[static_cast<std::size_t>(j)]) continue;
        Var v_theta = traj.velocity_vars[static_cast<std::size_t>(j)];
        Tape& tape = *v_theta.tape;
        Tensor v_ref = velocity_value(theta_ref, traj.states[static_cast<std::size_t>(j)].data,
                                      traj.times[static_cast<std::size_t>(j)], cond.data);
        Var term = squared_error_mean(v_theta, tape.constant(std::move(v_ref)));
        Var weighted = scalar_mul(term, weights[w++]);
        acc = acc.valid() ? add(acc, weighted) : weighted;
    }
    if (!acc.valid()) throw std::invalid_argument("kl_penalty: trajectory has no taped steps");
    return acc;
}

double kl_penalty_value(const Trajectory& traj, const DenoiserParams& theta_ref, const Tensor& cond,
                        std::span<const double> weights) {
    check_kl_inputs(traj, theta_ref, cond, weights);
    double acc = 0.0;
    std::size_t w = 0;
    for (int j = 0; j < traj.steps(); ++j) {
        if (!traj.theta_live[static_cast<std::size_t>(j)]) continue;
        const Tensor& v_theta = traj.velocities[static_cast<std::size_t>(j)];
        Tensor v_ref = velocity_value(theta_ref, traj.states[static_cast<std::size_t>(j)].data,
                                      traj.times[static_cast<std::size_t>(j)], cond.data);
        const double term =
            (v_theta.data - v_ref.data).square().sum() / static_cast<double>(v_theta.size());
        acc += weights[w++] * term;
    }
    return acc;
}

std::vector<FacePool> build_pools(const Dataset& ds, const Embedder& e) {
    std::vector<FacePool> pools;
    pools.reserve(ds.videos.size());
    for (const SynthVideo& v : ds.videos) pools.push_back(build_face_pool(v, e));
    return pools;
}

// ---------------------------------------------------------------------------
// Batch machinery: fixed-chunk parallelism with ordered reduction, so results
// do not depend on the number of worker threads.
// ---------------------------------------------------------------------------

namespace {

constexpr int kGradChunks = 8;

/// Per-item metric values collected while a chunk graph is built.
struct ItemMetrics {
    double loss = 0.0;
    double r_face = 0.0;
    double kl = 0.0;
};

/// Builds one item's loss subgraph on the chunk tape and reports its metrics.
using ItemBuilder = std::function<Var(Tape& tape, const ParamVars& pv, int item, ItemMetrics&)>;

struct ChunkAccum {
    std::array<Array, 6> grads;
    double loss = 0.0;
    double r_face = 0.0;
    double kl = 0.0;
    bool finite = true;
    std::string diag;
};

struct StepStats {
    double loss = 0.0;
    double r_face = 0.0;
    double kl = 0.0;
    double grad_norm = 0.0;
};

/// Runs `batch_size` items, averaging gradients and metrics. Items in a chunk
/// share one tape (parameters inserted once, losses summed, one backward).
/// Chunk count is fixed, so the reduction order (and therefore every bit of
/// the result) is independent of available threads.
StepStats run_batch(int batch_size, const DenoiserParams& params, int step,
                    const ItemBuilder& item_fn, std::array<Array, 6>& grad_out) {
    const int chunks = std::min(batch_size, kGradChunks);
    std::vector<ChunkAccum> acc(static_cast<std::size_t>(chunks));

    auto run_chunk = [&](int c) {
        ChunkAccum& a = acc[static_cast<std::size_t>(c)];
        const int begin = static_cast<int>((static_cast<std::int64_t>(batch_size) * c) / chunks);
        const int end = static_cast<int>((static_cast<std::int64_t>(batch_size) * (c + 1)) / chunks);
        Tape tape;
        ParamVars pv = insert_params(tape, params);
        Var total{};
        for (int item = begin; item < end; ++item) {
            ItemMetrics m;
            Var loss = item_fn(tape, pv, item, m);
            if (!std::isfinite(m.loss)) {
                a.finite = false;
                a.diag = "non-finite loss at step " + std::to_string(step) + ", item " +
                         std::to_string(item);
                return;
            }
            a.loss += m.loss;
            a.r_face += m.r_face;
            a.kl += m.kl;
            total = total.valid() ? add(total, loss) : loss;
        }
        tape.backward(total);
        auto vars = pv.list();
        for (int i = 0; i < 6; ++i) {
            a.grads[static_cast<std::size_t>(i)] = tape.adjoint(vars[static_cast<std::size_t>(i)]);
            if (!a.grads[static_cast<std::size_t>(i)].isFinite().all()) {
                a.finite = false;
                a.diag = "non-finite gradient of " + std::string(DenoiserParams::tensor_name(i)) +
                         " at step " + std::to_string(step);
                return;
            }
        }
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (hw <= 1 || chunks <= 1) {
        for (int c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> workers;
        std::atomic<int> next{0};
        const unsigned n_workers = std::min<unsigned>(hw, static_cast<unsigned>(chunks));
        for (unsigned w = 0; w < n_workers; ++w) {
            workers.emplace_back([&] {
                for (int c = next.fetch_add(1); c < chunks; c = next.fetch_add(1)) run_chunk(c);
            });
        }
        for (std::thread& t : workers) t.join();
    }

    StepStats stats;
    for (int i = 0; i < 6; ++i) grad_out[static_cast<std::size_t>(i)] = Array::Zero(params.tensors()[i]->size());
    for (const ChunkAccum& a : acc) {
        if (!a.finite) throw TrainingAbort(a.diag);
        for (int i = 0; i < 6; ++i) grad_out[static_cast<std::size_t>(i)] += a.grads[static_cast<std::size_t>(i)];
        stats.loss += a.loss;
        stats.r_face += a.r_face;
        stats.kl += a.kl;
    }
    const double inv = 1.0 / batch_size;
    double norm_sq = 0.0;
    for (int i = 0; i < 6; ++i) {
        grad_out[static_cast<std::size_t>(i)] *= inv;
        norm_sq += grad_out[static_cast<std::size_t>(i)].square().sum();
    }
    stats.loss *= inv;
    stats.r_face *= inv;
    stats.kl *= inv;
    stats.grad_norm = std::sqrt(norm_sq);
    if (!std::isfinite(stats.grad_norm))
        throw TrainingAbort("non-finite batch gradient at step " + std::to_string(step));
    return stats;
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

const SynthVideo& pick_train_video(const Dataset& ds, Rng& rng, int* index_out) {
    const int idx = ds.train_indices[static_cast<std::size_t>(
        rng.uniform_index(ds.train_indices.size()))];
    if (index_out) *index_out = idx;
    return ds.videos[static_cast<std::size_t>(idx)];
}

}  // namespace

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

MetricsRow ipro_step(DenoiserParams& theta, const DenoiserParams& theta_ref, const Dataset& ds,
                     const std::vector<FacePool>& pools, const TrainContext& ctx,
                     OptimizerState& opt, int step) {
    if (!(theta.dims == theta_ref.dims))
        throw std::invalid_argument("ipro_step: theta and theta_ref architectures differ");
    const TrainConfig& cfg = ctx.cfg;
    cfg.validate(ctx.sampler.steps);
    const Embedder emb = Embedder::make(ctx.embedder, ctx.world);
    const std::vector<double> weights = cfg.resolved_kl_weights();
    const double start = now_seconds();

    auto item_fn = [&](Tape& tape, const ParamVars& pv, int item, ItemMetrics& m) {
        Rng rng(derive_seed(ctx.seed, "sampling", static_cast<std::uint64_t>(step),
                            static_cast<std::uint64_t>(item)));
        int video_idx = 0;
        const SynthVideo& video = pick_train_video(ds, rng, &video_idx);
        const FacePool& pool = pools[static_cast<std::size_t>(video_idx)];
        const Tensor cond = Tensor::from_array(video.frame(0));
        const Tensor x_T = rng.normal_tensor({ctx.dims.state_dim()});

        Trajectory traj = sample(tape, theta, pv, x_T, cond, ctx.sampler, cfg.k_truncate,
                                 cfg.placement, /*from_pure_noise=*/true);

        Var reward{};
        if (ctx.reward == RewardKind::kFsm) {
            reward = fsm_reward(traj.final_state, ctx.dims.frames, pool, emb).r_face;
        } else if (face_detectable(emb, cond.data)) {
            reward = single_ref_reward(traj.final_state, ctx.dims.frames, cond, emb).r_face;
        } else {
            // No detectable face in the conditioning frame: the single-reference
            // reward is undefined, so the item contributes no reward gradient.
            reward = tape.constant_scalar(0.0);
        }
        m.r_face = tape.value(reward).item();

        Var loss = scalar_mul(reward, -cfg.lambda_face);
        if (cfg.lambda_kl > 0.0) {
            const Trajectory* kl_traj = &traj;
            Trajectory fresh;
            if (cfg.kl_fresh_trajectory) {
                const Tensor x_T2 = rng.normal_tensor({ctx.dims.state_dim()});
                fresh = sample(tape, theta, pv, x_T2, cond, ctx.sampler, cfg.k_truncate,
                               cfg.placement, /*from_pure_noise=*/true);
                kl_traj = &fresh;
            }
            Var kl = kl_penalty(*kl_traj, theta_ref, cond, weights);
            m.kl = tape.value(kl).item();
            loss = add(loss, scalar_mul(kl, cfg.lambda_kl));
        } else {
            m.kl = kl_penalty_value(traj, theta_ref, cond, weights);
        }
        m.loss = tape.value(loss).item();
        return loss;
    };

    std::array<Array, 6> grads;
    StepStats stats = run_batch(cfg.batch_size, theta, step, item_fn, grads);
    adam_update(theta, grads, opt, cfg.learning_rate);

    MetricsRow row;
    row.step = step;
    row.loss = stats.loss;
    row.mean_r_face = stats.r_face;
    row.mean_kl = stats.kl;
    row.grad_norm = stats.grad_norm;
    row.wall_time_s = now_seconds() - start;
    return row;
}

MetricsRow sft_step(DenoiserParams& theta, const Dataset& ds, const std::vector<FacePool>& pools,
                    const TrainContext& ctx, OptimizerState& opt, int step) {
    const TrainConfig& cfg = ctx.cfg;
    cfg.validate(ctx.sampler.steps);
    const Embedder emb = Embedder::make(ctx.embedder, ctx.world);
    const double start = now_seconds();

    auto item_fn = [&](Tape& tape, const ParamVars& pv, int item, ItemMetrics& m) {
        Rng rng(derive_seed(ctx.seed, "sampling", static_cast<std::uint64_t>(step),
                            static_cast<std::uint64_t>(item)));
        int video_idx = 0;
        const SynthVideo& video = pick_train_video(ds, rng, &video_idx);
        const FacePool& pool = pools[static_cast<std::size_t>(video_idx)];
        const Tensor x0 = Tensor::from_array(video.frames.data);
        const Tensor cond = Tensor::from_array(video.frame(0));

        const double t = rng.uniform();
        const Tensor eps = rng.normal_tensor({x0.size()});
        Tensor x_t = forward_corrupt(x0, eps, t);
        Tensor target({x0.size()}, eps.data - x0.data);

        Var x_t_var = tape.constant(std::move(x_t));
        Var v = velocity_pred(ctx.dims, pv, x_t_var, t, tape.constant(cond));
        Var flow = squared_error_mean(v, tape.constant(std::move(target)));
        Var x0_hat = predict_x0(x_t_var, v, t);
        RewardGraph rg = fsm_reward(x0_hat, ctx.dims.frames, pool, emb);
        m.r_face = rg.report.r_face;
        Var aux = scalar_mul(sub(tape.constant_scalar(1.0), rg.r_face), cfg.lambda_face);
        Var loss = add(flow, aux);
        m.loss = tape.value(loss).item();
        m.kl = 0.0;
        return loss;
    };

    std::array<Array, 6> grads;
    StepStats stats = run_batch(cfg.batch_size, theta, step, item_fn, grads);
    adam_update(theta, grads, opt, cfg.learning_rate);

    MetricsRow row;
    row.step = step;
    row.loss = stats.loss;
    row.mean_r_face = stats.r_face;
    row.mean_kl = stats.kl;
    row.grad_norm = stats.grad_norm;
    row.wall_time_s = now_seconds() - start;
    return row;
}

MetricsRow pretrain_step(DenoiserParams& theta, const Dataset& ds, const PretrainConfig& pcfg,
                         const TrainContext& ctx, OptimizerState& opt, int step) {
    const double start = now_seconds();

    auto item_fn = [&](Tape& tape, const ParamVars& pv, int item, ItemMetrics& m) {
        Rng rng(derive_seed(ctx.seed, "sampling", static_cast<std::uint64_t>(step),
                            static_cast<std::uint64_t>(item)));
        const SynthVideo& video = pick_train_video(ds, rng, nullptr);
        const Tensor x0 = Tensor::from_array(video.frames.data);
        const Tensor cond = Tensor::from_array(video.frame(0));
        Var loss = pretrain_loss(tape, ctx.dims, pv, x0, cond, rng);
        m.loss = tape.value(loss).item();
        return loss;
    };

    std::array<Array, 6> grads;
    StepStats stats = run_batch(pcfg.batch_size, theta, step, item_fn, grads);
    adam_update(theta, grads, opt, pcfg.learning_rate);

    MetricsRow row;
    row.step = step;
    row.loss = stats.loss;
    row.mean_r_face = 0.0;
    row.mean_kl = 0.0;
    row.grad_norm = stats.grad_norm;
    row.wall_time_s = now_seconds() - start;
    return row;
}

// ---------------------------------------------------------------------------
// Loops
// ---------------------------------------------------------------------------

std::vector<MetricsRow> train_pretrain(DenoiserParams& theta, const Dataset& ds,
                                       const PretrainConfig& pcfg, const TrainContext& ctx,
                                       const StepHook& hook) {
    OptimizerState opt = OptimizerState::init(theta);
    std::vector<MetricsRow> rows;
    rows.reserve(static_cast<std::size_t>(pcfg.total_steps));
    for (int step = 1; step <= pcfg.total_steps; ++step) {
        rows.push_back(pretrain_step(theta, ds, pcfg, ctx, opt, step));
        if (hook) hook(rows.back(), theta);
    }
    return rows;
}

std::vector<MetricsRow> train_ipro(DenoiserParams& theta, const DenoiserParams& theta_ref,
                                   const Dataset& ds, const TrainContext& ctx,
                                   const StepHook& hook) {
    const Embedder emb = Embedder::make(ctx.embedder, ctx.world);
    const std::vector<FacePool> pools = build_pools(ds, emb);
    OptimizerState opt = OptimizerState::init(theta);
    std::vector<MetricsRow> rows;
    rows.reserve(static_cast<std::size_t>(ctx.cfg.total_steps));
    for (int step = 1; step <= ctx.cfg.total_steps; ++step) {
        rows.push_back(ipro_step(theta, theta_ref, ds, pools, ctx, opt, step));
        if (hook) hook(rows.back(), theta);
    }
    return rows;
}

std::vector<MetricsRow> train_sft(DenoiserParams& theta, const Dataset& ds, const TrainContext& ctx,
                                  const StepHook& hook) {
    const Embedder emb = Embedder::make(ctx.embedder, ctx.world);
    const std::vector<FacePool> pools = build_pools(ds, emb);
    OptimizerState opt = OptimizerState::init(theta);
    std::vector<MetricsRow> rows;
    rows.reserve(static_cast<std::size_t>(ctx.cfg.total_steps));
    for (int step = 1; step <= ctx.cfg.total_steps; ++step) {
        rows.push_back(sft_step(theta, ds, pools, ctx, opt, step));
        if (hook) hook(rows.back(), theta);
    }
    return rows;
}

}  // namespace ipro
