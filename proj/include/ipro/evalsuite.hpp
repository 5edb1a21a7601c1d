#pragma once

#include "ipro/flow.hpp"
#include "ipro/trainer.hpp"
#include "ipro/world.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ipro {

struct VideoEval {
    int index = 0;
    bool cond_face = true;  // conditioning frame had a detectable face
    double face_sim = 0.0;
    double gen_expr_var = 0.0;
    double gt_expr_var = 0.0;
    bool hack_included = false;
    bool hacked = false;
    double dynamic_degree = 0.0;
};

struct EvalReport {
    double face_sim = 0.0;        // mean over included videos
    double dynamic_degree = 0.0;  // mean over all videos
    double hacking_rate = 0.0;    // flagged fraction of included videos
    double gt_face_sim = 0.0;     // GT videos scored against their own first frames
    double gt_dynamic_degree = 0.0;
    int n_videos = 0;
    int n_face_sim_included = 0;
    int n_hack_included = 0;
    double tau = 0.3;
    std::uint64_t config_fingerprint = 0;
    std::vector<VideoEval> per_video;
};

/// Deterministic generation for evaluation: noise seeded per video index so
/// different checkpoints are compared on identical noise.
Tensor generate_eval_video(const DenoiserParams& p, const SynthVideo& video, int video_index,
                           const SamplerConfig& sc, std::uint64_t seed);

/// Pure metric application: scores an arbitrary generated flat video against
/// its ground-truth counterpart (FaceSim vs the input frame, expression
/// variances, rigidity flag, dynamic degree).
VideoEval score_generated(const SynthVideo& gt, const Array& gen_frames, const WorldConfig& world,
                          double tau, int index = 0);

/// Full held-out evaluation over the given dataset indices.
EvalReport evaluate(const DenoiserParams& p, const Dataset& ds, std::span<const int> indices,
                    const SamplerConfig& sc, std::uint64_t seed, double tau = 0.3,
                    std::uint64_t config_fingerprint = 0);

/// Mean cosine of generated-frame identity embeddings against the input
/// frame's embedding; frames without a detectable face score 0, videos whose
/// input frame has no detectable face are excluded.
double face_sim_eval(const DenoiserParams& p, const Dataset& ds, std::span<const int> indices,
                     const SamplerConfig& sc, std::uint64_t seed);

/// Fraction of eval videos whose generated expression-block variance falls
/// below tau times the ground-truth variance (the rigidity proxy for reward
/// hacking). Videos with gt variance below 1e-12 are excluded.
double rigidity_hacking_rate(const DenoiserParams& p, const Dataset& ds,
                             std::span<const int> indices, const SamplerConfig& sc,
                             std::uint64_t seed, double tau = 0.3);

/// Mean frame-to-frame L2 delta of generated videos.
double dynamic_degree(const DenoiserParams& p, const Dataset& ds, std::span<const int> indices,
                      const SamplerConfig& sc, std::uint64_t seed);

/// Population variance of the expression block across frames, averaged over
/// expression coordinates. `frames` is a flat [n_frames * frame_dim] tensor.
double expr_block_variance(const Array& frames, int n_frames, const WorldConfig& cfg);

/// Mean adjacent-frame L2 delta of one flat video tensor.
double video_dynamic_degree(const Array& frames, int n_frames, int frame_dim);

struct KlCurve {
    std::vector<std::int64_t> steps;
    std::vector<double> kl;
    double final_value = 0.0;
    double max_value = 0.0;
    double last_quartile_slope = 0.0;
};

/// Extracts the KL series and summary statistics from metrics rows.
KlCurve kl_curve(std::span<const MetricsRow> rows);

}  // namespace ipro
