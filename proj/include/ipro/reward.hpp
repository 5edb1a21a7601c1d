#pragma once

#include "ipro/embedder.hpp"
#include "ipro/tape.hpp"

#include <vector>

namespace ipro {

struct RewardReport {
    std::vector<double> frame_scores;
    std::vector<bool> no_face;  // frames that scored 0 for lack of a detectable face
    double r_face = 0.0;
    EmbedderKind embedder = EmbedderKind::kStrong;
    int pool_size = 0;
};

struct RewardGraph {
    Var r_face;  // scalar on the tape
    RewardReport report;
};

/// Mean cosine of the generated frame's embedding against every pool entry.
/// Pool entries enter as gradient-blocked constants. A frame without a
/// detectable face contributes a constant 0 and sets *no_face.
Var frame_score(Var gen_frame, const FacePool& pool, const Embedder& e, bool* no_face);

/// Pool-averaged identity reward over a generated video laid out as a flat
/// [frames * frame_dim] tensor on the tape.
RewardGraph fsm_reward(Var gen_video, int n_frames, const FacePool& pool, const Embedder& e);

/// Single-reference ablation: mean cosine against the input frame's embedding
/// only. Throws if the input frame has no detectable face.
RewardGraph single_ref_reward(Var gen_video, int n_frames, const Tensor& input_frame, const Embedder& e);

}  // namespace ipro
