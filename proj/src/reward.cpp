#include "ipro/reward.hpp"

#include <stdexcept>

namespace ipro {

Var frame_score(Var gen_frame, const FacePool& pool, const Embedder& e, bool* no_face) {
    if (pool.embeddings.empty()) throw std::invalid_argument("frame_score: empty pool");
    Tape& tape = *gen_frame.tape;
    if (!face_detectable(e, tape.value(gen_frame).data)) {
        if (no_face) *no_face = true;
        return tape.constant_scalar(0.0);
    }
    if (no_face) *no_face = false;
    Var emb = embed(e, gen_frame);
    Var acc{};
    for (const Tensor& entry : pool.embeddings) {
        Var c = cosine_similarity(emb, tape.constant(entry));
        acc = acc.valid() ? add(acc, c) : c;
    }
    return scalar_mul(acc, 1.0 / pool.size());
}

namespace {

RewardGraph mean_frame_scores(Var gen_video, int n_frames, const FacePool& pool, const Embedder& e) {
    if (n_frames < 1) throw std::invalid_argument("reward: need at least one generated frame");
    Tape& tape = *gen_video.tape;
    const Tensor& video = tape.value(gen_video);
    const std::int64_t d = e.frame_dim;
    if (video.size() != static_cast<std::int64_t>(n_frames) * d)
        throw std::invalid_argument("reward: video size " + std::to_string(video.size()) +
                                    " does not match frames " + std::to_string(n_frames) + " x dim " +
                                    std::to_string(d));
    RewardGraph g;
    g.report.embedder = e.kind;
    g.report.pool_size = pool.size();
    Var acc{};
    for (int f = 0; f < n_frames; ++f) {
        Var frame = slice(gen_video, static_cast<std::int64_t>(f) * d, d);
        bool no_face = false;
        Var s = frame_score(frame, pool, e, &no_face);
        g.report.frame_scores.push_back(tape.value(s).item());
        g.report.no_face.push_back(no_face);
        acc = acc.valid() ? add(acc, s) : s;
    }
    g.r_face = scalar_mul(acc, 1.0 / n_frames);
    g.report.r_face = tape.value(g.r_face).item();
    return g;
}

}  // namespace

RewardGraph fsm_reward(Var gen_video, int n_frames, const FacePool& pool, const Embedder& e) {
    if (pool.embeddings.empty()) throw std::invalid_argument("fsm_reward: empty pool");
    return mean_frame_scores(gen_video, n_frames, pool, e);
}

RewardGraph single_ref_reward(Var gen_video, int n_frames, const Tensor& input_frame,
                              const Embedder& e) {
    if (!face_detectable(e, input_frame.data))
        throw std::runtime_error("single_ref_reward: input frame has no detectable face");
    FacePool ref;
    ref.source = "input-frame";
    ref.embeddings.push_back(embed_value(e, input_frame.data));
    return mean_frame_scores(gen_video, n_frames, ref, e);
}

}  // namespace ipro
