#include "ipro/embedder.hpp"

#include <cmath>
#include <stdexcept>

namespace ipro {

const char* embedder_kind_name(EmbedderKind k) {
    return k == EmbedderKind::kStrong ? "strong" : "weak";
}

EmbedderKind embedder_kind_from(const std::string& name) {
    if (name == "strong") return EmbedderKind::kStrong;
    if (name == "weak") return EmbedderKind::kWeak;
    throw std::invalid_argument("unknown embedder kind: " + name);
}

namespace {

Array selected_block(const Embedder& e, const Array& frame) {
    if (frame.size() != e.frame_dim)
        throw std::invalid_argument("embed: frame length " + std::to_string(frame.size()) +
                                    " does not match frame_dim " + std::to_string(e.frame_dim));
    if (e.kind == EmbedderKind::kStrong) return frame.segment(0, e.d_id);
    return frame;
}

}  // namespace

bool face_detectable(const Embedder& e, const Array& frame) {
    const Array block = selected_block(e, frame);
    return std::sqrt(block.square().sum()) >= kNoFaceNorm;
}

Tensor embed_value(const Embedder& e, const Array& frame) {
    const Array block = selected_block(e, frame);
    const double norm = std::sqrt(block.square().sum() + kNormEps);
    if (std::sqrt(block.square().sum()) < kNoFaceNorm)
        throw std::runtime_error("embed: no detectable face (selected block norm below guard)");
    return Tensor({block.size()}, block / norm);
}

Var embed(const Embedder& e, Var frame) {
    const Tensor& t = frame.tape->value(frame);
    if (t.size() != e.frame_dim)
        throw std::invalid_argument("embed: frame shape " + shape_str(t.shape) +
                                    " does not match frame_dim " + std::to_string(e.frame_dim));
    if (e.kind == EmbedderKind::kStrong) return l2_normalize(slice(frame, 0, e.d_id));
    return l2_normalize(frame);
}

double cos_sim_value(const Array& a, const Array& b) {
    const double na = std::sqrt(a.square().sum() + kNormEps);
    const double nb = std::sqrt(b.square().sum() + kNormEps);
    return (a * b).sum() / (na * nb);
}

FacePool build_face_pool(const SynthVideo& video, const Embedder& e) {
    FacePool pool;
    pool.source = "video-seed-" + std::to_string(video.seed);
    for (int f = 0; f < video.frame_count(); ++f) {
        if (video.occluded[f]) continue;
        const Array frame = video.frame(f);
        if (!face_detectable(e, frame)) continue;
        pool.embeddings.push_back(embed_value(e, frame));
    }
    if (pool.embeddings.empty())
        throw std::runtime_error("build_face_pool: video has no detectable-face frames");
    return pool;
}

}  // namespace ipro
