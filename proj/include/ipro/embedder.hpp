#pragma once

#include "ipro/tape.hpp"
#include "ipro/tensor.hpp"
#include "ipro/world.hpp"

#include <string>
#include <vector>

namespace ipro {

/// Below this norm of the selected block a frame carries no detectable face.
inline constexpr double kNoFaceNorm = 1e-9;

enum class EmbedderKind { kStrong, kWeak };

const char* embedder_kind_name(EmbedderKind k);
EmbedderKind embedder_kind_from(const std::string& name);

/// Frozen face encoder. The strong embedder normalizes the identity block
/// (pose attenuation and everything outside the block are invisible to it);
/// the weak embedder normalizes the whole frame, so background leaks in.
struct Embedder {
    EmbedderKind kind = EmbedderKind::kStrong;
    int d_id = 0;
    int frame_dim = 0;

    static Embedder strong(const WorldConfig& cfg) { return {EmbedderKind::kStrong, cfg.d_id, cfg.frame_dim()}; }
    static Embedder weak(const WorldConfig& cfg) { return {EmbedderKind::kWeak, cfg.d_id, cfg.frame_dim()}; }
    static Embedder make(EmbedderKind k, const WorldConfig& cfg) {
        return k == EmbedderKind::kStrong ? strong(cfg) : weak(cfg);
    }

    int output_dim() const { return kind == EmbedderKind::kStrong ? d_id : frame_dim; }
};

/// True when the frame's selected block clears the no-face norm guard.
bool face_detectable(const Embedder& e, const Array& frame);

/// Plain-value embedding; throws if no face is detectable.
Tensor embed_value(const Embedder& e, const Array& frame);

/// Taped embedding of a frame Var (frozen parameters, differentiable input).
/// Callers must check detectability on the forward value first.
Var embed(const Embedder& e, Var frame);

double cos_sim_value(const Array& a, const Array& b);

/// Identity embeddings of every non-occluded ground-truth frame.
struct FacePool {
    std::vector<Tensor> embeddings;
    std::string source;
    int size() const { return static_cast<int>(embeddings.size()); }
};

FacePool build_face_pool(const SynthVideo& video, const Embedder& e);

}  // namespace ipro
