#pragma once

#include "ipro/rng.hpp"
#include "ipro/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ipro {

/// Geometry and noise parameters of the synthetic identity-video world.
/// A frame vector is the concatenation [identity | pose | expression | background].
struct WorldConfig {
    int d_id = 8;
    int d_pose = 4;
    int d_expr = 4;
    int d_bg = 16;
    int frames = 8;
    double sigma_expr = 0.3;
    double identity_energy_cap = 0.25;  // small-face analog: max identity share of frame energy
    double occlusion_prob = 0.1;
    double pose_amplitude = 0.5;

    int frame_dim() const { return d_id + d_pose + d_expr + d_bg; }
    int id_offset() const { return 0; }
    int pose_offset() const { return d_id; }
    int expr_offset() const { return d_id + d_pose; }
    int bg_offset() const { return d_id + d_pose + d_expr; }

    void validate() const;
};

struct SynthVideo {
    Tensor frames;    // [F, d]
    Tensor identity;  // unit [d_id]
    std::vector<bool> occluded;
    std::uint64_t seed = 0;
    // Provenance of the identity block: frame f equals
    // attenuation[f] * u + id_scale[f] * sigma_expr * eta_f when not occluded.
    std::vector<double> attenuation;
    std::vector<double> id_scale;

    int frame_count() const { return static_cast<int>(frames.shape[0]); }
    int frame_dim() const { return static_cast<int>(frames.shape[1]); }

    Array frame(int f) const { return frames.data.segment(static_cast<std::int64_t>(f) * frame_dim(), frame_dim()); }
    Array block(int f, int offset, int len) const {
        return frames.data.segment(static_cast<std::int64_t>(f) * frame_dim() + offset, len);
    }
    int non_occluded_count() const;
};

/// Fixed mixing from the identity-block expression draw into the expression
/// block (DCT rows, unit norm). Makes facial expression observable in the
/// expression block, so rigidity there reflects rigidity of the face.
Tensor expr_mixing_matrix(int d_expr, int d_id);

/// Unit identity vector from an isotropic normal draw.
Tensor sample_identity(const WorldConfig& cfg, Rng& rng);

SynthVideo render_video(const Tensor& identity, const WorldConfig& cfg, Rng& rng,
                        std::uint64_t provenance_seed = 0);

enum class RejectReason { kNone, kCoverage, kEnergyCap };

struct FilterDecision {
    bool accepted = false;
    RejectReason reason = RejectReason::kNone;
    std::string detail;
};

FilterDecision filter_video(const SynthVideo& v, const WorldConfig& cfg);

struct Dataset {
    WorldConfig cfg;
    std::uint64_t seed = 0;
    std::vector<SynthVideo> videos;
    std::vector<int> train_indices;
    std::vector<int> eval_indices;
    // rejection-sampling bookkeeping for the manifest
    std::int64_t attempts = 0;
    std::int64_t rejected_coverage = 0;
    std::int64_t rejected_energy = 0;

    double acceptance_rate() const {
        return attempts == 0 ? 0.0 : static_cast<double>(videos.size()) / static_cast<double>(attempts);
    }
};

/// Rejection-samples exactly `n` accepted videos; deterministic given seed.
/// Train/held-out split by parity of a seed-shuffled order.
Dataset build_dataset(int n, const WorldConfig& cfg, std::uint64_t seed);

}  // namespace ipro
