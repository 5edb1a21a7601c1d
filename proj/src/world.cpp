#include "ipro/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ipro {

void WorldConfig::validate() const {
    if (d_id <= 0 || d_pose < 0 || d_expr < 0 || d_bg < 0)
        throw std::invalid_argument("WorldConfig: block dimensions must be positive (identity) / non-negative");
    if (frames < 2) throw std::invalid_argument("WorldConfig: frames must be >= 2");
    if (!(identity_energy_cap > 0.0 && identity_energy_cap <= 1.0))
        throw std::invalid_argument("WorldConfig: identity_energy_cap must lie in (0, 1]");
    if (!(occlusion_prob >= 0.0 && occlusion_prob < 1.0))
        throw std::invalid_argument("WorldConfig: occlusion_prob must lie in [0, 1)");
    if (sigma_expr < 0.0) throw std::invalid_argument("WorldConfig: sigma_expr must be >= 0");
}

int SynthVideo::non_occluded_count() const {
    int n = 0;
    for (bool o : occluded)
        if (!o) ++n;
    return n;
}

Tensor expr_mixing_matrix(int d_expr, int d_id) {
    Array m(static_cast<std::int64_t>(d_expr) * d_id);
    const double scale = std::sqrt(2.0 / d_id);
    for (int i = 0; i < d_expr; ++i)
        for (int j = 0; j < d_id; ++j)
            m(static_cast<std::int64_t>(i) * d_id + j) =
                scale * std::cos(M_PI * (i + 1) * (j + 0.5) / d_id);
    return Tensor({d_expr, d_id}, std::move(m));
}

Tensor sample_identity(const WorldConfig& cfg, Rng& rng) {
    Array u = rng.normal_array(cfg.d_id);
    double norm = std::sqrt(u.square().sum());
    while (norm < 1e-12) {
        u = rng.normal_array(cfg.d_id);
        norm = std::sqrt(u.square().sum());
    }
    return Tensor({cfg.d_id}, u / norm);
}

SynthVideo render_video(const Tensor& identity, const WorldConfig& cfg, Rng& rng,
                        std::uint64_t provenance_seed) {
    // Rendering tolerates the closed occlusion interval (the all-occluded
    // boundary is well defined); rejection sampling enforces the open one.
    if (!(cfg.occlusion_prob >= 0.0 && cfg.occlusion_prob <= 1.0))
        throw std::invalid_argument("render_video: occlusion_prob must lie in [0, 1]");
    if (cfg.frames < 2 || cfg.d_id <= 0 || cfg.sigma_expr < 0.0 ||
        !(cfg.identity_energy_cap > 0.0 && cfg.identity_energy_cap <= 1.0))
        throw std::invalid_argument("render_video: invalid world config");
    if (identity.rank() != 1 || identity.size() != cfg.d_id)
        throw std::invalid_argument("render_video: identity shape " + shape_str(identity.shape) +
                                    " does not match d_id " + std::to_string(cfg.d_id));
    const int F = cfg.frames;
    const int d = cfg.frame_dim();
    const Tensor mixing = expr_mixing_matrix(cfg.d_expr, cfg.d_id);

    // Internal texture scales of the world (block dimensions and the noise
    // knobs live in WorldConfig).
    constexpr double kBgScale = 1.0;
    constexpr double kWalkStep = 0.3;       // attenuation walk innovation
    constexpr double kWalkBound = 1.0;

    SynthVideo v;
    v.identity = identity;
    v.seed = provenance_seed;
    v.frames = Tensor::zeros({F, d});
    v.occluded.assign(F, false);
    v.attenuation.assign(F, 0.0);
    v.id_scale.assign(F, 1.0);

    // Static per-video background: a confounder shared by all frames.
    const Array bg = kBgScale * rng.normal_array(cfg.d_bg);

    double walk = 0.0;             // bounded attenuation walk
    Array pose = rng.normal_array(cfg.d_pose);

    for (int f = 0; f < F; ++f) {
        if (f > 0) {
            walk = std::clamp(walk + kWalkStep * rng.normal(), -kWalkBound, kWalkBound);
            pose = 0.8 * pose + 0.6 * rng.normal_array(cfg.d_pose);
        }
        const double c = std::exp(cfg.pose_amplitude * walk);
        // Unit-norm expression draw: sigma_expr is exactly the perturbation
        // magnitude, so identity alignment degrades with sigma_expr/c
        // independently of d_id and without heavy-tailed norm spikes.
        Array eta = rng.normal_array(cfg.d_id);
        double eta_norm = std::sqrt(eta.square().sum());
        while (eta_norm < 1e-12) {
            eta = rng.normal_array(cfg.d_id);
            eta_norm = std::sqrt(eta.square().sum());
        }
        eta /= eta_norm;
        const bool occluded = rng.uniform() < cfg.occlusion_prob;

        Array id_block = c * identity.data + cfg.sigma_expr * eta;
        // The expression block is a fixed linear readout of the same draw that
        // perturbs the face, amplified to an observable scale (the face keeps
        // its sigma_expr-sized perturbation). Rigidity of the face therefore
        // shows up as collapsed expression-block variance.
        constexpr double kExprReadoutGain = 8.0;
        Array expr_block(cfg.d_expr);
        if (cfg.d_expr > 0) {
            Eigen::Map<Eigen::VectorXd>(expr_block.data(), cfg.d_expr) =
                mat_view(mixing) * Eigen::Map<const Eigen::VectorXd>(eta.data(), cfg.d_id);
            expr_block *= kExprReadoutGain * cfg.sigma_expr;
        }

        double scale = 1.0;
        double atten = c;
        if (occluded) {
            id_block.setZero();
            atten = 0.0;
        } else {
            // Enforce the small-face energy cap by shrinking the identity block.
            const double id_energy = id_block.square().sum();
            double rest = bg.square().sum() + expr_block.square().sum();
            if (cfg.d_pose > 0) rest += pose.square().sum();
            const double total = id_energy + rest;
            if (total > 0.0 && id_energy > cfg.identity_energy_cap * total) {
                if (rest <= 0.0) {
                    scale = 0.0;
                } else {
                    scale = std::sqrt(cfg.identity_energy_cap * rest /
                                      ((1.0 - cfg.identity_energy_cap) * id_energy)) *
                            (1.0 - 1e-9);
                }
                id_block *= scale;
                atten *= scale;
            }
        }

        auto row = v.frames.data.segment(static_cast<std::int64_t>(f) * d, d);
        row.segment(cfg.id_offset(), cfg.d_id) = id_block;
        if (cfg.d_pose > 0) row.segment(cfg.pose_offset(), cfg.d_pose) = pose;
        if (cfg.d_expr > 0) row.segment(cfg.expr_offset(), cfg.d_expr) = expr_block;
        row.segment(cfg.bg_offset(), cfg.d_bg) = bg;

        v.occluded[f] = occluded;
        v.attenuation[f] = atten;
        v.id_scale[f] = occluded ? 1.0 : scale;
    }
    return v;
}

FilterDecision filter_video(const SynthVideo& v, const WorldConfig& cfg) {
    const int F = v.frame_count();
    const int visible = v.non_occluded_count();
    if (static_cast<double>(visible) / F < 0.4) {
        return {false, RejectReason::kCoverage,
                "face coverage " + std::to_string(visible) + "/" + std::to_string(F) + " below 40%"};
    }
    for (int f = 0; f < F; ++f) {
        if (v.occluded[f]) continue;
        const double id_energy = v.block(f, cfg.id_offset(), cfg.d_id).square().sum();
        const double total = v.frame(f).square().sum();
        if (total > 0.0 && id_energy > cfg.identity_energy_cap * total) {
            return {false, RejectReason::kEnergyCap,
                    "identity energy fraction " + std::to_string(id_energy / total) +
                        " exceeds cap in frame " + std::to_string(f)};
        }
    }
    return {true, RejectReason::kNone, ""};
}

Dataset build_dataset(int n, const WorldConfig& cfg, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("build_dataset: n must be >= 1");
    cfg.validate();

    Dataset ds;
    ds.cfg = cfg;
    ds.seed = seed;
    ds.videos.reserve(n);

    std::int64_t window_attempts = 0;
    std::int64_t window_accepts = 0;
    for (std::int64_t attempt = 0; static_cast<int>(ds.videos.size()) < n; ++attempt) {
        Rng rng(derive_seed(seed, "data", static_cast<std::uint64_t>(attempt)));
        Tensor u = sample_identity(cfg, rng);
        SynthVideo v = render_video(u, cfg, rng, static_cast<std::uint64_t>(attempt));
        ++ds.attempts;
        ++window_attempts;
        FilterDecision fd = filter_video(v, cfg);
        if (fd.accepted) {
            ds.videos.push_back(std::move(v));
            ++window_accepts;
        } else if (fd.reason == RejectReason::kCoverage) {
            ++ds.rejected_coverage;
        } else {
            ++ds.rejected_energy;
        }
        if (window_attempts >= 256) {
            if (window_accepts < window_attempts / 100 + 1)
                throw std::runtime_error(
                    "build_dataset: rejection rate above 99% over the last " +
                    std::to_string(window_attempts) + " attempts; world config is degenerate");
            window_attempts = 0;
            window_accepts = 0;
        }
    }

    // Split by parity of a shuffled order (Fisher-Yates on a derived stream).
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(seed, "split"));
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(split_rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    for (int pos = 0; pos < n; ++pos) {
        if (pos % 2 == 0)
            ds.train_indices.push_back(order[pos]);
        else
            ds.eval_indices.push_back(order[pos]);
    }
    std::sort(ds.train_indices.begin(), ds.train_indices.end());
    std::sort(ds.eval_indices.begin(), ds.eval_indices.end());
    return ds;
}

}  // namespace ipro
