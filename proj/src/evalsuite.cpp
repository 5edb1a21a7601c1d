#include "ipro/evalsuite.hpp"

#include "ipro/embedder.hpp"

#include <cmath>
#include <stdexcept>

namespace ipro {

Tensor generate_eval_video(const DenoiserParams& p, const SynthVideo& video, int video_index,
                           const SamplerConfig& sc, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "eval", static_cast<std::uint64_t>(video_index)));
    const Tensor x_T = rng.normal_tensor({p.dims.state_dim()});
    const Tensor cond = Tensor::from_array(video.frame(0));
    PlainTrajectory traj = sample_value(p, x_T, cond, sc);
    return traj.states.back();
}

double expr_block_variance(const Array& frames, int n_frames, const WorldConfig& cfg) {
    if (cfg.d_expr <= 0) return 0.0;
    const int d = cfg.frame_dim();
    double acc = 0.0;
    for (int j = 0; j < cfg.d_expr; ++j) {
        double mean = 0.0;
        for (int f = 0; f < n_frames; ++f)
            mean += frames(static_cast<std::int64_t>(f) * d + cfg.expr_offset() + j);
        mean /= n_frames;
        double var = 0.0;
        for (int f = 0; f < n_frames; ++f) {
            const double x = frames(static_cast<std::int64_t>(f) * d + cfg.expr_offset() + j) - mean;
            var += x * x;
        }
        acc += var / n_frames;
    }
    return acc / cfg.d_expr;
}

double video_dynamic_degree(const Array& frames, int n_frames, int frame_dim) {
    if (n_frames < 2) return 0.0;
    double acc = 0.0;
    for (int f = 0; f + 1 < n_frames; ++f) {
        const Array delta = frames.segment(static_cast<std::int64_t>(f + 1) * frame_dim, frame_dim) -
                            frames.segment(static_cast<std::int64_t>(f) * frame_dim, frame_dim);
        acc += std::sqrt(delta.square().sum());
    }
    return acc / (n_frames - 1);
}

namespace {

/// Mean per-frame cosine against a reference embedding; undetectable frames
/// score 0 (the identity-disappearance penalty used by the reward).
double frames_face_sim(const Array& frames, int n_frames, const Embedder& e, const Array& ref_emb) {
    double acc = 0.0;
    for (int f = 0; f < n_frames; ++f) {
        const Array frame = frames.segment(static_cast<std::int64_t>(f) * e.frame_dim, e.frame_dim);
        if (face_detectable(e, frame)) acc += cos_sim_value(embed_value(e, frame).data, ref_emb);
    }
    return acc / n_frames;
}

}  // namespace

VideoEval score_generated(const SynthVideo& gt, const Array& gen_frames, const WorldConfig& world,
                          double tau, int index) {
    const Embedder strong = Embedder::strong(world);
    const int F = gt.frame_count();
    VideoEval ve;
    ve.index = index;
    const Array cond = gt.frame(0);
    ve.cond_face = face_detectable(strong, cond);
    if (ve.cond_face) {
        const Array ref = embed_value(strong, cond).data;
        ve.face_sim = frames_face_sim(gen_frames, F, strong, ref);
    }
    ve.gen_expr_var = expr_block_variance(gen_frames, F, world);
    ve.gt_expr_var = expr_block_variance(gt.frames.data, F, world);
    ve.hack_included = ve.gt_expr_var >= 1e-12;
    ve.hacked = ve.hack_included && ve.gen_expr_var < tau * ve.gt_expr_var;
    ve.dynamic_degree = video_dynamic_degree(gen_frames, F, world.frame_dim());
    return ve;
}

EvalReport evaluate(const DenoiserParams& p, const Dataset& ds, std::span<const int> indices,
                    const SamplerConfig& sc, std::uint64_t seed, double tau,
                    std::uint64_t config_fingerprint) {
    if (indices.empty()) throw std::invalid_argument("evaluate: empty eval set");
    const WorldConfig& world = ds.cfg;
    const Embedder strong = Embedder::strong(world);

    EvalReport report;
    report.tau = tau;
    report.config_fingerprint = config_fingerprint;
    report.n_videos = static_cast<int>(indices.size());

    double face_acc = 0.0, gt_face_acc = 0.0, dyn_acc = 0.0, gt_dyn_acc = 0.0;
    int hacked = 0;
    for (int index : indices) {
        const SynthVideo& video = ds.videos[static_cast<std::size_t>(index)];
        const Tensor gen = generate_eval_video(p, video, index, sc, seed);
        VideoEval ve = score_generated(video, gen.data, world, tau, index);
        if (ve.cond_face) {
            face_acc += ve.face_sim;
            gt_face_acc += frames_face_sim(video.frames.data, video.frame_count(), strong,
                                           embed_value(strong, video.frame(0)).data);
            ++report.n_face_sim_included;
        }
        if (ve.hack_included) {
            ++report.n_hack_included;
            if (ve.hacked) ++hacked;
        }
        dyn_acc += ve.dynamic_degree;
        gt_dyn_acc += video_dynamic_degree(video.frames.data, video.frame_count(), world.frame_dim());
        report.per_video.push_back(std::move(ve));
    }
    if (report.n_face_sim_included > 0) {
        report.face_sim = face_acc / report.n_face_sim_included;
        report.gt_face_sim = gt_face_acc / report.n_face_sim_included;
    }
    if (report.n_hack_included > 0)
        report.hacking_rate = static_cast<double>(hacked) / report.n_hack_included;
    report.dynamic_degree = dyn_acc / report.n_videos;
    report.gt_dynamic_degree = gt_dyn_acc / report.n_videos;
    return report;
}

double face_sim_eval(const DenoiserParams& p, const Dataset& ds, std::span<const int> indices,
                     const SamplerConfig& sc, std::uint64_t seed) {
    return evaluate(p, ds, indices, sc, seed).face_sim;
}

double rigidity_hacking_rate(const DenoiserParams& p, const Dataset& ds,
                             std::span<const int> indices, const SamplerConfig& sc,
                             std::uint64_t seed, double tau) {
    return evaluate(p, ds, indices, sc, seed, tau).hacking_rate;
}

double dynamic_degree(const DenoiserParams& p, const Dataset& ds, std::span<const int> indices,
                      const SamplerConfig& sc, std::uint64_t seed) {
    return evaluate(p, ds, indices, sc, seed).dynamic_degree;
}

KlCurve kl_curve(std::span<const MetricsRow> rows) {
    if (rows.empty()) throw std::invalid_argument("kl_curve: no metrics rows");
    KlCurve curve;
    for (const MetricsRow& r : rows) {
        curve.steps.push_back(r.step);
        curve.kl.push_back(r.mean_kl);
        curve.max_value = std::max(curve.max_value, r.mean_kl);
    }
    curve.final_value = curve.kl.back();

    // Least-squares slope over the last quartile of the series.
    const std::size_t n = curve.kl.size();
    if (n >= 2) {
        const std::size_t s = n - std::max<std::size_t>(2, (n + 3) / 4);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double cnt = static_cast<double>(n - s);
        for (std::size_t i = s; i < n; ++i) {
            const double x = static_cast<double>(curve.steps[i]);
            const double y = curve.kl[i];
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double denom = cnt * sxx - sx * sx;
        curve.last_quartile_slope = denom != 0.0 ? (cnt * sxy - sx * sy) / denom : 0.0;
    }
    return curve;
}

}  // namespace ipro
