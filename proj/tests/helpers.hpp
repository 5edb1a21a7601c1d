#pragma once

// Shared test utilities: independent oracles and the per-op gradient suite.
// Everything here deliberately avoids the library's tape/reward code paths;
// values are computed with plain loops so the checks stay independent.

#include "ipro/embedder.hpp"
#include "ipro/flow.hpp"
#include "ipro/grad_check.hpp"
#include "ipro/rng.hpp"
#include "ipro/tape.hpp"
#include "ipro/world.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ipro::testing {

/// Random tensor with coordinate magnitudes in [0.3, 1.5] * scale. Gradient
/// probes use these instead of normals: a chance near-zero coordinate gives a
/// near-zero analytic gradient whose central difference measures only the
/// floating-point rounding floor, not correctness.
inline Tensor bounded_tensor(Rng& rng, std::vector<std::int64_t> shape, double scale = 1.0) {
    const std::int64_t n = shape_product(shape);
    Array a(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        a(i) = sign * (0.3 + 1.2 * rng.uniform()) * scale;
    }
    return Tensor(std::move(shape), std::move(a));
}

/// Parameter point for whole-model gradient probes: layer-scaled,
/// bounded-magnitude weights.
inline DenoiserParams bounded_params(Rng& rng, const ModelDims& dims) {
    DenoiserParams p = DenoiserParams::zeros(dims);
    p.w1 = bounded_tensor(rng, {dims.hidden, dims.input_dim()}, 1.0 / std::sqrt(dims.input_dim()));
    p.b1 = bounded_tensor(rng, {dims.hidden}, 0.1);
    p.w2 = bounded_tensor(rng, {dims.hidden, dims.hidden}, 1.0 / std::sqrt(dims.hidden));
    p.b2 = bounded_tensor(rng, {dims.hidden}, 0.1);
    p.w3 = bounded_tensor(rng, {dims.output_dim(), dims.hidden}, 1.0 / std::sqrt(dims.hidden));
    p.b3 = bounded_tensor(rng, {dims.output_dim()}, 0.1);
    return p;
}

/// Flattens the six parameter tensors into one probe vector (w1,b1,...,b3).
inline Tensor pack_params(const DenoiserParams& p) {
    Array flat(p.parameter_count());
    std::int64_t off = 0;
    for (const Tensor* t : p.tensors()) {
        flat.segment(off, t->size()) = t->data;
        off += t->size();
    }
    return Tensor::from_array(std::move(flat));
}

/// Rebuilds tape parameter handles from a flat probe Var (for whole-model
/// finite-difference checks).
inline ParamVars unpack_params(Var flat, const ModelDims& dims) {
    ParamVars pv;
    std::int64_t off = 0;
    auto take = [&](std::vector<std::int64_t> shape) {
        const std::int64_t n = shape_product(shape);
        Var piece = slice(flat, off, n);
        off += n;
        return shape.size() == 1 ? piece : reshape(piece, std::move(shape));
    };
    pv.w1 = take({dims.hidden, dims.input_dim()});
    pv.b1 = take({dims.hidden});
    pv.w2 = take({dims.hidden, dims.hidden});
    pv.b2 = take({dims.hidden});
    pv.w3 = take({dims.output_dim(), dims.hidden});
    pv.b3 = take({dims.output_dim()});
    return pv;
}

/// Independent fully-taped Euler sampler (reference for truncation tests).
inline Var full_tape_sample(Tape& tape, const ParamVars& pv, const ModelDims& dims,
                            const Tensor& x_T, const Tensor& cond, const SamplerConfig& sc) {
    Var x = tape.constant(x_T);
    Var condv = tape.constant(cond);
    for (int j = 0; j < sc.steps; ++j) {
        const double t = sc.time_at(sc.steps - j);
        Var v = velocity_pred(dims, pv, x, t, condv);
        x = sub(x, scalar_mul(v, sc.dt()));
    }
    return x;
}

/// Guarded norm matching the documented library definition.
inline double oracle_norm(const double* x, std::int64_t n) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += x[i] * x[i];
    return std::sqrt(s + 1e-12);
}

inline std::vector<double> oracle_embed(const Embedder& e, const Array& frame) {
    const std::int64_t n = e.kind == EmbedderKind::kStrong ? e.d_id : e.frame_dim;
    const double norm = oracle_norm(frame.data(), n);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = frame(i) / norm;
    return out;
}

inline double oracle_cos(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) num += a[i] * b[i];
    double sa = 0.0, sb = 0.0;
    for (double v : a) sa += v * v;
    for (double v : b) sb += v * v;
    return num / (std::sqrt(sa + 1e-12) * std::sqrt(sb + 1e-12));
}

/// Brute-force double loop over generated frames and pool entries:
/// (1/(F'*|pool|)) sum_i sum_j cos(phi(gen_i), pool_j), with frames below the
/// no-face guard contributing 0.
inline double fsm_brute_force(const Array& gen_video, int n_frames, const FacePool& pool,
                              const Embedder& e) {
    double total = 0.0;
    for (int f = 0; f < n_frames; ++f) {
        const Array frame = gen_video.segment(static_cast<std::int64_t>(f) * e.frame_dim, e.frame_dim);
        const std::int64_t block = e.kind == EmbedderKind::kStrong ? e.d_id : e.frame_dim;
        double raw = 0.0;
        for (std::int64_t i = 0; i < block; ++i) raw += frame(i) * frame(i);
        if (std::sqrt(raw) < kNoFaceNorm) continue;  // frame scores 0
        const std::vector<double> emb = oracle_embed(e, frame);
        double s = 0.0;
        for (const Tensor& p : pool.embeddings) {
            std::vector<double> pv(p.data.data(), p.data.data() + p.size());
            s += oracle_cos(emb, pv);
        }
        total += s / pool.size();
    }
    return total / n_frames;
}

/// One finite-difference case of the per-op gradient suite.
struct OpGradCase {
    std::string name;
    GraphBuilder builder;
    std::vector<std::int64_t> probe_shape;
};

/// Graph builders covering every differentiable op-kind, with constants drawn
/// from `rng`. Probe points are supplied by the caller.
inline std::vector<OpGradCase> op_grad_cases(Rng& rng) {
    std::vector<OpGradCase> cases;
    auto c = [&rng](std::vector<std::int64_t> shape) { return bounded_tensor(rng, std::move(shape)); };

    {
        Tensor w = c({3, 4});
        cases.push_back({"matmul-matvec",
                         [w](Tape& t, Var x) { return sum(matmul(t.constant(w), x)); },
                         {4}});
    }
    {
        Tensor b = c({4, 2});
        Tensor r = c({6});
        cases.push_back({"matmul-matmat",
                         [b, r](Tape& t, Var x) {
                             Var m = matmul(reshape(x, {3, 4}), t.constant(b));
                             return dot(reshape(m, {6}), t.constant(r));
                         },
                         {12}});
    }
    {
        Tensor o = c({5});
        Tensor r = c({5});
        cases.push_back({"add",
                         [o, r](Tape& t, Var x) { return dot(add(x, t.constant(o)), t.constant(r)); },
                         {5}});
        cases.push_back({"subtract",
                         [o, r](Tape& t, Var x) { return dot(sub(t.constant(o), x), t.constant(r)); },
                         {5}});
        cases.push_back({"elementwise-multiply",
                         [o, r](Tape& t, Var x) { return dot(mul(x, t.constant(o)), t.constant(r)); },
                         {5}});
        cases.push_back({"add-scalar-broadcast",
                         [o, r](Tape& t, Var x) {
                             Var s = sum(x);  // scalar derived from the probe
                             return dot(add(t.constant(o), s), t.constant(r));
                         },
                         {3}});
        cases.push_back({"mul-scalar-broadcast",
                         [o, r](Tape& t, Var x) {
                             Var s = mean(x);
                             return dot(mul(s, t.constant(o)), t.constant(r));
                         },
                         {3}});
    }
    {
        Tensor r = c({5});
        cases.push_back({"scalar-multiply",
                         [r](Tape& t, Var x) { return dot(scalar_mul(x, -1.7), t.constant(r)); },
                         {5}});
        cases.push_back(
            {"tanh", [r](Tape& t, Var x) { return dot(tanh(x), t.constant(r)); }, {5}});
        cases.push_back({"l2-normalize",
                         [r](Tape& t, Var x) { return dot(l2_normalize(x), t.constant(r)); },
                         {5}});
    }
    cases.push_back({"sum", [](Tape&, Var x) { return sum(mul(x, x)); }, {6}});
    cases.push_back({"mean", [](Tape&, Var x) { return mean(mul(x, x)); }, {6}});
    cases.push_back({"l2-norm", [](Tape&, Var x) { return l2_norm(x); }, {5}});
    {
        Tensor o = c({5});
        cases.push_back({"dot", [o](Tape& t, Var x) { return dot(x, t.constant(o)); }, {5}});
        cases.push_back({"cosine-similarity",
                         [o](Tape& t, Var x) { return cosine_similarity(x, t.constant(o)); },
                         {5}});
        cases.push_back({"squared-error-mean",
                         [o](Tape& t, Var x) { return squared_error_mean(x, t.constant(o)); },
                         {5}});
        cases.push_back({"cosine-both-sides",
                         [](Tape& t, Var x) {
                             return cosine_similarity(slice(x, 0, 5), slice(x, 5, 5));
                         },
                         {10}});
    }
    {
        Tensor head = c({2});
        Tensor tail = c({4});
        Tensor r = c({9});
        cases.push_back({"concatenate",
                         [head, tail, r](Tape& t, Var x) {
                             std::array<Var, 3> parts{t.constant(head), x, t.constant(tail)};
                             return dot(concat(std::span<const Var>(parts)), t.constant(r));
                         },
                         {3}});
    }
    {
        Tensor r = c({3});
        cases.push_back({"slice",
                         [r](Tape& t, Var x) { return dot(slice(x, 2, 3), t.constant(r)); },
                         {8}});
        cases.push_back({"reshape",
                         [r](Tape& t, Var x) {
                             Var m = reshape(x, {3, 2});
                             return dot(slice(m, 0, 3), t.constant(r));
                         },
                         {6}});
    }
    return cases;
}

struct OpGradReport {
    double max_error = 0.0;
    std::string worst_case;
};

/// Runs every case against `repeats` random probe points.
inline OpGradReport run_op_grad_suite(std::uint64_t seed, int repeats, double h = 1e-5) {
    Rng case_rng(derive_seed(seed, "op-grad-consts"));
    auto cases = op_grad_cases(case_rng);
    OpGradReport report;
    for (const auto& oc : cases) {
        for (int rep = 0; rep < repeats; ++rep) {
            Rng point_rng(derive_seed(seed, oc.name, static_cast<std::uint64_t>(rep)));
            const Tensor point = bounded_tensor(point_rng, oc.probe_shape);
            const double err = finite_diff_check(oc.builder, point, h);
            if (err > report.max_error) {
                report.max_error = err;
                report.worst_case = oc.name;
            }
        }
    }
    return report;
}

}  // namespace ipro::testing
