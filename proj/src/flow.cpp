#include "ipro/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace ipro {

DenoiserParams DenoiserParams::init(const ModelDims& dims, Rng& rng) {
    DenoiserParams p;
    p.dims = dims;
    auto layer = [&rng](int rows, int cols) {
        Array w = rng.normal_array(static_cast<std::int64_t>(rows) * cols) / std::sqrt(static_cast<double>(cols));
        return Tensor({rows, cols}, std::move(w));
    };
    p.w1 = layer(dims.hidden, dims.input_dim());
    p.b1 = Tensor::zeros({dims.hidden});
    p.w2 = layer(dims.hidden, dims.hidden);
    p.b2 = Tensor::zeros({dims.hidden});
    p.w3 = layer(dims.output_dim(), dims.hidden);
    p.b3 = Tensor::zeros({dims.output_dim()});
    return p;
}

DenoiserParams DenoiserParams::zeros(const ModelDims& dims) {
    DenoiserParams p;
    p.dims = dims;
    p.w1 = Tensor::zeros({dims.hidden, dims.input_dim()});
    p.b1 = Tensor::zeros({dims.hidden});
    p.w2 = Tensor::zeros({dims.hidden, dims.hidden});
    p.b2 = Tensor::zeros({dims.hidden});
    p.w3 = Tensor::zeros({dims.output_dim(), dims.hidden});
    p.b3 = Tensor::zeros({dims.output_dim()});
    return p;
}

const char* DenoiserParams::tensor_name(int i) {
    static const char* names[6] = {"w1", "b1", "w2", "b2", "w3", "b3"};
    return names[i];
}

std::int64_t DenoiserParams::parameter_count() const {
    std::int64_t n = 0;
    for (const Tensor* t : tensors()) n += t->size();
    return n;
}

void SamplerConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
}

Tensor time_embedding(double t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even and >= 2");
    Array e(dim);
    // Geometric frequencies 1, 2, 4, ... rad: no embedding coordinate hits an
    // exact zero on the dyadic sampler grid, so every input column of the
    // first layer stays coupled.
    double freq = 1.0;
    for (int p = 0; p < dim / 2; ++p) {
        e(2 * p) = std::sin(freq * t);
        e(2 * p + 1) = std::cos(freq * t);
        freq *= 2.0;
    }
    return Tensor({dim}, std::move(e));
}

Tensor forward_corrupt(const Tensor& x0, const Tensor& eps, double t) {
    if (!x0.same_shape(eps))
        throw std::invalid_argument("forward_corrupt: shape mismatch " + shape_str(x0.shape) + " vs " +
                                    shape_str(eps.shape));
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("forward_corrupt: t must lie in [0,1], got " + std::to_string(t));
    return Tensor(x0.shape, (1.0 - t) * x0.data + t * eps.data);
}

Tensor predict_x0(const Tensor& x_t, const Tensor& v, double t) {
    if (t == 0.0) return x_t;
    if (!(t > 0.0 && t <= 1.0))
        throw std::invalid_argument("predict_x0: t must lie in (0,1], got " + std::to_string(t));
    if (!x_t.same_shape(v))
        throw std::invalid_argument("predict_x0: shape mismatch " + shape_str(x_t.shape) + " vs " +
                                    shape_str(v.shape));
    return Tensor(x_t.shape, x_t.data - t * v.data);
}

Var predict_x0(Var x_t, Var v, double t) {
    if (t == 0.0) return x_t;
    if (!(t > 0.0 && t <= 1.0))
        throw std::invalid_argument("predict_x0: t must lie in (0,1], got " + std::to_string(t));
    return sub(x_t, scalar_mul(v, t));
}

Tensor velocity_value(const DenoiserParams& p, const Array& x_t, double t, const Array& cond) {
    const ModelDims& d = p.dims;
    if (x_t.size() != d.state_dim() || cond.size() != d.frame_dim)
        throw std::invalid_argument("velocity_value: input sizes do not match model dims");
    Array in(d.input_dim());
    in.segment(0, d.state_dim()) = x_t;
    in.segment(d.state_dim(), d.t_embed) = time_embedding(t, d.t_embed).data;
    in.segment(d.state_dim() + d.t_embed, d.frame_dim) = cond;

    // Mirrors the taped graph stage by stage so both paths agree bitwise.
    auto affine = [](const Tensor& w, const Array& x, const Tensor& b) {
        Array y(w.shape[0]);
        Eigen::Map<Eigen::VectorXd>(y.data(), y.size()) =
            mat_view(w) * Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
        Array s = y + b.data;
        return s;
    };
    Array h1 = affine(p.w1, in, p.b1).tanh();
    Array h2 = affine(p.w2, h1, p.b2).tanh();
    Array out = affine(p.w3, h2, p.b3);
    return Tensor({d.output_dim()}, std::move(out));
}

ParamVars insert_params(Tape& tape, const DenoiserParams& p) {
    ParamVars pv;
    pv.w1 = tape.leaf(p.w1);
    pv.b1 = tape.leaf(p.b1);
    pv.w2 = tape.leaf(p.w2);
    pv.b2 = tape.leaf(p.b2);
    pv.w3 = tape.leaf(p.w3);
    pv.b3 = tape.leaf(p.b3);
    return pv;
}

ParamVars stop_gradient(const ParamVars& pv) {
    ParamVars b;
    b.w1 = stop_gradient(pv.w1);
    b.b1 = stop_gradient(pv.b1);
    b.w2 = stop_gradient(pv.w2);
    b.b2 = stop_gradient(pv.b2);
    b.w3 = stop_gradient(pv.w3);
    b.b3 = stop_gradient(pv.b3);
    return b;
}

Var velocity_pred(const ModelDims& dims, const ParamVars& pv, Var x_t, double t, Var cond) {
    Tape& tape = *x_t.tape;
    Var temb = tape.constant(time_embedding(t, dims.t_embed));
    std::array<Var, 3> pieces{x_t, temb, cond};
    Var in = concat(std::span<const Var>(pieces));
    Var h1 = tanh(add(matmul(pv.w1, in), pv.b1));
    Var h2 = tanh(add(matmul(pv.w2, h1), pv.b2));
    return add(matmul(pv.w3, h2), pv.b3);
}

int Trajectory::taped_steps() const {
    int n = 0;
    for (bool live : theta_live)
        if (live) ++n;
    return n;
}

Trajectory sample(Tape& tape, const DenoiserParams& p, const ParamVars& pv, const Tensor& x_T,
                  const Tensor& cond, const SamplerConfig& sc, int tape_last_k,
                  TapePlacement placement, bool from_pure_noise) {
    sc.validate();
    const int T = sc.steps;
    if (tape_last_k < 0 || tape_last_k > T)
        throw std::invalid_argument("sample: tape_last_k must lie in [0, steps]");
    if (x_T.size() != p.dims.state_dim())
        throw std::invalid_argument("sample: x_T size does not match model state dim");
    const double dt = sc.dt();

    Trajectory traj;
    traj.from_pure_noise = from_pure_noise;
    traj.states.reserve(T + 1);
    traj.state_vars.assign(T + 1, Var{});
    traj.velocity_vars.assign(T, Var{});
    traj.states.push_back(x_T);

    if (placement == TapePlacement::kLastK) {
        const int plain_steps = T - tape_last_k;
        Tensor x = x_T;
        for (int j = 0; j < plain_steps; ++j) {
            const double t = sc.time_at(T - j);
            Tensor v = velocity_value(p, x.data, t, cond.data);
            Array step = dt * v.data;
            x = Tensor(x.shape, x.data - step);
            traj.velocities.push_back(std::move(v));
            traj.times.push_back(t);
            traj.theta_live.push_back(false);
            traj.states.push_back(x);
        }
        Var xv = tape.constant(x);
        traj.state_vars[plain_steps] = xv;
        Var condv = tape.constant(cond);
        for (int j = plain_steps; j < T; ++j) {
            const double t = sc.time_at(T - j);
            Var vv = velocity_pred(p.dims, pv, xv, t, condv);
            xv = sub(xv, scalar_mul(vv, dt));
            traj.velocity_vars[j] = vv;
            traj.velocities.push_back(tape.value(vv));
            traj.times.push_back(t);
            traj.theta_live.push_back(true);
            traj.state_vars[j + 1] = xv;
            traj.states.push_back(tape.value(xv));
        }
        traj.final_state = xv;
    } else {
        Var xv = tape.constant(x_T);
        traj.state_vars[0] = xv;
        Var condv = tape.constant(cond);
        ParamVars blocked{};
        bool have_blocked = false;
        for (int j = 0; j < T; ++j) {
            const double t = sc.time_at(T - j);
            const bool live = j < tape_last_k;
            if (!live && !have_blocked) {
                blocked = stop_gradient(pv);
                have_blocked = true;
            }
            Var vv = velocity_pred(p.dims, live ? pv : blocked, xv, t, condv);
            xv = sub(xv, scalar_mul(vv, dt));
            traj.velocity_vars[j] = vv;
            traj.velocities.push_back(tape.value(vv));
            traj.times.push_back(t);
            traj.theta_live.push_back(live);
            traj.state_vars[j + 1] = xv;
            traj.states.push_back(tape.value(xv));
        }
        traj.final_state = xv;
    }
    return traj;
}

Trajectory sample_tail(Tape& tape, const ParamVars& pv, const ModelDims& dims,
                       const Tensor& cutoff_state, const Tensor& cond, const SamplerConfig& sc,
                       int k) {
    sc.validate();
    const int T = sc.steps;
    if (k < 1 || k > T) throw std::invalid_argument("sample_tail: k must lie in [1, steps]");
    const double dt = sc.dt();

    Trajectory traj;
    traj.states.push_back(cutoff_state);
    traj.state_vars.assign(k + 1, Var{});
    traj.velocity_vars.assign(k, Var{});
    Var xv = tape.constant(cutoff_state);
    traj.state_vars[0] = xv;
    Var condv = tape.constant(cond);
    for (int j = 0; j < k; ++j) {
        const double t = sc.time_at(k - j);
        Var vv = velocity_pred(dims, pv, xv, t, condv);
        xv = sub(xv, scalar_mul(vv, dt));
        traj.velocity_vars[j] = vv;
        traj.velocities.push_back(tape.value(vv));
        traj.times.push_back(t);
        traj.theta_live.push_back(true);
        traj.state_vars[j + 1] = xv;
        traj.states.push_back(tape.value(xv));
    }
    traj.final_state = xv;
    return traj;
}

PlainTrajectory sample_value(const DenoiserParams& p, const Tensor& x_T, const Tensor& cond,
                             const SamplerConfig& sc) {
    sc.validate();
    const int T = sc.steps;
    const double dt = sc.dt();
    PlainTrajectory traj;
    traj.states.push_back(x_T);
    Tensor x = x_T;
    for (int j = 0; j < T; ++j) {
        const double t = sc.time_at(T - j);
        Tensor v = velocity_value(p, x.data, t, cond.data);
        Array step = dt * v.data;
        x = Tensor(x.shape, x.data - step);
        traj.velocities.push_back(std::move(v));
        traj.times.push_back(t);
        traj.states.push_back(x);
    }
    return traj;
}

Var pretrain_loss(Tape& tape, const ModelDims& dims, const ParamVars& pv, const Tensor& x0,
                  const Tensor& cond, Rng& rng) {
    const double t = rng.uniform();
    Tensor eps = rng.normal_tensor({x0.size()});
    return pretrain_loss_at(tape, dims, pv, x0, cond, t, eps);
}

Var pretrain_loss_at(Tape& tape, const ModelDims& dims, const ParamVars& pv, const Tensor& x0,
                     const Tensor& cond, double t, const Tensor& eps) {
    Tensor x0_flat({x0.size()}, x0.data);
    Tensor x_t = forward_corrupt(x0_flat, eps, t);
    Tensor target({x0.size()}, eps.data - x0.data);
    Var v = velocity_pred(dims, pv, tape.constant(std::move(x_t)), t,
                          tape.constant(Tensor({cond.size()}, cond.data)));
    return squared_error_mean(v, tape.constant(std::move(target)));
}

}  // namespace ipro
