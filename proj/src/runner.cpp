#include "ipro/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ipro {

namespace fs = std::filesystem;

namespace {

std::string require_out_dir(const RunConfig& cfg) {
    if (cfg.paths.out_dir.empty()) throw std::invalid_argument("config: paths.out_dir is required");
    fs::create_directories(cfg.paths.out_dir);
    return cfg.paths.out_dir;
}

std::string require_dataset_path(const RunConfig& cfg) {
    if (cfg.paths.dataset.empty()) throw std::invalid_argument("config: paths.dataset is required");
    return cfg.paths.dataset;
}

Dataset load_dataset_checked(const RunConfig& cfg) {
    const std::string path = require_dataset_path(cfg);
    if (!fs::exists(path)) throw std::runtime_error("dataset not found: " + path);
    Dataset ds = read_dataset(path);
    if (ds.cfg.frame_dim() != cfg.world.frame_dim() || ds.cfg.frames != cfg.world.frames)
        throw std::runtime_error("dataset geometry does not match config world");
    return ds;
}

DenoiserParams load_params_checked(const RunConfig& cfg, const std::string& path) {
    if (path.empty()) throw std::invalid_argument("checkpoint path is required");
    Checkpoint ckpt = read_checkpoint(path);
    if (!(ckpt.params.dims == cfg.dims()))
        throw std::runtime_error("checkpoint architecture does not match config (" + path + ")");
    return std::move(ckpt.params);
}

TrainResult finish_training(const RunConfig& cfg, const std::string& out,
                            std::vector<MetricsRow> rows, const DenoiserParams& params,
                            std::int64_t step_count) {
    TrainResult res;
    res.rows = std::move(rows);
    res.metrics_path = out + "/metrics.csv";
    res.timing_path = out + "/timing.csv";
    res.checkpoint_path = out + "/checkpoint_final.ckpt";
    write_metrics_csv(res.rows, res.metrics_path);
    write_timing_csv(res.rows, res.timing_path);
    write_checkpoint({params, step_count, cfg.seed, "theta"}, res.checkpoint_path);
    save_run_config(cfg, out + "/config.json");
    return res;
}

StepHook periodic_checkpoint_hook(const RunConfig& cfg, const std::string& out) {
    const int every = cfg.train.checkpoint_every;
    if (every <= 0) return {};
    return [out, every, seed = cfg.seed](const MetricsRow& row, const DenoiserParams& params) {
        if (row.step % every == 0)
            write_checkpoint({params, row.step, seed, "theta"},
                             out + "/checkpoint_step_" + std::to_string(row.step) + ".ckpt");
    };
}

}  // namespace

GenDataResult cmd_gen_data(const RunConfig& cfg) {
    cfg.validate();
    const std::string path = require_dataset_path(cfg);
    if (!fs::path(path).parent_path().empty()) fs::create_directories(fs::path(path).parent_path());
    Dataset ds = build_dataset(cfg.data.n_videos, cfg.world, cfg.seed);
    write_dataset(ds, path);
    GenDataResult res;
    res.dataset_path = path;
    res.manifest_path = path + ".manifest.json";
    res.count = static_cast<std::int64_t>(ds.videos.size());
    res.acceptance_rate = ds.acceptance_rate();
    write_dataset_manifest(ds, res.manifest_path);
    return res;
}

TrainResult cmd_pretrain(const RunConfig& cfg) {
    cfg.validate();
    const std::string out = require_out_dir(cfg);
    Dataset ds = load_dataset_checked(cfg);
    Rng init_rng(derive_seed(cfg.seed, "init"));
    DenoiserParams theta = DenoiserParams::init(cfg.dims(), init_rng);
    TrainContext ctx = cfg.context();
    std::vector<MetricsRow> rows = train_pretrain(theta, ds, cfg.pretrain, ctx);
    return finish_training(cfg, out, std::move(rows), theta, cfg.pretrain.total_steps);
}

TrainResult cmd_train_ipro(const RunConfig& cfg) {
    cfg.validate();
    const std::string out = require_out_dir(cfg);
    Dataset ds = load_dataset_checked(cfg);
    DenoiserParams theta = load_params_checked(cfg, cfg.paths.pretrain_checkpoint);
    const DenoiserParams theta_ref = theta;  // frozen reference role
    TrainContext ctx = cfg.context();
    StepHook hook = periodic_checkpoint_hook(cfg, out);
    std::vector<MetricsRow> rows = train_ipro(theta, theta_ref, ds, ctx, hook);
    return finish_training(cfg, out, std::move(rows), theta, cfg.train.total_steps);
}

TrainResult cmd_train_sft(const RunConfig& cfg) {
    cfg.validate();
    const std::string out = require_out_dir(cfg);
    Dataset ds = load_dataset_checked(cfg);
    DenoiserParams theta = load_params_checked(cfg, cfg.paths.pretrain_checkpoint);
    TrainContext ctx = cfg.context();
    StepHook hook = periodic_checkpoint_hook(cfg, out);
    std::vector<MetricsRow> rows = train_sft(theta, ds, ctx, hook);
    return finish_training(cfg, out, std::move(rows), theta, cfg.train.total_steps);
}

EvalResult cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
    cfg.validate();
    const std::string out = require_out_dir(cfg);
    Dataset ds = load_dataset_checked(cfg);
    DenoiserParams params = load_params_checked(cfg, checkpoint_path);
    EvalResult res;
    res.report = evaluate(params, ds, ds.eval_indices, cfg.sampler, cfg.seed, 0.3,
                          config_fingerprint(cfg));
    res.report_path = out + "/eval_report.json";
    res.per_video_path = out + "/eval_videos.csv";
    write_eval_report(res.report, res.report_path);
    write_eval_videos_csv(res.report, res.per_video_path);
    return res;
}

AblateResult cmd_ablate(const MatrixConfig& matrix) {
    const std::string root = require_out_dir(matrix.base);
    AblateResult res;
    res.table_path = root + "/ablation.csv";

    for (std::uint64_t seed : matrix.seeds) {
        const std::string seed_dir = root + "/s" + std::to_string(seed);
        fs::create_directories(seed_dir);

        // Dataset and pretrain checkpoint are shared by every variant of this
        // seed, so ablation cells differ only in the intended dimension.
        RunConfig seed_cfg = matrix.base;
        seed_cfg.seed = seed;
        seed_cfg.paths.dataset = seed_dir + "/dataset.bin";
        seed_cfg.paths.out_dir = seed_dir + "/pretrain";
        std::string pretrain_ckpt;
        std::string seed_failure;
        try {
            if (!fs::exists(seed_cfg.paths.dataset)) cmd_gen_data(seed_cfg);
            pretrain_ckpt = seed_cfg.paths.out_dir + "/checkpoint_final.ckpt";
            if (!fs::exists(pretrain_ckpt)) pretrain_ckpt = cmd_pretrain(seed_cfg).checkpoint_path;
        } catch (const std::exception& e) {
            seed_failure = e.what();
        }

        for (const std::string& variant : matrix.variants) {
            AblationRow row;
            row.variant = variant;
            row.seed = seed;
            if (!seed_failure.empty()) {
                row.status = "failed";
                res.rows.push_back(row);
                continue;
            }
            try {
                RunConfig cfg = apply_variant(matrix.base, variant);
                cfg.seed = seed;
                cfg.run_id = matrix.base.run_id + "-" + variant + "-s" + std::to_string(seed);
                cfg.paths.dataset = seed_cfg.paths.dataset;
                cfg.paths.pretrain_checkpoint = pretrain_ckpt;
                cfg.paths.out_dir = seed_dir + "/" + variant;

                std::string eval_ckpt;
                if (variant == "baseline") {
                    eval_ckpt = pretrain_ckpt;
                    fs::create_directories(cfg.paths.out_dir);
                } else if (variant == "sft") {
                    eval_ckpt = cmd_train_sft(cfg).checkpoint_path;
                } else {
                    eval_ckpt = cmd_train_ipro(cfg).checkpoint_path;
                }
                EvalResult er = cmd_eval(cfg, eval_ckpt);
                row.face_sim = er.report.face_sim;
                row.hacking_rate = er.report.hacking_rate;
                row.dynamic_degree = er.report.dynamic_degree;
            } catch (const std::exception& e) {
                row.status = "failed";
                // Keep the reason next to the cell so the table stays parseable.
                const std::string cell_dir = seed_dir + "/" + variant;
                fs::create_directories(cell_dir);
                std::ofstream err(cell_dir + "/error.txt");
                err << e.what() << "\n";
            }
            res.rows.push_back(row);
        }
    }
    write_ablation_table(res.rows, res.table_path);
    return res;
}

KlCurve cmd_kl_curve(const std::string& metrics_csv_path) {
    std::vector<MetricsRow> rows = read_metrics_csv(metrics_csv_path);
    return kl_curve(rows);
}

}  // namespace ipro
