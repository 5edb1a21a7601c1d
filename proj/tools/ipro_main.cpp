#include "ipro/runner.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>
#include <string>

namespace {

using nlohmann::json;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string checkpoint;
    std::int64_t seed_override = -1;
    bool has_seed = false;
};

ipro::RunConfig load_config(const CommonArgs& args) {
    if (args.config_path.empty()) throw std::invalid_argument("--config is required");
    ipro::RunConfig cfg = ipro::load_run_config(args.config_path);
    if (args.has_seed) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
    if (!args.out_dir.empty()) cfg.paths.out_dir = args.out_dir;
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_checkpoint = false) {
    cmd->add_option("--config", args.config_path, "Path to the run config JSON");
    cmd->add_option("--seed", args.seed_override, "Override the config seed")
        ->each([&args](const std::string&) { args.has_seed = true; });
    cmd->add_option("--out", args.out_dir, "Override the output directory");
    if (needs_checkpoint)
        cmd->add_option("--checkpoint", args.checkpoint, "Checkpoint file to evaluate");
}

int fail(const std::exception& e) {
    json err{{"error", e.what()}};
    std::cerr << err.dump() << std::endl;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Identity-preserving reward-guided optimization lab"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string metrics_path;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
    add_common(gen, args);
    CLI::App* pre = app.add_subcommand("pretrain", "Pretrain the velocity model");
    add_common(pre, args);
    CLI::App* ipro_cmd = app.add_subcommand("train-ipro", "Reward-guided fine-tuning");
    add_common(ipro_cmd, args);
    CLI::App* sft = app.add_subcommand("train-sft", "Supervised fine-tuning baseline");
    add_common(sft, args);
    CLI::App* evalc = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out split");
    add_common(evalc, args, true);
    CLI::App* ablate = app.add_subcommand("ablate", "Run the ablation matrix");
    add_common(ablate, args);
    CLI::App* klc = app.add_subcommand("kl-curve", "Summarize the KL series of a metrics CSV");
    add_common(klc, args);
    klc->add_option("--metrics", metrics_path, "Metrics CSV (defaults to <out>/metrics.csv)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto res = ipro::cmd_gen_data(load_config(args));
            json out{{"dataset", res.dataset_path},
                     {"manifest", res.manifest_path},
                     {"count", res.count},
                     {"acceptance_rate", res.acceptance_rate}};
            std::cout << out.dump(2) << std::endl;
        } else if (pre->parsed() || ipro_cmd->parsed() || sft->parsed()) {
            ipro::RunConfig cfg = load_config(args);
            ipro::TrainResult res = pre->parsed()       ? ipro::cmd_pretrain(cfg)
                                    : ipro_cmd->parsed() ? ipro::cmd_train_ipro(cfg)
                                                         : ipro::cmd_train_sft(cfg);
            json out{{"checkpoint", res.checkpoint_path},
                     {"metrics", res.metrics_path},
                     {"steps", res.rows.size()}};
            if (!res.rows.empty()) {
                out["final_loss"] = res.rows.back().loss;
                out["final_mean_r_face"] = res.rows.back().mean_r_face;
                out["final_mean_kl"] = res.rows.back().mean_kl;
            }
            std::cout << out.dump(2) << std::endl;
        } else if (evalc->parsed()) {
            ipro::RunConfig cfg = load_config(args);
            if (args.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
            ipro::EvalResult res = ipro::cmd_eval(cfg, args.checkpoint);
            json out{{"report", res.report_path},
                     {"per_video", res.per_video_path},
                     {"face_sim", res.report.face_sim},
                     {"hacking_rate", res.report.hacking_rate},
                     {"dynamic_degree", res.report.dynamic_degree}};
            std::cout << out.dump(2) << std::endl;
        } else if (ablate->parsed()) {
            if (args.config_path.empty()) throw std::invalid_argument("--config is required");
            ipro::MatrixConfig matrix = ipro::load_matrix_config(args.config_path);
            if (!args.out_dir.empty()) matrix.base.paths.out_dir = args.out_dir;
            ipro::AblateResult res = ipro::cmd_ablate(matrix);
            json out{{"table", res.table_path}, {"cells", res.rows.size()}};
            std::cout << out.dump(2) << std::endl;
        } else if (klc->parsed()) {
            std::string path = metrics_path;
            if (path.empty() && !args.out_dir.empty()) path = args.out_dir + "/metrics.csv";
            if (path.empty()) throw std::invalid_argument("kl-curve: pass --metrics or --out");
            ipro::KlCurve curve = ipro::cmd_kl_curve(path);
            json out{{"final", curve.final_value},
                     {"max", curve.max_value},
                     {"last_quartile_slope", curve.last_quartile_slope},
                     {"points", curve.steps.size()}};
            std::cout << out.dump(2) << std::endl;
        }
    } catch (const std::exception& e) {
        return fail(e);
    }
    return 0;
}
