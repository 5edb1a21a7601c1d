#include "ipro/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <stdexcept>

namespace ipro {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object())
        throw std::invalid_argument("config: expected an object at '" + where + "'");
    for (const auto& item : j.items()) {
        if (!allowed.contains(item.key()))
            throw std::invalid_argument("config: unknown key '" + where + item.key() + "'");
    }
}

template <typename T>
void read(const json& j, const std::string& where, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: bad value for '" + where + key + "': " + e.what());
    }
}

WorldConfig parse_world(const json& j) {
    check_keys(j, "world.",
               {"d_id", "d_pose", "d_expr", "d_bg", "frames", "sigma_expr", "identity_energy_cap",
                "occlusion_prob", "pose_amplitude"});
    WorldConfig w;
    read(j, "world.", "d_id", w.d_id);
    read(j, "world.", "d_pose", w.d_pose);
    read(j, "world.", "d_expr", w.d_expr);
    read(j, "world.", "d_bg", w.d_bg);
    read(j, "world.", "frames", w.frames);
    read(j, "world.", "sigma_expr", w.sigma_expr);
    read(j, "world.", "identity_energy_cap", w.identity_energy_cap);
    read(j, "world.", "occlusion_prob", w.occlusion_prob);
    read(j, "world.", "pose_amplitude", w.pose_amplitude);
    return w;
}

json world_to_json(const WorldConfig& w) {
    return json{{"d_id", w.d_id},
                {"d_pose", w.d_pose},
                {"d_expr", w.d_expr},
                {"d_bg", w.d_bg},
                {"frames", w.frames},
                {"sigma_expr", w.sigma_expr},
                {"identity_energy_cap", w.identity_energy_cap},
                {"occlusion_prob", w.occlusion_prob},
                {"pose_amplitude", w.pose_amplitude}};
}

}  // namespace

ModelDims RunConfig::dims() const {
    ModelDims d;
    d.frames = world.frames;
    d.frame_dim = world.frame_dim();
    d.hidden = model.hidden;
    d.t_embed = model.t_embed;
    return d;
}

TrainContext RunConfig::context() const {
    TrainContext ctx;
    ctx.world = world;
    ctx.sampler = sampler;
    ctx.dims = dims();
    ctx.embedder = embedder;
    ctx.reward = reward;
    ctx.cfg = train;
    ctx.seed = seed;
    return ctx;
}

void RunConfig::validate() const {
    world.validate();
    sampler.validate();
    train.validate(sampler.steps);
    if (model.hidden < 1) throw std::invalid_argument("config: model.hidden must be >= 1");
    if (model.t_embed < 2 || model.t_embed % 2 != 0)
        throw std::invalid_argument("config: model.t_embed must be even and >= 2");
    if (data.n_videos < 2) throw std::invalid_argument("config: data.n_videos must be >= 2");
    if (pretrain.batch_size < 1 || pretrain.total_steps < 0 || pretrain.learning_rate <= 0.0)
        throw std::invalid_argument("config: invalid pretrain section");
}

RunConfig parse_run_config(const json& j) {
    check_keys(j, "", {"run_id", "seed", "world", "sampler", "model", "train", "pretrain",
                       "embedder", "reward", "data", "paths"});
    RunConfig cfg;
    read(j, "", "run_id", cfg.run_id);
    read(j, "", "seed", cfg.seed);
    if (j.contains("world")) cfg.world = parse_world(j.at("world"));
    if (j.contains("sampler")) {
        const json& s = j.at("sampler");
        check_keys(s, "sampler.", {"steps"});
        read(s, "sampler.", "steps", cfg.sampler.steps);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model.", {"hidden", "t_embed"});
        read(m, "model.", "hidden", cfg.model.hidden);
        read(m, "model.", "t_embed", cfg.model.t_embed);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, "train.",
                   {"learning_rate", "k_truncate", "lambda_face", "lambda_kl", "batch_size",
                    "total_steps", "placement", "kl_weights", "kl_fresh_trajectory",
                    "checkpoint_every"});
        read(t, "train.", "learning_rate", cfg.train.learning_rate);
        read(t, "train.", "k_truncate", cfg.train.k_truncate);
        read(t, "train.", "lambda_face", cfg.train.lambda_face);
        read(t, "train.", "lambda_kl", cfg.train.lambda_kl);
        read(t, "train.", "batch_size", cfg.train.batch_size);
        read(t, "train.", "total_steps", cfg.train.total_steps);
        read(t, "train.", "kl_weights", cfg.train.kl_weights);
        read(t, "train.", "kl_fresh_trajectory", cfg.train.kl_fresh_trajectory);
        read(t, "train.", "checkpoint_every", cfg.train.checkpoint_every);
        if (t.contains("placement")) {
            const std::string p = t.at("placement").get<std::string>();
            if (p == "last_k")
                cfg.train.placement = TapePlacement::kLastK;
            else if (p == "first_k")
                cfg.train.placement = TapePlacement::kFirstK;
            else
                throw std::invalid_argument("config: train.placement must be 'last_k' or 'first_k'");
        }
    }
    if (j.contains("pretrain")) {
        const json& p = j.at("pretrain");
        check_keys(p, "pretrain.", {"learning_rate", "batch_size", "total_steps"});
        read(p, "pretrain.", "learning_rate", cfg.pretrain.learning_rate);
        read(p, "pretrain.", "batch_size", cfg.pretrain.batch_size);
        read(p, "pretrain.", "total_steps", cfg.pretrain.total_steps);
    }
    if (j.contains("embedder")) cfg.embedder = embedder_kind_from(j.at("embedder").get<std::string>());
    if (j.contains("reward")) cfg.reward = reward_kind_from(j.at("reward").get<std::string>());
    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, "data.", {"n_videos"});
        read(d, "data.", "n_videos", cfg.data.n_videos);
    }
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        check_keys(p, "paths.", {"dataset", "out_dir", "pretrain_checkpoint"});
        read(p, "paths.", "dataset", cfg.paths.dataset);
        read(p, "paths.", "out_dir", cfg.paths.out_dir);
        read(p, "paths.", "pretrain_checkpoint", cfg.paths.pretrain_checkpoint);
    }
    cfg.validate();
    return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
    json t{{"learning_rate", cfg.train.learning_rate},
           {"k_truncate", cfg.train.k_truncate},
           {"lambda_face", cfg.train.lambda_face},
           {"lambda_kl", cfg.train.lambda_kl},
           {"batch_size", cfg.train.batch_size},
           {"total_steps", cfg.train.total_steps},
           {"placement", cfg.train.placement == TapePlacement::kLastK ? "last_k" : "first_k"},
           {"kl_fresh_trajectory", cfg.train.kl_fresh_trajectory},
           {"checkpoint_every", cfg.train.checkpoint_every}};
    if (!cfg.train.kl_weights.empty()) t["kl_weights"] = cfg.train.kl_weights;
    return json{{"run_id", cfg.run_id},
                {"seed", cfg.seed},
                {"world", world_to_json(cfg.world)},
                {"sampler", json{{"steps", cfg.sampler.steps}}},
                {"model", json{{"hidden", cfg.model.hidden}, {"t_embed", cfg.model.t_embed}}},
                {"train", std::move(t)},
                {"pretrain", json{{"learning_rate", cfg.pretrain.learning_rate},
                                  {"batch_size", cfg.pretrain.batch_size},
                                  {"total_steps", cfg.pretrain.total_steps}}},
                {"embedder", embedder_kind_name(cfg.embedder)},
                {"reward", reward_kind_name(cfg.reward)},
                {"data", json{{"n_videos", cfg.data.n_videos}}},
                {"paths", json{{"dataset", cfg.paths.dataset},
                               {"out_dir", cfg.paths.out_dir},
                               {"pretrain_checkpoint", cfg.paths.pretrain_checkpoint}}}};
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: failed to parse " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file: " + path);
    out << run_config_to_json(cfg).dump(2) << "\n";
}

std::uint64_t config_fingerprint(const RunConfig& cfg) {
    return detail::fnv1a(run_config_to_json(cfg).dump());
}

MatrixConfig parse_matrix_config(const json& j) {
    check_keys(j, "", {"base", "seeds", "variants"});
    if (!j.contains("base") || !j.contains("seeds") || !j.contains("variants"))
        throw std::invalid_argument("matrix config: 'base', 'seeds' and 'variants' are required");
    MatrixConfig m;
    m.base = parse_run_config(j.at("base"));
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.variants = j.at("variants").get<std::vector<std::string>>();
    if (m.seeds.empty() || m.variants.empty())
        throw std::invalid_argument("matrix config: seeds and variants must be non-empty");
    for (const std::string& v : m.variants) apply_variant(m.base, v);  // validates names
    return m;
}

MatrixConfig load_matrix_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open matrix config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("matrix config: failed to parse " + path + ": " + e.what());
    }
    return parse_matrix_config(j);
}

RunConfig apply_variant(const RunConfig& base, const std::string& variant) {
    RunConfig cfg = base;
    if (variant == "ipro" || variant == "baseline" || variant == "sft") {
        // base settings; baseline evaluates the pretrain checkpoint, sft trains teacher-forced
    } else if (variant == "weak") {
        cfg.embedder = EmbedderKind::kWeak;
    } else if (variant == "no_kl") {
        cfg.train.lambda_kl = 0.0;
    } else if (variant == "single_ref") {
        cfg.reward = RewardKind::kSingleRef;
    } else if (variant == "first_k") {
        cfg.train.placement = TapePlacement::kFirstK;
    } else {
        throw std::invalid_argument("unknown ablation variant: " + variant);
    }
    return cfg;
}

}  // namespace ipro
