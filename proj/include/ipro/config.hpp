#pragma once

#include "ipro/trainer.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ipro {

struct ModelConfig {
    int hidden = 256;
    int t_embed = 8;
};

struct DataConfig {
    int n_videos = 128;
};

struct PathsConfig {
    std::string dataset;
    std::string out_dir;
    std::string pretrain_checkpoint;
};

/// Full experiment configuration; serialized verbatim into every run
/// directory so any artifact can be regenerated from config + seed.
struct RunConfig {
    std::string run_id = "run";
    std::uint64_t seed = 0;
    WorldConfig world;
    SamplerConfig sampler;
    ModelConfig model;
    TrainConfig train;
    PretrainConfig pretrain;
    EmbedderKind embedder = EmbedderKind::kStrong;
    RewardKind reward = RewardKind::kFsm;
    DataConfig data;
    PathsConfig paths;

    ModelDims dims() const;
    TrainContext context() const;
    void validate() const;
};

/// Strict parsing: unknown or misspelled keys are rejected with the offending
/// key named.
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

/// FNV-1a hash of the canonical serialized form.
std::uint64_t config_fingerprint(const RunConfig& cfg);

/// Ablation grid: a base config, a seed list, and variant names drawn from
/// {baseline, ipro, sft, weak, no_kl, single_ref, first_k}.
struct MatrixConfig {
    RunConfig base;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> variants;
};

MatrixConfig parse_matrix_config(const nlohmann::json& j);
MatrixConfig load_matrix_config(const std::string& path);

/// Applies one ablation variant to a copy of the base config.
RunConfig apply_variant(const RunConfig& base, const std::string& variant);

}  // namespace ipro
