#pragma once

#include "ipro/artifacts.hpp"
#include "ipro/config.hpp"
#include "ipro/evalsuite.hpp"

#include <string>
#include <vector>

namespace ipro {

struct GenDataResult {
    std::string dataset_path;
    std::string manifest_path;
    std::int64_t count = 0;
    double acceptance_rate = 0.0;
};

struct TrainResult {
    std::string checkpoint_path;
    std::string metrics_path;
    std::string timing_path;
    std::vector<MetricsRow> rows;
};

struct EvalResult {
    EvalReport report;
    std::string report_path;
    std::string per_video_path;
};

struct AblateResult {
    std::string table_path;
    std::vector<AblationRow> rows;
};

GenDataResult cmd_gen_data(const RunConfig& cfg);
TrainResult cmd_pretrain(const RunConfig& cfg);
TrainResult cmd_train_ipro(const RunConfig& cfg);
TrainResult cmd_train_sft(const RunConfig& cfg);
EvalResult cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path);
AblateResult cmd_ablate(const MatrixConfig& matrix);
KlCurve cmd_kl_curve(const std::string& metrics_csv_path);

}  // namespace ipro
