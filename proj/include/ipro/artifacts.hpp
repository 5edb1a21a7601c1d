#pragma once

#include "ipro/config.hpp"
#include "ipro/evalsuite.hpp"
#include "ipro/flow.hpp"
#include "ipro/trainer.hpp"
#include "ipro/world.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ipro {

// Binary container layout shared by the dataset and checkpoint files:
//   8-byte ASCII magic | u64 little-endian header length | JSON header |
//   payload of little-endian 64-bit floats.

/// Dataset payload: frames only, video-major, frame-major, coordinate-minor.
/// Identities, occlusion flags, and provenance live in the JSON header.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

/// Manifest with counts, acceptance rate, and split indices (JSON).
void write_dataset_manifest(const Dataset& ds, const std::string& path);

struct Checkpoint {
    DenoiserParams params;
    std::int64_t step_count = 0;
    std::uint64_t seed = 0;
    std::string role = "theta";  // theta | theta_ref
};

/// Checkpoint payload: w1, b1, w2, b2, w3, b3, row-major.
void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

/// Metrics CSV (fixed columns: step,loss,mean_r_face,mean_kl,grad_norm).
/// Wall time goes to a separate timing CSV so metrics stay bit-reproducible.
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);
void write_timing_csv(const std::vector<MetricsRow>& rows, const std::string& path);

void write_eval_report(const EvalReport& report, const std::string& path);
void write_eval_videos_csv(const EvalReport& report, const std::string& path);

struct AblationRow {
    std::string variant;
    std::uint64_t seed = 0;
    std::string status = "ok";  // ok | failed: <reason>
    double face_sim = 0.0;
    double hacking_rate = 0.0;
    double dynamic_degree = 0.0;
};

void write_ablation_table(const std::vector<AblationRow>& rows, const std::string& path);

/// Round-trip float formatting used by every CSV writer.
std::string format_double(double v);

}  // namespace ipro
