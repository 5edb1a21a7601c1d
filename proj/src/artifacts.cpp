#include "ipro/artifacts.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ipro {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace {

constexpr char kDatasetMagic[9] = "IPRODSET";
constexpr char kCheckpointMagic[9] = "IPROCKPT";

void write_container(const std::string& path, const char* magic, const json& header,
                     const std::vector<const Tensor*>& payload) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(magic, 8);
    const std::string h = header.dump();
    const std::uint64_t len = h.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const Tensor* t : payload)
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->size() * sizeof(double)));
    if (!out) throw std::runtime_error("write failed: " + path);
}

struct Container {
    json header;
    std::vector<double> payload;
};

Container read_container(const std::string& path, const char* magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    char m[8];
    in.read(m, 8);
    if (!in || std::memcmp(m, magic, 8) != 0)
        throw std::runtime_error(path + ": bad magic (expected " + std::string(magic) + ")");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in) throw std::runtime_error(path + ": truncated header length");
    std::string h(len, '\0');
    in.read(h.data(), static_cast<std::streamsize>(len));
    if (!in) throw std::runtime_error(path + ": truncated header");
    Container c;
    try {
        c.header = json::parse(h);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": corrupt header: " + e.what());
    }
    // Slurp the remaining payload.
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() % sizeof(double) != 0)
        throw std::runtime_error(path + ": payload is not a whole number of 64-bit floats");
    c.payload.resize(raw.size() / sizeof(double));
    std::memcpy(c.payload.data(), raw.data(), raw.size());
    return c;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
    json videos = json::array();
    for (const SynthVideo& v : ds.videos) {
        std::vector<int> occ(v.occluded.begin(), v.occluded.end());
        std::vector<double> identity(v.identity.data.data(),
                                     v.identity.data.data() + v.identity.size());
        videos.push_back(json{{"seed", v.seed},
                              {"occluded", occ},
                              {"identity", identity},
                              {"attenuation", v.attenuation},
                              {"id_scale", v.id_scale}});
    }
    json header{{"format", 1},
                {"kind", "dataset"},
                {"seed", ds.seed},
                {"count", ds.videos.size()},
                {"world", json{{"d_id", ds.cfg.d_id},
                               {"d_pose", ds.cfg.d_pose},
                               {"d_expr", ds.cfg.d_expr},
                               {"d_bg", ds.cfg.d_bg},
                               {"frames", ds.cfg.frames},
                               {"sigma_expr", ds.cfg.sigma_expr},
                               {"identity_energy_cap", ds.cfg.identity_energy_cap},
                               {"occlusion_prob", ds.cfg.occlusion_prob},
                               {"pose_amplitude", ds.cfg.pose_amplitude}}},
                {"payload_layout", "video-major, frame-major, coordinate-minor, f64 little-endian"},
                {"videos", std::move(videos)},
                {"split", json{{"train", ds.train_indices}, {"eval", ds.eval_indices}}},
                {"stats", json{{"attempts", ds.attempts},
                               {"rejected_coverage", ds.rejected_coverage},
                               {"rejected_energy", ds.rejected_energy}}}};
    std::vector<const Tensor*> payload;
    payload.reserve(ds.videos.size());
    for (const SynthVideo& v : ds.videos) payload.push_back(&v.frames);
    write_container(path, kDatasetMagic, header, payload);
}

Dataset read_dataset(const std::string& path) {
    Container c = read_container(path, kDatasetMagic);
    const json& h = c.header;
    Dataset ds;
    try {
        const json& w = h.at("world");
        ds.cfg.d_id = w.at("d_id").get<int>();
        ds.cfg.d_pose = w.at("d_pose").get<int>();
        ds.cfg.d_expr = w.at("d_expr").get<int>();
        ds.cfg.d_bg = w.at("d_bg").get<int>();
        ds.cfg.frames = w.at("frames").get<int>();
        ds.cfg.sigma_expr = w.at("sigma_expr").get<double>();
        ds.cfg.identity_energy_cap = w.at("identity_energy_cap").get<double>();
        ds.cfg.occlusion_prob = w.at("occlusion_prob").get<double>();
        ds.cfg.pose_amplitude = w.at("pose_amplitude").get<double>();
        ds.seed = h.at("seed").get<std::uint64_t>();
        ds.train_indices = h.at("split").at("train").get<std::vector<int>>();
        ds.eval_indices = h.at("split").at("eval").get<std::vector<int>>();
        ds.attempts = h.at("stats").at("attempts").get<std::int64_t>();
        ds.rejected_coverage = h.at("stats").at("rejected_coverage").get<std::int64_t>();
        ds.rejected_energy = h.at("stats").at("rejected_energy").get<std::int64_t>();

        const auto count = h.at("count").get<std::size_t>();
        const int F = ds.cfg.frames;
        const int d = ds.cfg.frame_dim();
        const std::size_t per_video = static_cast<std::size_t>(F) * d;
        if (c.payload.size() != count * per_video)
            throw std::runtime_error(path + ": payload holds " + std::to_string(c.payload.size()) +
                                     " floats, expected " + std::to_string(count * per_video));
        const json& videos = h.at("videos");
        if (videos.size() != count) throw std::runtime_error(path + ": video metadata count mismatch");
        for (std::size_t i = 0; i < count; ++i) {
            SynthVideo v;
            const json& vj = videos.at(i);
            v.seed = vj.at("seed").get<std::uint64_t>();
            const auto occ = vj.at("occluded").get<std::vector<int>>();
            v.occluded.assign(occ.begin(), occ.end());
            const auto identity = vj.at("identity").get<std::vector<double>>();
            v.identity = Tensor({static_cast<std::int64_t>(identity.size())},
                                Eigen::Map<const Array>(identity.data(),
                                                        static_cast<std::int64_t>(identity.size())));
            v.attenuation = vj.at("attenuation").get<std::vector<double>>();
            v.id_scale = vj.at("id_scale").get<std::vector<double>>();
            Array frames(per_video);
            std::memcpy(frames.data(), c.payload.data() + i * per_video, per_video * sizeof(double));
            v.frames = Tensor({F, d}, std::move(frames));
            ds.videos.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": corrupt dataset header: " + e.what());
    }
    return ds;
}

void write_dataset_manifest(const Dataset& ds, const std::string& path) {
    json m{{"count", ds.videos.size()},
           {"attempts", ds.attempts},
           {"rejected_coverage", ds.rejected_coverage},
           {"rejected_energy", ds.rejected_energy},
           {"acceptance_rate", ds.acceptance_rate()},
           {"train_indices", ds.train_indices},
           {"eval_indices", ds.eval_indices}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << m.dump(2) << "\n";
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const ModelDims& d = ckpt.params.dims;
    json header{{"format", 1},
                {"kind", "checkpoint"},
                {"arch", json{{"frames", d.frames},
                              {"frame_dim", d.frame_dim},
                              {"hidden", d.hidden},
                              {"t_embed", d.t_embed}}},
                {"step_count", ckpt.step_count},
                {"seed", ckpt.seed},
                {"role", ckpt.role},
                {"payload_layout", "w1,b1,w2,b2,w3,b3 row-major f64 little-endian"}};
    const auto tensors = ckpt.params.tensors();
    std::vector<const Tensor*> payload(tensors.begin(), tensors.end());
    write_container(path, kCheckpointMagic, header, payload);
}

Checkpoint read_checkpoint(const std::string& path) {
    Container c = read_container(path, kCheckpointMagic);
    Checkpoint ckpt;
    try {
        const json& a = c.header.at("arch");
        ModelDims d;
        d.frames = a.at("frames").get<int>();
        d.frame_dim = a.at("frame_dim").get<int>();
        d.hidden = a.at("hidden").get<int>();
        d.t_embed = a.at("t_embed").get<int>();
        ckpt.params = DenoiserParams::zeros(d);
        ckpt.step_count = c.header.at("step_count").get<std::int64_t>();
        ckpt.seed = c.header.at("seed").get<std::uint64_t>();
        ckpt.role = c.header.at("role").get<std::string>();
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": corrupt checkpoint header: " + e.what());
    }
    const std::int64_t expected = ckpt.params.parameter_count();
    if (static_cast<std::int64_t>(c.payload.size()) != expected)
        throw std::runtime_error(path + ": checkpoint payload truncated or oversized (" +
                                 std::to_string(c.payload.size()) + " floats, expected " +
                                 std::to_string(expected) + ")");
    std::int64_t off = 0;
    for (Tensor* t : ckpt.params.tensors()) {
        std::memcpy(t->data.data(), c.payload.data() + off,
                    static_cast<std::size_t>(t->size()) * sizeof(double));
        off += t->size();
    }
    return ckpt;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics csv: " + path);
    out << "step,loss,mean_r_face,mean_kl,grad_norm\n";
    for (const MetricsRow& r : rows)
        out << r.step << ',' << format_double(r.loss) << ',' << format_double(r.mean_r_face) << ','
            << format_double(r.mean_kl) << ',' << format_double(r.grad_norm) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty metrics csv");
    if (line != "step,loss,mean_r_face,mean_kl,grad_norm")
        throw std::runtime_error(path + ": unexpected metrics csv header '" + line +
                                 "' (missing or reordered columns)");
    std::vector<MetricsRow> rows;
    std::int64_t last_step = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        MetricsRow r;
        auto next = [&](const char* what) {
            if (!std::getline(ls, field, ','))
                throw std::runtime_error(path + ": row missing field " + what);
            return field;
        };
        r.step = std::stoll(next("step"));
        r.loss = std::stod(next("loss"));
        r.mean_r_face = std::stod(next("mean_r_face"));
        r.mean_kl = std::stod(next("mean_kl"));
        r.grad_norm = std::stod(next("grad_norm"));
        if (r.step <= last_step)
            throw std::runtime_error(path + ": steps not strictly increasing at " +
                                     std::to_string(r.step));
        last_step = r.step;
        rows.push_back(r);
    }
    return rows;
}

void write_timing_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write timing csv: " + path);
    out << "step,wall_time_s\n";
    for (const MetricsRow& r : rows) out << r.step << ',' << format_double(r.wall_time_s) << '\n';
}

void write_eval_report(const EvalReport& report, const std::string& path) {
    json j{{"face_sim", report.face_sim},
           {"dynamic_degree", report.dynamic_degree},
           {"hacking_rate", report.hacking_rate},
           {"gt_face_sim", report.gt_face_sim},
           {"gt_dynamic_degree", report.gt_dynamic_degree},
           {"n_videos", report.n_videos},
           {"n_face_sim_included", report.n_face_sim_included},
           {"n_hack_included", report.n_hack_included},
           {"tau", report.tau},
           {"config_fingerprint", report.config_fingerprint}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write eval report: " + path);
    out << j.dump(2) << "\n";
}

void write_eval_videos_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write per-video csv: " + path);
    out << "video_index,cond_face,face_sim,gen_expr_var,gt_expr_var,hack_included,hacked,dynamic_degree\n";
    for (const VideoEval& v : report.per_video)
        out << v.index << ',' << (v.cond_face ? 1 : 0) << ',' << format_double(v.face_sim) << ','
            << format_double(v.gen_expr_var) << ',' << format_double(v.gt_expr_var) << ','
            << (v.hack_included ? 1 : 0) << ',' << (v.hacked ? 1 : 0) << ','
            << format_double(v.dynamic_degree) << '\n';
}

void write_ablation_table(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write ablation table: " + path);
    out << "variant,seed,status,face_sim,hacking_rate,dynamic_degree\n";
    for (const AblationRow& r : rows)
        out << r.variant << ',' << r.seed << ',' << r.status << ',' << format_double(r.face_sim)
            << ',' << format_double(r.hacking_rate) << ',' << format_double(r.dynamic_degree)
            << '\n';
}

}  // namespace ipro
