#include "ffdalign/checkpoint.hpp"

#include <cstring>

#include "ffdalign/errors.hpp"

namespace ffdalign {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

} // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    const auto& p = ckpt.params;
    Json header;
    header["format_version"] = 1;
    header["architecture"] = {
        {"resolution", p.arch.resolution},
        {"m", p.arch.m},
        {"n", p.arch.n},
        {"channels", Architecture::kChannels},
        {"hidden", Architecture::kHidden},
        {"kernels", Architecture::kKernels},
    };
    header["mode"] = std::string(to_string(ckpt.mode));
    header["step"] = ckpt.step;
    header["param_count"] = p.values.size();
    header["param_order"] = {"conv1.w", "conv1.b", "conv2.w", "conv2.b", "conv3.w", "conv3.b", "conv4.w",
                             "conv4.b", "fc1.w",   "fc1.b",   "fc2.w",   "fc2.b",   "w0"};
    header["param_dtype"] = "f32le";
    header["optimizer"] = {{"present", ckpt.optimizer.has_value()},
                           {"step", ckpt.optimizer ? ckpt.optimizer->step : 0},
                           {"dtype", "f64le"}};
    header["config"] = ckpt.config;
    const std::string hdr = header.dump();

    std::string out(kCheckpointMagic, kMagicLen);
    append_u32(out, static_cast<std::uint32_t>(hdr.size()));
    out += hdr;
    for (float v : p.values) append_f32(out, v);
    if (ckpt.optimizer) {
        if (ckpt.optimizer->m.size() != p.values.size() || ckpt.optimizer->v.size() != p.values.size()) {
            throw ValidationError("checkpoint: optimizer state does not match the parameters");
        }
        for (double v : ckpt.optimizer->m) append_f64(out, v);
        for (double v : ckpt.optimizer->v) append_f64(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < kMagicLen + 4 || std::memcmp(bytes.data(), kCheckpointMagic, kMagicLen) != 0) {
        throw ValidationError("not an ffdalign checkpoint (bad magic)");
    }
    std::size_t at = kMagicLen;
    const std::size_t hlen = read_u32(bytes, at);
    if (at + hlen > bytes.size()) throw ValidationError("checkpoint header truncated");
    Json header;
    try {
        header = Json::parse(bytes.substr(at, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    at += hlen;
    if (header.value("format_version", 0) != 1) {
        throw ValidationError("unsupported checkpoint format version");
    }

    Checkpoint ck;
    Architecture arch;
    arch.resolution = header.at("architecture").at("resolution").get<std::size_t>();
    arch.m = header.at("architecture").at("m").get<std::size_t>();
    arch.n = header.at("architecture").at("n").get<std::size_t>();
    ck.params.arch = arch;
    ck.params.layout = ParamLayout::of(arch);
    const std::size_t count = header.at("param_count").get<std::size_t>();
    if (count != ck.params.layout.total) {
        throw ValidationError("checkpoint parameter count does not match its architecture");
    }
    ck.mode = parse_mode(header.at("mode").get<std::string>());
    ck.step = header.at("step").get<std::uint64_t>();
    ck.config = header.value("config", Json::object());

    ck.params.values.resize(count);
    for (float& v : ck.params.values) v = read_f32(bytes, at);
    if (header.at("optimizer").at("present").get<bool>()) {
        AdamState st(count);
        st.step = header.at("optimizer").at("step").get<std::uint64_t>();
        for (double& v : st.m) v = read_f64(bytes, at);
        for (double& v : st.v) v = read_f64(bytes, at);
        ck.optimizer = std::move(st);
    }
    if (at != bytes.size()) {
        throw ValidationError("checkpoint has trailing bytes");
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_text_file(path));
}

} // namespace ffdalign
