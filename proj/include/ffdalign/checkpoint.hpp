#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "ffdalign/adam.hpp"
#include "ffdalign/parametrization.hpp"
#include "ffdalign/regressor.hpp"
#include "ffdalign/serialize.hpp"

namespace ffdalign {

// File layout:
//   16 bytes   magic "FFDALIGN-CKPT-v1"
//   u32 LE     header length H
//   H bytes    JSON header {format_version, architecture{resolution,m,n,...}, mode, step,
//              param_count, param_order, optimizer{present, step}, config}
//   f32 LE     param_count parameters in ParamLayout order
//   f64 LE     (optional) ADAM first moments, then second moments, param_count each
inline constexpr char kCheckpointMagic[] = "FFDALIGN-CKPT-v1";

struct Checkpoint {
    RegressorParams<float> params;
    RegularizationMode mode = RegularizationMode::TVMonotonic;
    std::uint64_t step = 0;
    Json config = Json::object();
    std::optional<AdamState> optimizer;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace ffdalign
