#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ffdalign/grids.hpp"
#include "ffdalign/losses.hpp"
#include "ffdalign/parametrization.hpp"
#include "ffdalign/sampler.hpp"

namespace ffdalign {

using Json = nlohmann::ordered_json;

// {m, n, dx, dy, offset_x, offset_y}, arrays row-major.
Json to_json(const DifferentialWarp& d);
DifferentialWarp differential_from_json(const Json& j);

// {m, n, x, y}
Json to_json(const ControlWarp& w);
ControlWarp control_from_json(const Json& j);

// {center_row, center_col, mask_height, mask_width}
Json to_json(const RectMask& m);
RectMask mask_from_json(const Json& j);

// {step, shape_loss, reg_loss, total, lambda}
Json to_json(const LossReport& r, std::uint64_t step);

// Binary: u32 LE height, u32 LE width, then the x plane and the y plane as f32 LE, row-major.
// A JSON sidecar `<path>.json` describes the layout.
void write_dense_warp(const std::filesystem::path& path, const DenseWarp& w);
DenseWarp read_dense_warp(const std::filesystem::path& path);

// Round-trip-exact decimal rendering used in every CSV (stable across runs).
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& contents);
// Write to a sibling temporary, then rename over the destination.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

// Loss trace CSV: iter, shape_loss, reg_loss, total.
std::string loss_trace_csv(const std::vector<LossReport>& trace);

// Little-endian helpers.
void append_u32(std::string& out, std::uint32_t v);
void append_f32(std::string& out, float v);
void append_f64(std::string& out, double v);
std::uint32_t read_u32(const std::string& in, std::size_t& at);
float read_f32(const std::string& in, std::size_t& at);
double read_f64(const std::string& in, std::size_t& at);

} // namespace ffdalign
