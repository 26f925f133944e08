#include "ffdalign/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ffdalign/errors.hpp"

namespace ffdalign {

namespace {

Json field_array(const Field& f) {
    return Json(f.data);
}

Field field_from(const Json& arr, std::size_t rows, std::size_t cols, const char* name) {
    if (!arr.is_array() || arr.size() != rows * cols) {
        throw ValidationError(std::string("warp JSON: '") + name + "' must hold " + std::to_string(rows * cols) +
                              " values");
    }
    Field f(rows, cols);
    for (std::size_t i = 0; i < f.size(); ++i) f.data[i] = arr[i].get<double>();
    return f;
}

std::size_t dim(const Json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("JSON: missing '") + key + "'");
    return j.at(key).get<std::size_t>();
}

} // namespace

Json to_json(const DifferentialWarp& d) {
    Json j;
    j["m"] = d.m;
    j["n"] = d.n;
    j["dx"] = field_array(d.dx);
    j["dy"] = field_array(d.dy);
    j["offset_x"] = d.offset_x;
    j["offset_y"] = d.offset_y;
    return j;
}

DifferentialWarp differential_from_json(const Json& j) {
    DifferentialWarp d(dim(j, "m"), dim(j, "n"));
    d.dx = field_from(j.at("dx"), d.m, d.n, "dx");
    d.dy = field_from(j.at("dy"), d.m, d.n, "dy");
    d.offset_x = j.at("offset_x").get<double>();
    d.offset_y = j.at("offset_y").get<double>();
    return d;
}

Json to_json(const ControlWarp& w) {
    Json j;
    j["m"] = w.m;
    j["n"] = w.n;
    j["x"] = field_array(w.x);
    j["y"] = field_array(w.y);
    return j;
}

ControlWarp control_from_json(const Json& j) {
    ControlWarp w(dim(j, "m"), dim(j, "n"));
    w.x = field_from(j.at("x"), w.m, w.n, "x");
    w.y = field_from(j.at("y"), w.m, w.n, "y");
    return w;
}

Json to_json(const RectMask& m) {
    Json j;
    j["center_row"] = m.center_row;
    j["center_col"] = m.center_col;
    j["mask_height"] = m.mask_height;
    j["mask_width"] = m.mask_width;
    return j;
}

RectMask mask_from_json(const Json& j) {
    RectMask m;
    m.center_row = dim(j, "center_row");
    m.center_col = dim(j, "center_col");
    m.mask_height = dim(j, "mask_height");
    m.mask_width = dim(j, "mask_width");
    return m;
}

Json to_json(const LossReport& r, std::uint64_t step) {
    Json j;
    j["step"] = step;
    j["shape_loss"] = r.shape_loss;
    j["reg_loss"] = r.reg_loss;
    j["total"] = r.total;
    j["lambda"] = r.lambda;
    return j;
}

void append_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void append_f32(std::string& out, float v) {
    append_u32(out, std::bit_cast<std::uint32_t>(v));
}

void append_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    append_u32(out, static_cast<std::uint32_t>(bits & 0xFFFFFFFFu));
    append_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

std::uint32_t read_u32(const std::string& in, std::size_t& at) {
    if (at + 4 > in.size()) throw ValidationError("binary blob truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    at += 4;
    return v;
}

float read_f32(const std::string& in, std::size_t& at) {
    return std::bit_cast<float>(read_u32(in, at));
}

double read_f64(const std::string& in, std::size_t& at) {
    const std::uint64_t lo = read_u32(in, at);
    const std::uint64_t hi = read_u32(in, at);
    return std::bit_cast<double>(lo | (hi << 32));
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    write_text_file(tmp, contents);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "': " + ec.message());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_dense_warp(const std::filesystem::path& path, const DenseWarp& w) {
    std::string blob;
    blob.reserve(8 + 8 * w.x.size());
    append_u32(blob, static_cast<std::uint32_t>(w.height));
    append_u32(blob, static_cast<std::uint32_t>(w.width));
    for (double v : w.x.data) append_f32(blob, static_cast<float>(v));
    for (double v : w.y.data) append_f32(blob, static_cast<float>(v));
    write_file_atomic(path, blob);

    Json meta;
    meta["height"] = w.height;
    meta["width"] = w.width;
    meta["header_bytes"] = 8;
    meta["header"] = {"height:u32le", "width:u32le"};
    meta["planes"] = {"x", "y"};
    meta["dtype"] = "f32le";
    meta["layout"] = "row-major";
    meta["coordinates"] = "normalized [-1,1], pixel i of n -> -1 + 2i/(n-1)";
    std::filesystem::path sidecar = path;
    sidecar += ".json";
    write_file_atomic(sidecar, meta.dump(2) + "\n");
}

DenseWarp read_dense_warp(const std::filesystem::path& path) {
    const std::string blob = read_text_file(path);
    std::size_t at = 0;
    const std::size_t h = read_u32(blob, at);
    const std::size_t w = read_u32(blob, at);
    if (blob.size() != 8 + 8 * h * w) {
        throw ValidationError("dense warp blob '" + path.string() + "' has the wrong size");
    }
    DenseWarp d(h, w);
    for (double& v : d.x.data) v = read_f32(blob, at);
    for (double& v : d.y.data) v = read_f32(blob, at);
    return d;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string loss_trace_csv(const std::vector<LossReport>& trace) {
    std::string out = "iter,shape_loss,reg_loss,total\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += std::to_string(i) + "," + format_double(trace[i].shape_loss) + "," + format_double(trace[i].reg_loss) +
               "," + format_double(trace[i].total) + "\n";
    }
    return out;
}

} // namespace ffdalign
