#pragma once

// PNG in/out, SVG export, checkpoints and JSON trainer configs.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsplat/trainer.hpp"

namespace bsplat {

namespace detail {

struct PngReadState {
    char message[256] = {};
    std::vector<unsigned char> data;
    std::vector<png_bytep> rows;
};

inline void png_error_handler(png_structp png, png_const_charp msg) {
    auto* st = static_cast<PngReadState*>(png_get_error_ptr(png));
    std::snprintf(st->message, sizeof st->message, "%s", msg);
    png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

} // namespace detail

/// Reads an 8- or 16-bit PNG (gray, palette, RGB, with or without alpha) as
/// RGB in [0, 1]. Transparent pixels are composited over background.
template <class T = float>
Image<T> load_image(const std::string& path, const Rgb<double>& background = {1, 1, 1}) {
    std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError(path, "cannot open file");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw IoError(path, "not a PNG file");

    auto state = std::make_unique<detail::PngReadState>();
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, state.get(), detail::png_error_handler,
                                             detail::png_warning_handler);
    if (!png) throw IoError(path, "libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError(path, "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path, std::string("PNG decode failed (") + state->message + ")");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const png_uint_32 width = png_get_image_width(png, info), height = png_get_image_height(png, info);
    const int channels = png_get_channels(png, info);
    const int depth = png_get_bit_depth(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    state->data.resize(rowbytes * height);
    state->rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) state->rows[y] = state->data.data() + y * rowbytes;
    png_read_image(png, state->rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (channels != 3 && channels != 4) throw IoError(path, "unsupported PNG channel layout");
    Image<T> img(static_cast<int>(width), static_cast<int>(height));
    const double max_value = depth == 16 ? 65535.0 : 255.0;
    for (png_uint_32 y = 0; y < height; ++y) {
        const unsigned char* row = state->rows[y];
        for (png_uint_32 x = 0; x < width; ++x) {
            double v[4] = {0, 0, 0, max_value};
            for (int c = 0; c < channels; ++c) {
                const std::size_t at = std::size_t(x) * channels + c;
                v[c] = depth == 16 ? double((row[2 * at] << 8) | row[2 * at + 1]) : double(row[at]);
            }
            const double a = v[3] / max_value;
            for (int c = 0; c < 3; ++c) {
                const double fg = v[c] / max_value;
                img.at(int(x), int(y), c) = static_cast<T>(channels == 4 ? fg * a + background[c] * (1 - a) : fg);
            }
        }
    }
    return img;
}

inline unsigned char quantize_channel(double c) {
    if (!(c > 0)) return 0; // also maps NaN to 0
    return static_cast<unsigned char>(std::min(255.0, std::floor(c * 255.0 + 0.5)));
}

/// Writes an 8-bit RGB PNG; channels are quantized as round(c * 255).
template <class T>
void save_image(const Image<T>& img, const std::string& path) {
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = quantize_channel(double(img.data()[i]));
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = png_uint_32(img.width());
    image.height = png_uint_32(img.height());
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError(path, "PNG write failed (" + msg + ")");
    }
}

template <class T>
void save_image(const RenderBuffer<T>& buffer, const std::string& path) {
    save_image(buffer.image(), path);
}

// ---------------------------------------------------------------- SVG

/// Fixed-point with at most 4 decimals and no trailing zeros.
inline std::string svg_number(double v) {
    if (!std::isfinite(v)) v = 0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    std::string s = buf;
    if (s.find('.') != std::string::npos) {
        while (s.back() == '0') s.pop_back();
        if (s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}

template <class T>
std::string svg_color(const Rgb<T>& c) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", quantize_channel(double(c[0])), quantize_channel(double(c[1])),
                  quantize_channel(double(c[2])));
    return buf;
}

/// SVG document with one path per curve, largest area first so that
/// painter's order matches the splat depth order. Each path carries the mean
/// of its curve's opacities.
template <class T>
std::string to_svg(const CurveSet<T>& curves, const SamplingParams<T>& params = {}) {
    const auto keys = assign_depths(curves, params);
    auto order = depth_order(keys);
    std::reverse(order.begin(), order.end());
    const std::size_t ns = curves.strokes.size();
    auto pt = [](const Vec2<T>& p) { return svg_number(double(p.x)) + ' ' + svg_number(double(p.y)); };
    auto mean3 = [](const std::array<T, 3>& o) { return (double(o[0]) + double(o[1]) + double(o[2])) / 3; };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << curves.canvas_w << "\" height=\""
       << curves.canvas_h << "\" viewBox=\"0 0 " << curves.canvas_w << ' ' << curves.canvas_h << "\">\n"
       << "<rect width=\"" << curves.canvas_w << "\" height=\"" << curves.canvas_h << "\" fill=\""
       << svg_color(curves.background) << "\"/>\n";
    for (int c : order) {
        if (std::size_t(c) < ns) {
            const auto& s = curves.strokes[c];
            os << "<path d=\"M " << pt(s.points[0]);
            for (int seg = 0; seg < 3; ++seg)
                os << " C " << pt(s.points[3 * seg + 1]) << ' ' << pt(s.points[3 * seg + 2]) << ' '
                   << pt(s.points[3 * seg + 3]);
            os << "\" fill=\"none\" stroke=\"" << svg_color(s.color) << "\" stroke-width=\""
               << svg_number(double(s.width)) << "\" stroke-opacity=\"" << svg_number(mean3(s.opacity))
               << "\" stroke-linecap=\"round\"/>\n";
        } else {
            const auto& r = curves.regions[c - ns];
            const auto& p = r.points;
            os << "<path d=\"M " << pt(p[0]) << " C " << pt(p[1]) << ' ' << pt(p[2]) << ' ' << pt(p[3]) << " C "
               << pt(p[5]) << ' ' << pt(p[4]) << ' ' << pt(p[0]) << " Z\" fill=\"" << svg_color(r.color)
               << "\" fill-opacity=\"" << svg_number(mean3(r.opacity)) << "\"/>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path, "cannot open file for writing");
    out << text;
    out.flush();
    if (!out) throw IoError(path, "write failed");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <class T>
void export_svg(const CurveSet<T>& curves, const std::string& path, const SamplingParams<T>& params = {}) {
    write_text_file(path, to_svg(curves, params));
}

// ---------------------------------------------------------------- config

namespace detail {

using nlohmann::json;

template <class V>
void read_key(const json& j, const char* key, V& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("config key '") + key + "': " + e.what());
    }
}

} // namespace detail

inline nlohmann::json config_to_json(const TrainerConfig& c) {
    nlohmann::json j;
    j["mode"] = to_string(c.mode);
    j["n_curves"] = c.n_curves;
    j["iters"] = c.iters;
    j["lr_color"] = c.lr_color;
    j["lr_points"] = c.lr_points;
    j["lr_opacity"] = c.lr_opacity;
    j["lr_width"] = c.lr_width;
    j["lr_step"] = c.lr_step;
    j["lr_gamma"] = c.lr_gamma;
    j["adapt"] = c.adapt;
    j["adapt_every"] = c.adapt_every;
    j["adapt_until"] = c.adapt_until;
    j["dynamic_opacity_threshold"] = c.dynamic_opacity_threshold;
    j["opacity_threshold"] = c.prune.opacity_threshold;
    j["area_threshold"] = c.prune.area_threshold;
    j["mid_dip_ratio"] = c.prune.mid_dip_ratio;
    j["color_sim_threshold"] = c.prune.color_sim_threshold;
    j["aabb_overlap_threshold"] = c.prune.aabb_overlap_threshold;
    j["samples"] = c.samples;
    j["interior"] = c.interior;
    j["rho"] = c.rho;
    j["sigma_floor"] = c.sigma_floor;
    j["opacity_count"] = c.opacity_count;
    j["tile_size"] = c.render.tile_size;
    j["radius_mult"] = c.render.radius_mult;
    j["t_eps"] = c.render.t_eps;
    j["alpha_max"] = c.render.alpha_max;
    j["lambda1"] = c.loss.lambda1;
    j["lambda2"] = c.loss.lambda2;
    j["xing_smooth"] = c.loss.xing_smooth;
    j["width_min"] = c.width_min;
    j["init_width"] = c.init_width;
    j["init_opacity"] = c.init_opacity;
    j["init_radius"] = c.init_radius;
    j["init_color"] = c.init_color == InitColor::target ? "target" : "random";
    j["background"] = {c.background[0], c.background[1], c.background[2]};
    j["seed"] = c.seed;
    j["log_every"] = c.log_every;
    return j;
}

/// Overlays the keys present in j onto base. Unknown keys are rejected.
inline TrainerConfig config_from_json(const nlohmann::json& j, TrainerConfig c = {}) {
    if (!j.is_object()) throw FormatError("config must be a JSON object");
    const auto known = config_to_json(TrainerConfig{});
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw FormatError("unknown config key '" + key + "'");
    using detail::read_key;
    if (j.contains("mode")) {
        const auto m = j.at("mode").get<std::string>();
        if (m != "open" && m != "closed") throw FormatError("config key 'mode' must be open or closed");
        c.mode = m == "open" ? CurveMode::open : CurveMode::closed;
    }
    read_key(j, "n_curves", c.n_curves);
    read_key(j, "iters", c.iters);
    read_key(j, "lr_color", c.lr_color);
    read_key(j, "lr_points", c.lr_points);
    read_key(j, "lr_opacity", c.lr_opacity);
    read_key(j, "lr_width", c.lr_width);
    read_key(j, "lr_step", c.lr_step);
    read_key(j, "lr_gamma", c.lr_gamma);
    read_key(j, "adapt", c.adapt);
    read_key(j, "adapt_every", c.adapt_every);
    read_key(j, "adapt_until", c.adapt_until);
    read_key(j, "dynamic_opacity_threshold", c.dynamic_opacity_threshold);
    read_key(j, "opacity_threshold", c.prune.opacity_threshold);
    read_key(j, "area_threshold", c.prune.area_threshold);
    read_key(j, "mid_dip_ratio", c.prune.mid_dip_ratio);
    read_key(j, "color_sim_threshold", c.prune.color_sim_threshold);
    read_key(j, "aabb_overlap_threshold", c.prune.aabb_overlap_threshold);
    read_key(j, "samples", c.samples);
    read_key(j, "interior", c.interior);
    read_key(j, "rho", c.rho);
    read_key(j, "sigma_floor", c.sigma_floor);
    read_key(j, "opacity_count", c.opacity_count);
    read_key(j, "tile_size", c.render.tile_size);
    read_key(j, "radius_mult", c.render.radius_mult);
    read_key(j, "t_eps", c.render.t_eps);
    read_key(j, "alpha_max", c.render.alpha_max);
    read_key(j, "lambda1", c.loss.lambda1);
    read_key(j, "lambda2", c.loss.lambda2);
    read_key(j, "xing_smooth", c.loss.xing_smooth);
    read_key(j, "width_min", c.width_min);
    read_key(j, "init_width", c.init_width);
    read_key(j, "init_opacity", c.init_opacity);
    read_key(j, "init_radius", c.init_radius);
    if (j.contains("init_color")) {
        const auto m = j.at("init_color").get<std::string>();
        if (m != "target" && m != "random") throw FormatError("config key 'init_color' must be target or random");
        c.init_color = m == "target" ? InitColor::target : InitColor::random;
    }
    if (j.contains("background")) {
        std::array<double, 3> bg{};
        read_key(j, "background", bg);
        c.background = {bg[0], bg[1], bg[2]};
    }
    read_key(j, "seed", c.seed);
    read_key(j, "log_every", c.log_every);
    return c;
}

inline TrainerConfig load_config(const std::string& path, TrainerConfig base = {}) {
    const auto text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return config_from_json(j, base);
}

// ---------------------------------------------------------------- checkpoint

inline constexpr const char* kCheckpointFormat = "bsplat-checkpoint-v1";

template <class T>
struct Checkpoint {
    CurveSet<T> curves;
    TrainerConfig config{};
    int iteration = 0;
    double l2 = 0;
    double psnr = 0;
};

namespace detail {

template <class T>
json pt_json(const Vec2<T>& p) {
    return json::array({double(p.x), double(p.y)});
}

template <class A>
json num_array(const A& a) {
    json out = json::array();
    for (const auto& v : a) out.push_back(double(v));
    return out;
}

inline double finite_or_null(const json& v) {
    if (v.is_null()) return std::numeric_limits<double>::infinity();
    return v.get<double>();
}

template <class T>
T checked_value(const json& v, const std::string& what, double lo, double hi) {
    if (!v.is_number()) throw FormatError(what + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw FormatError(what + " must be finite");
    if (d < lo || d > hi) throw FormatError(what + " out of range");
    return static_cast<T>(d);
}

template <class T, std::size_t N>
void read_points(const json& arr, std::array<Vec2<T>, N>& out, const std::string& what) {
    if (!arr.is_array() || arr.size() != N) throw FormatError(what + " must hold " + std::to_string(N) + " points");
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < N; ++i) {
        const auto& p = arr[i];
        if (!p.is_array() || p.size() != 2) throw FormatError(what + " entries must be [x, y]");
        out[i] = {checked_value<T>(p[0], what, -inf, inf), checked_value<T>(p[1], what, -inf, inf)};
    }
}

template <class T, std::size_t N>
void read_unit_array(const json& arr, std::array<T, N>& out, const std::string& what) {
    if (!arr.is_array() || arr.size() != N) throw FormatError(what + " must hold " + std::to_string(N) + " values");
    for (std::size_t i = 0; i < N; ++i) out[i] = checked_value<T>(arr[i], what, 0.0, 1.0);
}

} // namespace detail

template <class T>
std::string checkpoint_to_string(const Checkpoint<T>& ck) {
    using detail::json;
    json j;
    j["format"] = kCheckpointFormat;
    j["iteration"] = ck.iteration;
    j["metrics"] = {{"l2", ck.l2}, {"psnr", std::isfinite(ck.psnr) ? json(ck.psnr) : json(nullptr)}};
    j["config"] = config_to_json(ck.config);
    j["canvas"] = {{"width", ck.curves.canvas_w},
                   {"height", ck.curves.canvas_h},
                   {"background", detail::num_array(ck.curves.background)}};
    json strokes = json::array();
    for (const auto& s : ck.curves.strokes) {
        json pts = json::array();
        for (const auto& p : s.points) pts.push_back(detail::pt_json(p));
        strokes.push_back({{"points", pts},
                           {"width", double(s.width)},
                           {"color", detail::num_array(s.color)},
                           {"opacity", detail::num_array(s.opacity)}});
    }
    json regions = json::array();
    for (const auto& r : ck.curves.regions) {
        json pts = json::array();
        for (const auto& p : r.points) pts.push_back(detail::pt_json(p));
        regions.push_back(
            {{"points", pts}, {"color", detail::num_array(r.color)}, {"opacity", detail::num_array(r.opacity)}});
    }
    j["strokes"] = strokes;
    j["regions"] = regions;
    return j.dump(1) + "\n";
}

/// Parses and validates a checkpoint; throws FormatError (or
/// UnsupportedVersion) without returning partial state.
template <class T>
Checkpoint<T> checkpoint_from_string(const std::string& text) {
    using detail::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint parse error: ") + e.what());
    }
    try {
        if (!j.is_object() || !j.contains("format") || !j["format"].is_string())
            throw FormatError("checkpoint has no format tag");
        const auto format = j["format"].get<std::string>();
        if (format != kCheckpointFormat) {
            if (format.rfind("bsplat-checkpoint-v", 0) == 0)
                throw UnsupportedVersion("unsupported checkpoint version '" + format + "' (expected " +
                                         kCheckpointFormat + ")");
            throw FormatError("not a checkpoint: format '" + format + "'");
        }
        Checkpoint<T> ck;
        ck.iteration = j.at("iteration").get<int>();
        if (ck.iteration < 0) throw FormatError("iteration must be >= 0");
        const auto& m = j.at("metrics");
        ck.l2 = m.at("l2").get<double>();
        ck.psnr = detail::finite_or_null(m.at("psnr"));
        ck.config = config_from_json(j.at("config"));
        const auto& canvas = j.at("canvas");
        ck.curves.canvas_w = canvas.at("width").get<int>();
        ck.curves.canvas_h = canvas.at("height").get<int>();
        if (ck.curves.canvas_w < 1 || ck.curves.canvas_h < 1) throw FormatError("canvas must be at least 1x1");
        detail::read_unit_array(canvas.at("background"), ck.curves.background, "background");
        constexpr double inf = std::numeric_limits<double>::infinity();
        for (const auto& s : j.at("strokes")) {
            OpenStroke<T> o;
            detail::read_points(s.at("points"), o.points, "stroke points");
            o.width = detail::checked_value<T>(s.at("width"), "stroke width", 0.0, inf);
            if (!(o.width > T(0))) throw FormatError("stroke width must be > 0");
            detail::read_unit_array(s.at("color"), o.color, "stroke color");
            detail::read_unit_array(s.at("opacity"), o.opacity, "stroke opacity");
            ck.curves.strokes.push_back(o);
        }
        for (const auto& r : j.at("regions")) {
            ClosedRegion<T> o;
            detail::read_points(r.at("points"), o.points, "region points");
            detail::read_unit_array(r.at("color"), o.color, "region color");
            detail::read_unit_array(r.at("opacity"), o.opacity, "region opacity");
            ck.curves.regions.push_back(o);
        }
        return ck;
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid checkpoint: ") + e.what());
    }
}

template <class T>
void save_checkpoint(const Checkpoint<T>& ck, const std::string& path) {
    write_text_file(path, checkpoint_to_string(ck));
}

template <class T = float>
Checkpoint<T> load_checkpoint(const std::string& path) {
    return checkpoint_from_string<T>(read_text_file(path));
}

} // namespace bsplat
