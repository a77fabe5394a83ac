// bsplat command line: vectorize, render, export-svg, bench.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsplat/bsplat.hpp"

namespace fs = std::filesystem;
using namespace bsplat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::optional<Rgb<double>> parse_hex_color(const std::string& text) {
    std::string s = text;
    if (!s.empty() && s[0] == '#') s.erase(0, 1);
    if (s.size() != 6 || s.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos) return std::nullopt;
    Rgb<double> c;
    for (int i = 0; i < 3; ++i) c[i] = std::stoi(s.substr(2 * i, 2), nullptr, 16) / 255.0;
    return c;
}

void require_file(const std::string& path, const char* what) {
    if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
}

// ------------------------------------------------------------ vectorize

struct VectorizeArgs {
    std::string input, out, config, mode = "open", init_color = "target";
    int curves = 256, iters = -1, save_every = 1000, opacity_count = 3, log_every = 100;
    std::uint64_t seed = 0;
    bool no_adapt = false;
};

int run_vectorize(const VectorizeArgs& a, const CLI::App& cmd) {
    require_file(a.input, "input");
    if (!a.config.empty()) require_file(a.config, "config");

    TrainerConfig cfg;
    if (!a.config.empty()) cfg = load_config(a.config, cfg);
    auto given = [&](const char* name) { return cmd.count(name) > 0; };
    if (given("--mode")) cfg.mode = a.mode == "closed" ? CurveMode::closed : CurveMode::open;
    if (given("--curves")) cfg.n_curves = a.curves;
    if (given("--iters")) cfg.iters = a.iters;
    if (given("--seed")) cfg.seed = a.seed;
    if (given("--opacity-count")) cfg.opacity_count = a.opacity_count;
    if (given("--init-color")) cfg.init_color = a.init_color == "random" ? InitColor::random : InitColor::target;
    if (given("--log-every")) cfg.log_every = a.log_every;
    if (a.no_adapt) cfg.adapt = false;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    const auto target = load_image<float>(a.input, cfg.background);
    fs::create_directories(a.out);
    const fs::path out(a.out);

    std::ofstream trace(out / "trace.csv");
    if (!trace) throw IoError((out / "trace.csv").string(), "cannot open file for writing");
    trace << kTraceHeader << '\n';

    TrainCallbacks<float> cb;
    cb.on_trace = [&](const TraceRow& row) {
        trace << format_trace_row(row) << '\n';
        trace.flush();
        std::fprintf(stderr, "iter %6d  l2 %.6f  psnr %7.3f  curves %zu  pruned %zu  added %zu\n", row.iter, row.l2,
                     row.psnr, row.curve_count, row.pruned, row.added);
    };
    if (a.save_every > 0) {
        cb.on_iteration = [&](int iter, const CurveSet<float>&, const RenderBuffer<float>& buf) {
            if (iter % a.save_every != 0) return;
            char name[32];
            std::snprintf(name, sizeof name, "iter_%05d.png", iter);
            save_image(buf, (out / name).string());
        };
    }

    const auto result = train(target, cfg, cb);
    const int iters = cfg.resolved_iters();
    save_image(result.final_render, (out / "final.png").string());
    export_svg(result.curves, (out / "final.svg").string(), cfg.pipeline().sampling.cast<float>());
    Checkpoint<float> ck;
    ck.curves = result.curves;
    ck.config = cfg;
    ck.iteration = iters;
    ck.l2 = result.trace.back().l2;
    ck.psnr = result.trace.back().psnr;
    save_checkpoint(ck, (out / "final.ckpt").string());

    const auto final_image = result.final_render.image();
    std::printf("final psnr %.3f dB  ssim %.4f", metrics::psnr(final_image, target), metrics::ssim(final_image, target));
    if (std::min(target.width(), target.height()) >= 160)
        std::printf("  ms-ssim %.4f", metrics::ms_ssim(final_image, target));
    std::printf("\n");
    return kExitOk;
}

// ------------------------------------------------------------ render / export

struct RenderArgs {
    std::string checkpoint, out, background;
    int width = 0, height = 0;
};

int run_render(const RenderArgs& a) {
    require_file(a.checkpoint, "checkpoint");
    auto ck = load_checkpoint<float>(a.checkpoint);
    auto& curves = ck.curves;
    const int w = a.width > 0 ? a.width : curves.canvas_w;
    const int h = a.height > 0 ? a.height : curves.canvas_h;
    if (w != curves.canvas_w || h != curves.canvas_h) {
        const float sx = float(w) / float(curves.canvas_w), sy = float(h) / float(curves.canvas_h);
        const float sw = std::sqrt(sx * sy);
        auto scale = [&](Vec2<float>& p) {
            p.x *= sx;
            p.y *= sy;
        };
        for (auto& s : curves.strokes) {
            for (auto& p : s.points) scale(p);
            s.width *= sw;
        }
        for (auto& r : curves.regions)
            for (auto& p : r.points) scale(p);
        curves.canvas_w = w;
        curves.canvas_h = h;
    }
    if (!a.background.empty()) {
        const auto bg = parse_hex_color(a.background);
        if (!bg) throw UsageError("--background expects six hex digits, got '" + a.background + "'");
        curves.background = rgb_cast<float>(*bg);
    }
    const auto pipe = ck.config.pipeline();
    const auto batch = build_batch(curves, pipe.sampling.cast<float>());
    const auto buf = render(batch, w, h, curves.background, pipe.render);
    save_image(buf, a.out);
    return kExitOk;
}

int run_export_svg(const std::string& checkpoint, const std::string& out) {
    require_file(checkpoint, "checkpoint");
    const auto ck = load_checkpoint<float>(checkpoint);
    export_svg(ck.curves, out, ck.config.pipeline().sampling.cast<float>());
    return kExitOk;
}

// ------------------------------------------------------------ bench

struct BenchArgs {
    int curves = 512, width = 512, height = 512, reps = 10;
    std::string mode = "open";
    std::uint64_t seed = 0;
};

double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * double(v.size())));
    return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

int run_bench(const BenchArgs& a) {
    if (a.curves < 0 || a.width < 1 || a.height < 1 || a.reps < 1)
        throw UsageError("bench needs --curves >= 0, --width/--height >= 1 and --reps >= 1");
    // smooth synthetic target so the gradients are non-trivial
    Image<float> target(a.width, a.height);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            target.at(x, y, 0) = float(x) / float(a.width);
            target.at(x, y, 1) = float(y) / float(a.height);
            target.at(x, y, 2) = 0.5f + 0.5f * std::sin(0.05f * float(x + y));
        }
    TrainerConfig cfg;
    cfg.mode = a.mode == "closed" ? CurveMode::closed : CurveMode::open;
    cfg.n_curves = a.curves;
    cfg.seed = a.seed;
    const auto curves = init_curves(cfg, target);
    const auto pipe = cfg.pipeline();
    const auto sampling = pipe.sampling.cast<float>();

    using clock = std::chrono::steady_clock;
    std::vector<double> fwd, bwd;
    std::size_t gaussians = 0;
    for (int r = 0; r < a.reps; ++r) {
        auto t0 = clock::now();
        const auto batch = build_batch(curves, sampling);
        const auto buf = render(batch, a.width, a.height, curves.background, pipe.render);
        auto t1 = clock::now();
        const auto l2 = l2_loss(buf.color, target);
        const auto gauss = backward_blend(batch, buf, l2.grad);
        const auto grads = backward_sampling(batch, gauss, curves, sampling);
        auto t2 = clock::now();
        gaussians = batch.size();
        fwd.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        bwd.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
    }
    const double fm = percentile(fwd, 0.5), bm = percentile(bwd, 0.5);
    const double per_sec = fm > 0 ? double(gaussians) / (fm / 1000.0) : 0.0;
    std::printf("bench: %s mode, %d curves, %dx%d, %d reps, %d threads, %zu gaussians\n", a.mode.c_str(), a.curves,
                a.width, a.height, a.reps, thread_count(), gaussians);
    std::printf("%-10s %10s %10s %10s\n", "phase", "median_ms", "p10_ms", "p90_ms");
    std::printf("%-10s %10.3f %10.3f %10.3f\n", "forward", fm, percentile(fwd, 0.1), percentile(fwd, 0.9));
    std::printf("%-10s %10.3f %10.3f %10.3f\n", "backward", bm, percentile(bwd, 0.1), percentile(bwd, 0.9));
    std::printf("gaussians/sec (forward): %.0f\n", per_sec);
    std::printf("csv,mode,curves,width,height,reps,threads,gaussians,fwd_median_ms,fwd_p10_ms,fwd_p90_ms,"
                "bwd_median_ms,bwd_p10_ms,bwd_p90_ms,gaussians_per_sec\n");
    std::printf("csv,%s,%d,%d,%d,%d,%d,%zu,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.0f\n", a.mode.c_str(), a.curves, a.width,
                a.height, a.reps, thread_count(), gaussians, fm, percentile(fwd, 0.1), percentile(fwd, 0.9), bm,
                percentile(bwd, 0.1), percentile(bwd, 0.9), per_sec);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differentiable Bezier-curve splatting: raster image to vector curves"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 0;
    bool deterministic = false;
    app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
    app.add_flag("--deterministic", deterministic,
                 "Reproducible results (gradient reductions are always in a fixed order; accepted for scripts)");

    VectorizeArgs va;
    auto* vec = app.add_subcommand("vectorize", "Fit curves to a PNG image");
    vec->add_option("--input", va.input, "Input PNG")->required();
    vec->add_option("--out", va.out, "Output directory")->required();
    vec->add_option("--mode", va.mode, "Curve type")->check(CLI::IsMember({"open", "closed"}));
    vec->add_option("--curves", va.curves, "Number of curves (kept constant)");
    vec->add_option("--iters", va.iters, "Iterations (default 15000 open, 10000 closed)");
    vec->add_option("--seed", va.seed, "Random seed");
    vec->add_option("--config", va.config, "JSON trainer config; explicit flags override it");
    vec->add_option("--save-every", va.save_every, "Write iter_XXXXX.png every C iterations (0 disables)");
    vec->add_option("--opacity-count", va.opacity_count, "Opacity nodes per curve")->check(CLI::IsMember({1, 3}));
    vec->add_option("--init-color", va.init_color, "Initial curve colors")->check(CLI::IsMember({"target", "random"}));
    vec->add_option("--log-every", va.log_every, "Trace row interval");
    vec->add_flag("--no-adapt", va.no_adapt, "Disable pruning and densification");

    RenderArgs ra;
    auto* ren = app.add_subcommand("render", "Re-render a checkpoint, optionally at another resolution");
    ren->add_option("--checkpoint", ra.checkpoint, "Checkpoint file")->required();
    ren->add_option("--out", ra.out, "Output PNG")->required();
    ren->add_option("--width", ra.width, "Output width (default: checkpoint canvas)");
    ren->add_option("--height", ra.height, "Output height (default: checkpoint canvas)");
    ren->add_option("--background", ra.background, "Background color as RRGGBB hex");

    std::string svg_ckpt, svg_out;
    auto* svg = app.add_subcommand("export-svg", "Write a checkpoint's curves as SVG");
    svg->add_option("--checkpoint", svg_ckpt, "Checkpoint file")->required();
    svg->add_option("--out", svg_out, "Output SVG")->required();

    BenchArgs ba;
    auto* ben = app.add_subcommand("bench", "Time forward and backward passes");
    ben->add_option("--curves", ba.curves, "Number of curves");
    ben->add_option("--width", ba.width, "Canvas width");
    ben->add_option("--height", ba.height, "Canvas height");
    ben->add_option("--mode", ba.mode, "Curve type")->check(CLI::IsMember({"open", "closed"}));
    ben->add_option("--reps", ba.reps, "Timed repetitions");
    ben->add_option("--seed", ba.seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    set_thread_count(threads);

    try {
        if (*vec) return run_vectorize(va, *vec);
        if (*ren) return run_render(ra);
        if (*svg) return run_export_svg(svg_ckpt, svg_out);
        if (*ben) return run_bench(ba);
    } catch (const UsageError& e) {
        std::cerr << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
