// Fits 16 closed regions to a synthetic red disc and writes the result as SVG.

#include <cstdio>

#include "bsplat/bsplat.hpp"

int main() {
    using namespace bsplat;
    const int size = 64;
    Image<float> target(size, size, 1.0f);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float dx = x + 0.5f - 32.0f, dy = y + 0.5f - 32.0f;
            if (dx * dx + dy * dy < 18.0f * 18.0f) {
                target.at(x, y, 1) = 0.1f;
                target.at(x, y, 2) = 0.1f;
            }
        }

    TrainerConfig cfg;
    cfg.mode = CurveMode::closed;
    cfg.n_curves = 16;
    cfg.iters = 300;
    cfg.log_every = 100;
    TrainCallbacks<float> cb;
    cb.on_trace = [](const TraceRow& row) { std::printf("%s\n", format_trace_row(row).c_str()); };
    const auto result = train(target, cfg, cb);

    std::printf("psnr %.2f dB\n", metrics::psnr(result.final_render.image(), target));
    export_svg(result.curves, "fit_disc.svg", cfg.pipeline().sampling.cast<float>());
    std::printf("wrote fit_disc.svg\n");
}
