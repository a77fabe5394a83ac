// Renders two hand-placed curves and saves the image as PNG.

#include <cstdio>

#include "bsplat/bsplat.hpp"

int main() {
    using namespace bsplat;
    CurveSet<float> curves;
    curves.canvas_w = 128;
    curves.canvas_h = 96;
    curves.background = {1.0f, 1.0f, 1.0f};

    auto region = circle_region<float>({64.0, 48.0}, 30.0, 0.0, 0.9, {0.2f, 0.4f, 0.8f});
    curves.regions.push_back(region);
    auto stroke = circle_stroke<float>({64.0, 48.0}, 38.0, 0.0, 3.0, 1.0, {0.9f, 0.3f, 0.1f});
    curves.strokes.push_back(stroke);

    const SamplingParams<float> params;
    const auto batch = build_batch(curves, params);
    const auto buf = render(batch, curves.canvas_w, curves.canvas_h, curves.background, RenderSettings{});
    save_image(buf, "render_curves.png");
    std::printf("%zu gaussians -> render_curves.png\n", batch.size());
}
