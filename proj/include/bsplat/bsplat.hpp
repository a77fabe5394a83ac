#pragma once

#include "bsplat/types.hpp"
#include "bsplat/parallel.hpp"
#include "bsplat/curve_model.hpp"
#include "bsplat/splat_sampler.hpp"
#include "bsplat/rasterizer.hpp"
#include "bsplat/autograd.hpp"
#include "bsplat/losses.hpp"
#include "bsplat/pipeline.hpp"
#include "bsplat/metrics.hpp"
#include "bsplat/adaptive.hpp"
#include "bsplat/trainer.hpp"
#include "bsplat/io.hpp"
