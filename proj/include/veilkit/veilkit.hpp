#pragma once

#include "veilkit/baselines.hpp"
#include "veilkit/descriptor_grid.hpp"
#include "veilkit/error.hpp"
#include "veilkit/hash.hpp"
#include "veilkit/image.hpp"
#include "veilkit/manifest.hpp"
#include "veilkit/metrics.hpp"
#include "veilkit/motion_noise.hpp"
#include "veilkit/obfuscator.hpp"
#include "veilkit/parallel.hpp"
#include "veilkit/png_io.hpp"
#include "veilkit/rng.hpp"
#include "veilkit/saliency.hpp"
#include "veilkit/synth.hpp"
#include "veilkit/template_lib.hpp"
#include "veilkit/tensor_store.hpp"
#include "veilkit/timing.hpp"
#include "veilkit/version.hpp"
