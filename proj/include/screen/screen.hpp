#pragma once

// Umbrella header for the whole library.

#include "screen/core/atomic_file.hpp"
#include "screen/core/error.hpp"
#include "screen/core/grid.hpp"
#include "screen/core/parallel.hpp"
#include "screen/core/png_io.hpp"
#include "screen/core/rng.hpp"
#include "screen/corpus/lung_mask.hpp"
#include "screen/corpus/manifest.hpp"
#include "screen/corpus/preprocess.hpp"
#include "screen/corpus/resize.hpp"
#include "screen/corpus/split.hpp"
#include "screen/corpus/synth.hpp"
#include "screen/corpus/types.hpp"
#include "screen/distill/adamw.hpp"
#include "screen/distill/ema.hpp"
#include "screen/distill/losses.hpp"
#include "screen/distill/schedule.hpp"
#include "screen/distill/trainer.hpp"
#include "screen/evalx/attention.hpp"
#include "screen/evalx/evaluate.hpp"
#include "screen/evalx/metrics.hpp"
#include "screen/evalx/overlay.hpp"
#include "screen/model/checkpoint.hpp"
#include "screen/model/cnn.hpp"
#include "screen/model/encoder.hpp"
#include "screen/model/heads.hpp"
#include "screen/model/layers.hpp"
#include "screen/model/network.hpp"
#include "screen/model/tensor.hpp"
#include "screen/views/augment.hpp"
#include "screen/views/views.hpp"
#include "screen/cli/config.hpp"
#include "screen/cli/commands.hpp"
