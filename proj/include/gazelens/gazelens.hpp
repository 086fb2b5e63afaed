#pragma once

// Umbrella header for the full toolkit.

#include "gazelens/baselines.hpp"
#include "gazelens/core.hpp"
#include "gazelens/csv.hpp"
#include "gazelens/eval.hpp"
#include "gazelens/features.hpp"
#include "gazelens/fixdet.hpp"
#include "gazelens/gradcam.hpp"
#include "gazelens/ingest.hpp"
#include "gazelens/nn.hpp"
#include "gazelens/parallel.hpp"
#include "gazelens/png.hpp"
#include "gazelens/render.hpp"
#include "gazelens/rng.hpp"
#include "gazelens/synth.hpp"
