#pragma once

#include "sketchdesc/adam.hpp"
#include "sketchdesc/autodiff.hpp"
#include "sketchdesc/batch.hpp"
#include "sketchdesc/canny.hpp"
#include "sketchdesc/checkpoint.hpp"
#include "sketchdesc/correspondence.hpp"
#include "sketchdesc/dataset.hpp"
#include "sketchdesc/error.hpp"
#include "sketchdesc/eval.hpp"
#include "sketchdesc/grid.hpp"
#include "sketchdesc/hog.hpp"
#include "sketchdesc/manifest.hpp"
#include "sketchdesc/mesh.hpp"
#include "sketchdesc/network.hpp"
#include "sketchdesc/patch.hpp"
#include "sketchdesc/png_io.hpp"
#include "sketchdesc/render.hpp"
#include "sketchdesc/rng.hpp"
#include "sketchdesc/shapes.hpp"
#include "sketchdesc/sketch.hpp"
#include "sketchdesc/train.hpp"

namespace sketchdesc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sketchdesc
