#pragma once

#include "geolabel/core.hpp"
#include "geolabel/spatial.hpp"
#include "geolabel/map.hpp"
#include "geolabel/lifting.hpp"
#include "geolabel/propagation.hpp"
#include "geolabel/densify.hpp"
#include "geolabel/refine.hpp"
#include "geolabel/movers.hpp"
#include "geolabel/spline.hpp"
#include "geolabel/boxes.hpp"
#include "geolabel/synth.hpp"
#include "geolabel/io.hpp"
#include "geolabel/eval.hpp"
#include "geolabel/pipeline.hpp"
