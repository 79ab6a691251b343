// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dtof/analytic.hpp"
#include "dtof/bsdf.hpp"
#include "dtof/core.hpp"
#include "dtof/harness.hpp"
#include "dtof/image.hpp"
#include "dtof/integrator.hpp"
#include "dtof/metrics.hpp"
#include "dtof/modulation.hpp"
#include "dtof/parallel.hpp"
#include "dtof/quadrature.hpp"
#include "dtof/rng.hpp"
#include "dtof/sampling.hpp"
#include "dtof/scene.hpp"
#include "dtof/scene_io.hpp"
#include "dtof/transform.hpp"
#include "dtof/velocity.hpp"
