#pragma once

// Umbrella header.
#include "glmix/error.hpp"
#include "glmix/symbolic.hpp"
#include "glmix/gibbs.hpp"
#include "glmix/skewprod.hpp"
#include "glmix/observables.hpp"
#include "glmix/twisted.hpp"
#include "glmix/correlate.hpp"
#include "glmix/presets.hpp"
