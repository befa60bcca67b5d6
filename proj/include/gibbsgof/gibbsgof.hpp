#pragma once

#include "gibbsgof/covariance.hpp"
#include "gibbsgof/disc_area.hpp"
#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"
#include "gibbsgof/gof.hpp"
#include "gibbsgof/io.hpp"
#include "gibbsgof/models.hpp"
#include "gibbsgof/mple.hpp"
#include "gibbsgof/quadrature.hpp"
#include "gibbsgof/residuals.hpp"
#include "gibbsgof/sampler.hpp"
#include "gibbsgof/spatial_index.hpp"
#include "gibbsgof/stats.hpp"
#include "gibbsgof/test_function.hpp"
#include "gibbsgof/workspace.hpp"
