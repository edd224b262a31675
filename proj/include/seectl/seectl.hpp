#pragma once

#include "seectl/adjoint.hpp"
#include "seectl/cauchy.hpp"
#include "seectl/config.hpp"
#include "seectl/control.hpp"
#include "seectl/errors.hpp"
#include "seectl/forward.hpp"
#include "seectl/galerkin.hpp"
#include "seectl/grid.hpp"
#include "seectl/io.hpp"
#include "seectl/noise.hpp"
#include "seectl/parallel.hpp"
#include "seectl/problem.hpp"
#include "seectl/rng.hpp"
