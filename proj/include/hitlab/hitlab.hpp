#pragma once

#include "hitlab/dynamics.hpp"
#include "hitlab/error.hpp"
#include "hitlab/hitstats.hpp"
#include "hitlab/parallel.hpp"
#include "hitlab/phase_space.hpp"
#include "hitlab/poisson.hpp"
#include "hitlab/radius_select.hpp"
#include "hitlab/rng.hpp"
#include "hitlab/systems.hpp"
