#pragma once

#include "gridsec/errors.hpp"
#include "gridsec/rng.hpp"
#include "gridsec/grid_model.hpp"
#include "gridsec/game_core.hpp"
#include "gridsec/equilibrium.hpp"
#include "gridsec/cbbi_solver.hpp"
#include "gridsec/bpega_solver.hpp"
#include "gridsec/robust_defense.hpp"
#include "gridsec/uncertainty_eval.hpp"
