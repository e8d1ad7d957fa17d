#pragma once

// Umbrella header for the TiVAC library.

#include "tivac/dataset.hpp"
#include "tivac/error.hpp"
#include "tivac/fisher.hpp"
#include "tivac/inference.hpp"
#include "tivac/io.hpp"
#include "tivac/likelihood.hpp"
#include "tivac/model.hpp"
#include "tivac/parallel.hpp"
#include "tivac/rng.hpp"
#include "tivac/simulation.hpp"
#include "tivac/splines.hpp"
#include "tivac/stats.hpp"
#include "tivac/version.hpp"
