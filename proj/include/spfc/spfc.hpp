#pragma once

// Core library. The JSON-based command layer lives in spfc/cli.hpp.

#include "spfc/basis.hpp"
#include "spfc/error.hpp"
#include "spfc/graph.hpp"
#include "spfc/io.hpp"
#include "spfc/laplace.hpp"
#include "spfc/lgm.hpp"
#include "spfc/moves.hpp"
#include "spfc/posterior.hpp"
#include "spfc/sampler.hpp"
#include "spfc/simdata.hpp"
