#pragma once

// Everything except serialize.hpp, which additionally needs nlohmann/json.

#include "bestsubset/error.hpp"
#include "bestsubset/linalg.hpp"
#include "bestsubset/rng.hpp"
#include "bestsubset/region.hpp"
#include "bestsubset/loss.hpp"
#include "bestsubset/first_order.hpp"
#include "bestsubset/bounds.hpp"
#include "bestsubset/miqp.hpp"
#include "bestsubset/lad.hpp"
#include "bestsubset/baselines.hpp"
#include "bestsubset/bench.hpp"
#include "bestsubset/io.hpp"
