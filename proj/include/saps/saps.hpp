#pragma once

#include "saps/alignment.hpp"
#include "saps/anchors.hpp"
#include "saps/env.hpp"
#include "saps/error.hpp"
#include "saps/harness.hpp"
#include "saps/io.hpp"
#include "saps/json_util.hpp"
#include "saps/numerics.hpp"
#include "saps/parallel.hpp"
#include "saps/policy.hpp"
#include "saps/rng.hpp"
#include "saps/training.hpp"
