#pragma once

// Umbrella header.

#include "deff/analysis.hpp"
#include "deff/curve.hpp"
#include "deff/dataset.hpp"
#include "deff/error.hpp"
#include "deff/frame.hpp"
#include "deff/protocol.hpp"
#include "deff/report.hpp"
#include "deff/rng.hpp"
#include "deff/sampling.hpp"
