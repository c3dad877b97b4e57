#pragma once

// Umbrella header for the prefetcher-selection toolchain.

#include "pfsel/agent.hpp"
#include "pfsel/codec.hpp"
#include "pfsel/dtree.hpp"
#include "pfsel/errors.hpp"
#include "pfsel/labeling.hpp"
#include "pfsel/phase.hpp"
#include "pfsel/pipeline.hpp"
#include "pfsel/prefetcher_config.hpp"
#include "pfsel/sim.hpp"
#include "pfsel/trace.hpp"
#include "pfsel/trace_io.hpp"
#include "pfsel/workload_gen.hpp"
