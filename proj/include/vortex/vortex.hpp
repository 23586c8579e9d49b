#pragma once

#include "vortex/biot_savart.hpp"
#include "vortex/core.hpp"
#include "vortex/field_ops.hpp"
#include "vortex/runner.hpp"
#include "vortex/scenario.hpp"
#include "vortex/snapshot_io.hpp"
#include "vortex/transport.hpp"
#include "vortex/verification.hpp"
