#pragma once

// Umbrella header.

#include "brp/bilinear.hpp"
#include "brp/dataio.hpp"
#include "brp/errors.hpp"
#include "brp/kernel_verify.hpp"
#include "brp/linalg.hpp"
#include "brp/metrics.hpp"
#include "brp/parallel.hpp"
#include "brp/projections.hpp"
#include "brp/segnet.hpp"
#include "brp/serial.hpp"

namespace brp {
inline constexpr const char* version = "1.0.0";
}
