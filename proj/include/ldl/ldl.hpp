// ldl.hpp: umbrella header.

#pragma once

#include "ldl/collision.hpp"
#include "ldl/demo_models.hpp"
#include "ldl/fock.hpp"
#include "ldl/generator.hpp"
#include "ldl/linalg.hpp"
#include "ldl/model.hpp"
#include "ldl/scattering.hpp"
#include "ldl/wick.hpp"

namespace ldl {

inline constexpr const char* version = "0.1.0";

} // namespace ldl
