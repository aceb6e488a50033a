#pragma once

#include "ipd/dataio.hpp"
#include "ipd/error.hpp"
#include "ipd/id_estimators.hpp"
#include "ipd/knn.hpp"
#include "ipd/matrix.hpp"
#include "ipd/records.hpp"
#include "ipd/rng.hpp"
#include "ipd/scaling.hpp"
#include "ipd/sharpness.hpp"
#include "ipd/synth.hpp"

namespace ipd {
inline constexpr const char* kVersion = "0.1.0";
}
