#pragma once

#include "ptrials/numerics.hpp"  // IWYU pragma: export
#include "ptrials/random.hpp"    // IWYU pragma: export
#include "ptrials/rates.hpp"     // IWYU pragma: export
#include "ptrials/variance.hpp"  // IWYU pragma: export
#include "ptrials/sim.hpp"       // IWYU pragma: export
#include "ptrials/fcm.hpp"       // IWYU pragma: export
