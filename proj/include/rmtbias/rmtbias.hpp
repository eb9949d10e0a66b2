// SPDX-License-Identifier: Apache-2.0
// Umbrella header: pulls in the whole library.
#pragma once

#include "rmtbias/bias.hpp"
#include "rmtbias/channel_model.hpp"
#include "rmtbias/cli_app.hpp"
#include "rmtbias/contour.hpp"
#include "rmtbias/csv.hpp"
#include "rmtbias/errors.hpp"
#include "rmtbias/fixed_point.hpp"
#include "rmtbias/mi_statistics.hpp"
#include "rmtbias/monte_carlo.hpp"
#include "rmtbias/numeric.hpp"
#include "rmtbias/parallel.hpp"
#include "rmtbias/quantities.hpp"
#include "rmtbias/rng.hpp"
#include "rmtbias/scenario.hpp"
#include "rmtbias/special.hpp"
