#pragma once

#include "cvenhance/cascade_analysis.hpp"
#include "cvenhance/errors.hpp"
#include "cvenhance/langevin_oracle.hpp"
#include "cvenhance/nopa_transfer.hpp"
#include "cvenhance/quadrature_state.hpp"
