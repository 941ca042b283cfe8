#pragma once

#include "spdelab/errors.hpp"
#include "spdelab/quadrature.hpp"
#include "spdelab/heat_kernel.hpp"
#include "spdelab/green_bounds.hpp"
#include "spdelab/coefficients.hpp"
#include "spdelab/noise_field.hpp"
#include "spdelab/norms.hpp"
#include "spdelab/solver.hpp"
#include "spdelab/diagnostics.hpp"
#include "spdelab/experiment.hpp"
