#pragma once

// Umbrella header for the library (everything except the command-line front end).

#include "scanvar/embedding.hpp"
#include "scanvar/errors.hpp"
#include "scanvar/kernels.hpp"
#include "scanvar/model_io.hpp"
#include "scanvar/ordering.hpp"
#include "scanvar/rng.hpp"
#include "scanvar/simulate.hpp"
#include "scanvar/variance.hpp"
