#pragma once

// Robust and conjugate spatio-temporal Gaussian process regression via
// state-space filtering, with adaptive IMQ down-weighting of outliers,
// robust hyperparameter optimisation, batch closed-form references, and a
// diagnostics suite.

#include "strcgp/batch.hpp"
#include "strcgp/data.hpp"
#include "strcgp/diagnostics.hpp"
#include "strcgp/errors.hpp"
#include "strcgp/filtering.hpp"
#include "strcgp/hyperopt.hpp"
#include "strcgp/kernels.hpp"
#include "strcgp/linalg.hpp"
#include "strcgp/rng.hpp"
#include "strcgp/ssm.hpp"
#include "strcgp/weights.hpp"
