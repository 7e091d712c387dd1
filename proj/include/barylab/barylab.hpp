#pragma once

// Umbrella header: entropic transport primitives, barycenter solvers
// (alternating projections, proximal outer loop, accelerated dual gradient
// over a communication graph), plan rounding, the message-passing harness,
// and the experiment driver.

#include "barylab/agd.hpp"
#include "barylab/entropic.hpp"
#include "barylab/errors.hpp"
#include "barylab/experiment.hpp"
#include "barylab/graph.hpp"
#include "barylab/ibp.hpp"
#include "barylab/io.hpp"
#include "barylab/logsumexp.hpp"
#include "barylab/netsim.hpp"
#include "barylab/prox.hpp"
#include "barylab/rounding.hpp"
#include "barylab/types.hpp"
