#pragma once

// Everything except the run-artifact helpers in io.hpp, which need OpenSSL.

#include "stiffinfer/errors.hpp"
#include "stiffinfer/constants.hpp"
#include "stiffinfer/mechanism.hpp"
#include "stiffinfer/thermo.hpp"
#include "stiffinfer/kinetics.hpp"
#include "stiffinfer/reactor.hpp"
#include "stiffinfer/ode.hpp"
#include "stiffinfer/manifold.hpp"
#include "stiffinfer/nuts.hpp"
#include "stiffinfer/metrics.hpp"
#include "stiffinfer/bayes.hpp"
#include "stiffinfer/scenarios.hpp"
#include "stiffinfer/pipeline.hpp"
