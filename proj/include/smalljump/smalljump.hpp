#pragma once

#include "errors.hpp"
#include "rng.hpp"
#include "normal.hpp"
#include "parallel.hpp"
#include "stats.hpp"
#include "quadrature.hpp"
#include "bump.hpp"
#include "measure.hpp"
#include "splitting.hpp"
#include "coefficients.hpp"
#include "simulate.hpp"
#include "hypotheses.hpp"
#include "malliavin.hpp"
#include "test_functions.hpp"
#include "distance.hpp"
