#pragma once

// Self-normalized relevant-hypothesis tests for discretely observed
// functional time series: B-spline mean estimation, pivotal quantile
// tabulation, the four decision procedures, change point localization,
// and the simulation machinery for size/power studies.

#include "snfts/banded.hpp"
#include "snfts/changepoint.hpp"
#include "snfts/csv.hpp"
#include "snfts/errors.hpp"
#include "snfts/fit.hpp"
#include "snfts/parallel.hpp"
#include "snfts/pivotal.hpp"
#include "snfts/rng.hpp"
#include "snfts/sample.hpp"
#include "snfts/simulate.hpp"
#include "snfts/spline.hpp"
#include "snfts/testing.hpp"
