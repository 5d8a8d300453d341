#pragma once

#include "levyint/bernstein.hpp"
#include "levyint/errors.hpp"
#include "levyint/integrand.hpp"
#include "levyint/integrate.hpp"
#include "levyint/moments.hpp"
#include "levyint/parallel.hpp"
#include "levyint/quadrature.hpp"
#include "levyint/rng.hpp"
#include "levyint/special.hpp"
#include "levyint/spde.hpp"
#include "levyint/stats.hpp"
#include "levyint/subordinator.hpp"
#include "levyint/version.hpp"
