#pragma once
// Clustered Archimax copulas: generators, stdfs, sampling, extremal limits,
// rank-based inference and radial composite likelihood.

#include "archimax/config.hpp"
#include "archimax/errors.hpp"
#include "archimax/extremal.hpp"
#include "archimax/generator.hpp"
#include "archimax/inference.hpp"
#include "archimax/io.hpp"
#include "archimax/quadrature.hpp"
#include "archimax/radial_fit.hpp"
#include "archimax/rng.hpp"
#include "archimax/sampler.hpp"
#include "archimax/stdf.hpp"
