#pragma once

#include "fospg/analysis.hpp"
#include "fospg/assembly.hpp"
#include "fospg/error.hpp"
#include "fospg/latent.hpp"
#include "fospg/linalg.hpp"
#include "fospg/mesh.hpp"
#include "fospg/oracle.hpp"
#include "fospg/problems.hpp"
#include "fospg/quadrature.hpp"
#include "fospg/reference.hpp"
#include "fospg/solver.hpp"
#include "fospg/spaces.hpp"
