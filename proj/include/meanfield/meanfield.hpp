#ifndef MEANFIELD_MEANFIELD_HPP
#define MEANFIELD_MEANFIELD_HPP

#include "meanfield/core.hpp"
#include "meanfield/points.hpp"
#include "meanfield/kernels.hpp"
#include "meanfield/dynamics.hpp"
#include "meanfield/assignment.hpp"
#include "meanfield/network_simplex.hpp"
#include "meanfield/transport.hpp"
#include "meanfield/density.hpp"
#include "meanfield/test_functions.hpp"
#include "meanfield/hierarchy.hpp"
#include "meanfield/ensembles.hpp"
#include "meanfield/spohn.hpp"
#include "meanfield/io.hpp"
#include "meanfield/experiment.hpp"

#endif  // MEANFIELD_MEANFIELD_HPP
