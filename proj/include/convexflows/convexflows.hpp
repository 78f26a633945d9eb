#pragma once

#include "convexflows/common.hpp"
#include "convexflows/oracle.hpp"
#include "convexflows/core.hpp"
#include "convexflows/gain.hpp"
#include "convexflows/two_node_edge.hpp"
#include "convexflows/cfmm_edge.hpp"
#include "convexflows/fisher_edge.hpp"
#include "convexflows/objectives.hpp"
#include "convexflows/lbfgsb.hpp"
#include "convexflows/dual.hpp"
#include "convexflows/recovery.hpp"
#include "convexflows/solver.hpp"
#include "convexflows/io.hpp"
#include "convexflows/generators.hpp"
#include "convexflows/bench.hpp"
