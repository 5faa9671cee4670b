#pragma once

#include "gpseg/analysis.hpp"
#include "gpseg/branch.hpp"
#include "gpseg/cli.hpp"
#include "gpseg/error.hpp"
#include "gpseg/grid.hpp"
#include "gpseg/io.hpp"
#include "gpseg/model.hpp"
#include "gpseg/solver.hpp"
