#pragma once

#include "qmeas/channel.hpp"
#include "qmeas/eigensolver.hpp"
#include "qmeas/error.hpp"
#include "qmeas/grid.hpp"
#include "qmeas/quantum_state.hpp"
#include "qmeas/sampling.hpp"
