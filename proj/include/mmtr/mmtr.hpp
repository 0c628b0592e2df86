#pragma once

#include <mmtr/errors.hpp>
#include <mmtr/numerics.hpp>
#include <mmtr/solvers.hpp>
#include <mmtr/model.hpp>
#include <mmtr/parallel.hpp>
#include <mmtr/aecm.hpp>
#include <mmtr/sim.hpp>
#include <mmtr/io.hpp>
