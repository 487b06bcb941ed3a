#ifndef PAFT_PAFT_HPP
#define PAFT_PAFT_HPP

#include "paft/char_tree.hpp"
#include "paft/error.hpp"
#include "paft/fit.hpp"
#include "paft/inference.hpp"
#include "paft/model.hpp"
#include "paft/numerics.hpp"
#include "paft/optim.hpp"
#include "paft/parallel.hpp"
#include "paft/residual_dist.hpp"
#include "paft/rng.hpp"
#include "paft/sim.hpp"
#include "paft/trial_data.hpp"

#endif  // PAFT_PAFT_HPP
