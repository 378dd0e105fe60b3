#pragma once

#include "nullrec/error.hpp"
#include "nullrec/estimator.hpp"
#include "nullrec/finite_model.hpp"
#include "nullrec/io.hpp"
#include "nullrec/kernel_algebra.hpp"
#include "nullrec/montecarlo.hpp"
#include "nullrec/processes.hpp"
#include "nullrec/rng.hpp"
#include "nullrec/split_chain.hpp"
