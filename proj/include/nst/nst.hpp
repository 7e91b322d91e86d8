#pragma once

// Umbrella header for the whole library.

#include "nst/batch.hpp"
#include "nst/checkpoint.hpp"
#include "nst/config.hpp"
#include "nst/data.hpp"
#include "nst/experiment.hpp"
#include "nst/gradcheck.hpp"
#include "nst/io.hpp"
#include "nst/kernel.hpp"
#include "nst/losses.hpp"
#include "nst/matrix.hpp"
#include "nst/mmd.hpp"
#include "nst/net.hpp"
#include "nst/sgd.hpp"
