#pragma once

#include "fsir/aep.hpp"
#include "fsir/config.hpp"
#include "fsir/errors.hpp"
#include "fsir/image.hpp"
#include "fsir/metrics.hpp"
#include "fsir/patches.hpp"
#include "fsir/rfn.hpp"
#include "fsir/rng.hpp"
#include "fsir/rnn.hpp"
#include "fsir/sparse.hpp"
