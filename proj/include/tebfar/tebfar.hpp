#pragma once

#include "tebfar/errors.hpp"
#include "tebfar/rng.hpp"
#include "tebfar/gauss.hpp"
#include "tebfar/factor_model.hpp"
#include "tebfar/serialize.hpp"
#include "tebfar/dataio.hpp"
#include "tebfar/parallel.hpp"
#include "tebfar/gibbs.hpp"
#include "tebfar/cv.hpp"
#include "tebfar/teb_select.hpp"
#include "tebfar/kl_opt.hpp"
#include "tebfar/baselines.hpp"
#include "tebfar/simgen.hpp"
#include "tebfar/align.hpp"
#include "tebfar/draws_io.hpp"
#include "tebfar/bench.hpp"
