#pragma once

#include "data.hpp"
#include "embedding_io.hpp"
#include "errors.hpp"
#include "interp.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "relevance.hpp"
#include "reliability.hpp"
#include "rsa.hpp"
#include "stats.hpp"
#include "triplet_sim.hpp"
#include "vice.hpp"
