#pragma once

#include "seqr/adapter.hpp"
#include "seqr/bench.hpp"
#include "seqr/calibration.hpp"
#include "seqr/container.hpp"
#include "seqr/errors.hpp"
#include "seqr/linalg.hpp"
#include "seqr/routing.hpp"
#include "seqr/synthgen.hpp"
#include "seqr/verify.hpp"
#include "seqr/zscore.hpp"
