#pragma once

#include "rlq/error.hpp"
#include "rlq/linalg.hpp"
#include "rlq/signal.hpp"
#include "rlq/model.hpp"
#include "rlq/weight.hpp"
#include "rlq/lyapunov.hpp"
#include "rlq/transform.hpp"
#include "rlq/riccati.hpp"
#include "rlq/stability.hpp"
#include "rlq/synthesis.hpp"
#include "rlq/mc_engine.hpp"
#include "rlq/problem_io.hpp"
