#pragma once

#include "elmal/active.hpp"
#include "elmal/als.hpp"
#include "elmal/alsdl.hpp"
#include "elmal/data.hpp"
#include "elmal/error.hpp"
#include "elmal/metrics.hpp"
#include "elmal/mlp.hpp"
#include "elmal/random.hpp"
#include "elmal/runner.hpp"
