#pragma once

#include "hawkesdx/classifier.hpp"
#include "hawkesdx/error.hpp"
#include "hawkesdx/eventlog.hpp"
#include "hawkesdx/features.hpp"
#include "hawkesdx/hawkes.hpp"
#include "hawkesdx/matrix.hpp"
#include "hawkesdx/pipeline.hpp"
#include "hawkesdx/random.hpp"
#include "hawkesdx/synth.hpp"
#include "hawkesdx/topics.hpp"
