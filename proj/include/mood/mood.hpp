#pragma once

#include "mood/complexity.hpp"
#include "mood/cost_model.hpp"
#include "mood/datastore.hpp"
#include "mood/detector.hpp"
#include "mood/error.hpp"
#include "mood/exitnet.hpp"
#include "mood/image.hpp"
#include "mood/metrics.hpp"
#include "mood/pipeline.hpp"
#include "mood/scoring.hpp"
