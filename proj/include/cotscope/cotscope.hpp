#pragma once

#include "cotscope/aggregate.hpp"
#include "cotscope/csv.hpp"
#include "cotscope/digest.hpp"
#include "cotscope/entropy.hpp"
#include "cotscope/error.hpp"
#include "cotscope/pipeline.hpp"
#include "cotscope/prune.hpp"
#include "cotscope/reference.hpp"
#include "cotscope/resample.hpp"
#include "cotscope/segment.hpp"
#include "cotscope/similarity.hpp"
#include "cotscope/spline.hpp"
#include "cotscope/trace.hpp"
#include "cotscope/trace_io.hpp"
#include "cotscope/version.hpp"
