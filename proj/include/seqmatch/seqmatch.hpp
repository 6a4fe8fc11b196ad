#pragma once

#include "seqmatch/aggregation.hpp"
#include "seqmatch/autodiff.hpp"
#include "seqmatch/comparison.hpp"
#include "seqmatch/data.hpp"
#include "seqmatch/embeddings.hpp"
#include "seqmatch/errors.hpp"
#include "seqmatch/inspect.hpp"
#include "seqmatch/layers.hpp"
#include "seqmatch/metrics.hpp"
#include "seqmatch/model.hpp"
#include "seqmatch/optim.hpp"
#include "seqmatch/tensor.hpp"
#include "seqmatch/training.hpp"
