#pragma once

// Everything.

#include "skillworld/util/csv.hpp"
#include "skillworld/util/digest.hpp"
#include "skillworld/util/rng.hpp"

#include "skillworld/core/mdp.hpp"
#include "skillworld/tabular/abstraction.hpp"
#include "skillworld/tabular/instances.hpp"
#include "skillworld/tabular/verify.hpp"

#include "skillworld/pinball/dataset.hpp"
#include "skillworld/pinball/env.hpp"
#include "skillworld/pinball/geometry.hpp"

#include "skillworld/autodiff/adam.hpp"
#include "skillworld/autodiff/checkpoint.hpp"
#include "skillworld/autodiff/gradcheck.hpp"
#include "skillworld/autodiff/mog.hpp"
#include "skillworld/autodiff/nn.hpp"
#include "skillworld/autodiff/tensor.hpp"
#include "skillworld/autodiff/transforms.hpp"

#include "skillworld/model/data.hpp"
#include "skillworld/model/model.hpp"
#include "skillworld/model/train.hpp"

#include "skillworld/planner/agent.hpp"
#include "skillworld/planner/algorithm.hpp"
#include "skillworld/planner/env.hpp"
#include "skillworld/planner/task.hpp"

#include "skillworld/analysis/export.hpp"
#include "skillworld/analysis/ksg.hpp"
#include "skillworld/analysis/mds.hpp"
