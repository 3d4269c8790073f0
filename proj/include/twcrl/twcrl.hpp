#pragma once

#include "twcrl/core.hpp"
#include "twcrl/demo_io.hpp"
#include "twcrl/dense_net.hpp"
#include "twcrl/errors.hpp"
#include "twcrl/maze.hpp"
#include "twcrl/pipeline.hpp"
#include "twcrl/policy_opt.hpp"
#include "twcrl/reward_learner.hpp"
#include "twcrl/rng.hpp"
#include "twcrl/snapshot.hpp"
#include "twcrl/td3.hpp"
#include "twcrl/time_weight.hpp"
#include "twcrl/trap_analysis.hpp"
