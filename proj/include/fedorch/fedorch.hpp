#pragma once

#include "fedorch/aggregation.hpp"
#include "fedorch/config.hpp"
#include "fedorch/controller.hpp"
#include "fedorch/data/csv.hpp"
#include "fedorch/data/partition.hpp"
#include "fedorch/data/synthetic.hpp"
#include "fedorch/error.hpp"
#include "fedorch/federation.hpp"
#include "fedorch/harness.hpp"
#include "fedorch/learner.hpp"
#include "fedorch/model/dataset.hpp"
#include "fedorch/model/metrics.hpp"
#include "fedorch/model/model.hpp"
#include "fedorch/model/parameter_vector.hpp"
#include "fedorch/policy.hpp"
#include "fedorch/rng.hpp"
#include "fedorch/transport/codec.hpp"
#include "fedorch/transport/session.hpp"
#include "fedorch/transport/tcp.hpp"
