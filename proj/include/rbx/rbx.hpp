#pragma once

#include "rbx/errors.hpp"
#include "rbx/rng.hpp"
#include "rbx/observation.hpp"
#include "rbx/pmdp.hpp"
#include "rbx/persia_lite.hpp"
#include "rbx/mlp.hpp"
#include "rbx/similarity.hpp"
#include "rbx/rnd.hpp"
#include "rbx/trajectory.hpp"
#include "rbx/cluster_graph.hpp"
#include "rbx/model_scorer.hpp"
#include "rbx/explorer.hpp"
#include "rbx/graph_io.hpp"
#include "rbx/harness.hpp"
