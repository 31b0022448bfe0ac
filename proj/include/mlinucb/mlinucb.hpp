#pragma once

// Contextual bandits with missing rewards: LinUCB, cluster-imputed
// MLinUCB, dataset replay and the experiment harness.

#include "spd.hpp"
#include "cluster.hpp"
#include "policy.hpp"
#include "environment.hpp"
#include "ingest.hpp"
#include "harness.hpp"
