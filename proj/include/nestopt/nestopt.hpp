#pragma once

// Umbrella header for the whole toolkit.

#include "nestopt/action.hpp"
#include "nestopt/backend.hpp"
#include "nestopt/contraction.hpp"
#include "nestopt/dataset.hpp"
#include "nestopt/env.hpp"
#include "nestopt/features.hpp"
#include "nestopt/loop_ir.hpp"
#include "nestopt/mlp.hpp"
#include "nestopt/replay.hpp"
#include "nestopt/report.hpp"
#include "nestopt/search.hpp"
#include "nestopt/serde.hpp"
#include "nestopt/trainer.hpp"
