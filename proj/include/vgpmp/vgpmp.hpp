#pragma once

#include "vgpmp/bench.hpp"
#include "vgpmp/checks.hpp"
#include "vgpmp/errors.hpp"
#include "vgpmp/io.hpp"
#include "vgpmp/kernels.hpp"
#include "vgpmp/objective.hpp"
#include "vgpmp/optimizer.hpp"
#include "vgpmp/planner.hpp"
#include "vgpmp/random_features.hpp"
#include "vgpmp/robot.hpp"
#include "vgpmp/sdf.hpp"
#include "vgpmp/sparse_gp.hpp"
