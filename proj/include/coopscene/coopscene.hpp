#pragma once

#include "coopscene/dual.hpp"
#include "coopscene/errors.hpp"
#include "coopscene/geometry.hpp"
#include "coopscene/parametrize.hpp"
#include "coopscene/losses.hpp"
#include "coopscene/diff.hpp"
#include "coopscene/scene_io.hpp"
#include "coopscene/metrics.hpp"
#include "coopscene/fit.hpp"
