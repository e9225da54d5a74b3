#pragma once

#include "kinfit/data.hpp"
#include "kinfit/error.hpp"
#include "kinfit/gauss_newton.hpp"
#include "kinfit/integrator.hpp"
#include "kinfit/linalg.hpp"
#include "kinfit/model.hpp"
#include "kinfit/sensitivity.hpp"
#include "kinfit/stats.hpp"
#include "kinfit/transform.hpp"
