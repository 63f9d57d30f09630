#pragma once

#include "bilinear/csv.hpp"
#include "bilinear/errors.hpp"
#include "bilinear/model.hpp"
#include "bilinear/moments.hpp"
#include "bilinear/philox.hpp"
#include "bilinear/rectifier.hpp"
#include "bilinear/schedule.hpp"
#include "bilinear/simulation.hpp"
