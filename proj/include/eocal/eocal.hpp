#pragma once

#include "eocal/calibration.hpp"
#include "eocal/error.hpp"
#include "eocal/io.hpp"
#include "eocal/risk_models.hpp"
#include "eocal/simulation.hpp"
#include "eocal/survival.hpp"
