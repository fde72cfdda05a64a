#pragma once

#include "mmres/calib.hpp"
#include "mmres/config.hpp"
#include "mmres/constants.hpp"
#include "mmres/error.hpp"
#include "mmres/json_io.hpp"
#include "mmres/lm.hpp"
#include "mmres/loss.hpp"
#include "mmres/lossfit.hpp"
#include "mmres/netdata.hpp"
#include "mmres/quadrature.hpp"
#include "mmres/resonance.hpp"
#include "mmres/rng.hpp"
#include "mmres/svg_plot.hpp"
#include "mmres/sweep_csv.hpp"
#include "mmres/synth.hpp"
#include "mmres/taper.hpp"
#include "mmres/text.hpp"
#include "mmres/touchstone.hpp"
