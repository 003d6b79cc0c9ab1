#pragma once

#include "cbm/error.hpp"
#include "cbm/image.hpp"
#include "cbm/image_io.hpp"
#include "cbm/io.hpp"
#include "cbm/rng.hpp"
#include "cbm/salience.hpp"
#include "cbm/schedule.hpp"
#include "cbm/masking.hpp"
#include "cbm/dataset.hpp"
#include "cbm/trainer.hpp"
#include "cbm/report.hpp"
#include "cbm/config.hpp"
#include "cbm/sweep.hpp"
