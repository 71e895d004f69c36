#pragma once

#include "lazytd/errors.hpp"
#include "lazytd/linalg.hpp"
#include "lazytd/mrp.hpp"
#include "lazytd/models.hpp"
#include "lazytd/dynamics.hpp"
#include "lazytd/analysis.hpp"
#include "lazytd/meanfield.hpp"
#include "lazytd/io.hpp"
#include "lazytd/config.hpp"
#include "lazytd/experiments.hpp"
