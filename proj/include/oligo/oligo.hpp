#pragma once

#include "oligo/errors.hpp"
#include "oligo/l2_analysis.hpp"
#include "oligo/l2_closed_form.hpp"
#include "oligo/lti_core.hpp"
#include "oligo/matrix_io.hpp"
#include "oligo/mc_simulator.hpp"
#include "oligo/mpe_fixed_point.hpp"
#include "oligo/nelder_mead.hpp"
#include "oligo/operator_opt.hpp"
#include "oligo/pareto_synthesis.hpp"
#include "oligo/random.hpp"
#include "oligo/version.hpp"
