#pragma once

#include "ocph/dataset.hpp"
#include "ocph/errors.hpp"
#include "ocph/estimation.hpp"
#include "ocph/gof.hpp"
#include "ocph/matrix_kernels.hpp"
#include "ocph/model_io.hpp"
#include "ocph/one_cut_point.hpp"
#include "ocph/optimize.hpp"
#include "ocph/phase_type.hpp"
#include "ocph/random.hpp"
