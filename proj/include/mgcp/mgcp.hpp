#pragma once

#include "mgcp/error.hpp"
#include "mgcp/tensor.hpp"
#include "mgcp/cp_model.hpp"
#include "mgcp/trace.hpp"
#include "mgcp/als.hpp"
#include "mgcp/mg_setup.hpp"
#include "mgcp/fas.hpp"
#include "mgcp/driver.hpp"
#include "mgcp/problems.hpp"
#include "mgcp/io.hpp"
#include "mgcp/experiment.hpp"
#include "mgcp/checks.hpp"
