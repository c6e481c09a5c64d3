#pragma once

#include "pmising/diagnostics.hpp"
#include "pmising/enumerate.hpp"
#include "pmising/errors.hpp"
#include "pmising/estimators.hpp"
#include "pmising/harness.hpp"
#include "pmising/io.hpp"
#include "pmising/ising.hpp"
#include "pmising/priors.hpp"
#include "pmising/random.hpp"
#include "pmising/samplers.hpp"
#include "pmising/signed_log.hpp"
#include "pmising/version.hpp"
