#pragma once

#include "twistpf/config.hpp"
#include "twistpf/csv.hpp"
#include "twistpf/diag.hpp"
#include "twistpf/gauss.hpp"
#include "twistpf/kalman.hpp"
#include "twistpf/pmcmc.hpp"
#include "twistpf/resample.hpp"
#include "twistpf/rng.hpp"
#include "twistpf/runner.hpp"
#include "twistpf/smc.hpp"
#include "twistpf/ssm.hpp"
#include "twistpf/twist.hpp"
#include "twistpf/twisted_pf.hpp"
