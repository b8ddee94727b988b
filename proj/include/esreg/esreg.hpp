#pragma once

#include <esreg/analysis.hpp>
#include <esreg/core.hpp>
#include <esreg/csv.hpp>
#include <esreg/errors.hpp>
#include <esreg/harness.hpp>
#include <esreg/inference.hpp>
#include <esreg/normal.hpp>
#include <esreg/rcv.hpp>
#include <esreg/report.hpp>
#include <esreg/rng.hpp>
#include <esreg/simgen.hpp>
#include <esreg/solvers.hpp>
#include <esreg/tuning.hpp>
#include <esreg/two_step.hpp>
