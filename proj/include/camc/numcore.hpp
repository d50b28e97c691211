// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "camc/numcore/adam.hpp"
#include "camc/numcore/attention.hpp"
#include "camc/numcore/checkpoint.hpp"
#include "camc/numcore/lstm.hpp"
#include "camc/numcore/ops.hpp"
#include "camc/numcore/tape.hpp"
#include "camc/numcore/tensor.hpp"
