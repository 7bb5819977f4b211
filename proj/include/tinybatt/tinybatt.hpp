// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tinybatt/arch_select.hpp"
#include "tinybatt/codegen_c.hpp"
#include "tinybatt/engine_float.hpp"
#include "tinybatt/engine_int.hpp"
#include "tinybatt/error.hpp"
#include "tinybatt/estimator.hpp"
#include "tinybatt/evaluate.hpp"
#include "tinybatt/golden.hpp"
#include "tinybatt/memory_plan.hpp"
#include "tinybatt/model_io.hpp"
#include "tinybatt/model_ir.hpp"
#include "tinybatt/numeric.hpp"
#include "tinybatt/preprocess.hpp"
#include "tinybatt/quantizer.hpp"
