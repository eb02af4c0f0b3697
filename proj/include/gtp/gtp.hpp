// Copyright (C) 2026 The GTP Engine Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gtp/attention.hpp"
#include "gtp/bench.hpp"
#include "gtp/complexity.hpp"
#include "gtp/errors.hpp"
#include "gtp/gtp_reduction.hpp"
#include "gtp/linalg.hpp"
#include "gtp/model_config.hpp"
#include "gtp/rng.hpp"
#include "gtp/token_graph.hpp"
#include "gtp/vit_runtime.hpp"
#include "gtp/weights.hpp"
