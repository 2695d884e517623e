// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mavfi/autograd.hpp"
#include "mavfi/config.hpp"
#include "mavfi/core_ops.hpp"
#include "mavfi/error.hpp"
#include "mavfi/eval.hpp"
#include "mavfi/ingest.hpp"
#include "mavfi/io.hpp"
#include "mavfi/losses.hpp"
#include "mavfi/metrics.hpp"
#include "mavfi/model.hpp"
#include "mavfi/nn.hpp"
#include "mavfi/params.hpp"
#include "mavfi/rng.hpp"
#include "mavfi/synth.hpp"
#include "mavfi/tensor.hpp"
#include "mavfi/train.hpp"
