#pragma once

// Umbrella header for the differentiable tensor engine.

#include "hifi/nn/tensor.hpp"
#include "hifi/nn/ops.hpp"
#include "hifi/nn/conv.hpp"
#include "hifi/nn/sample.hpp"
#include "hifi/nn/attention.hpp"
#include "hifi/nn/init.hpp"
#include "hifi/nn/optim.hpp"
#include "hifi/nn/gradcheck.hpp"
#include "hifi/nn/checkpoint.hpp"
