#pragma once

#include "error.hpp"
#include "matrix.hpp"
#include "rng.hpp"
#include "quant.hpp"
#include "rotation.hpp"
#include "codec.hpp"
#include "kernel.hpp"
#include "sparsity.hpp"
#include "cost.hpp"
#include "catalog.hpp"
#include "pipeline.hpp"
#include "io.hpp"
#include "config.hpp"
