#pragma once

#include "adam.hpp"
#include "attacks.hpp"
#include "binio.hpp"
#include "boost.hpp"
#include "checkpoint.hpp"
#include "classifier.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "harness.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "ops.hpp"
#include "parallel.hpp"
#include "patch.hpp"
#include "tensor.hpp"
#include "train.hpp"
