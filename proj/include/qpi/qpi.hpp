#pragma once

#include "qpi/data_io.hpp"
#include "qpi/encoder.hpp"
#include "qpi/errors.hpp"
#include "qpi/grad_check.hpp"
#include "qpi/heads.hpp"
#include "qpi/model.hpp"
#include "qpi/param_registry.hpp"
#include "qpi/pipelines.hpp"
#include "qpi/rng.hpp"
#include "qpi/run_config.hpp"
#include "qpi/tensor.hpp"
#include "qpi/tokenizer.hpp"
#include "qpi/training.hpp"
