#ifndef SQ_SQ_HPP_
#define SQ_SQ_HPP_

// Umbrella header for the stochastic quantization training engine.

#include "sq/checkpoint.hpp"
#include "sq/config.hpp"
#include "sq/dataio.hpp"
#include "sq/errors.hpp"
#include "sq/layers.hpp"
#include "sq/nets.hpp"
#include "sq/partition.hpp"
#include "sq/quantizer.hpp"
#include "sq/rng.hpp"
#include "sq/runner.hpp"
#include "sq/schedule.hpp"
#include "sq/tensor.hpp"
#include "sq/trainer.hpp"

#endif  // SQ_SQ_HPP_
