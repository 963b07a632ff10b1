#pragma once

// Umbrella header for the karmanet library: tree-structured discussion
// ingestion, endorsement-level quantization, the latent-mode attention model
// with its gated text channel, the training recipe, evaluation metrics,
// post-hoc analyses, and the synthetic corpus generator.

#include "karmanet/analysis.hpp"
#include "karmanet/checkpoint.hpp"
#include "karmanet/context_features.hpp"
#include "karmanet/dataset.hpp"
#include "karmanet/evaluation.hpp"
#include "karmanet/manifest.hpp"
#include "karmanet/model.hpp"
#include "karmanet/numerics.hpp"
#include "karmanet/quantizer.hpp"
#include "karmanet/rng.hpp"
#include "karmanet/synthgen.hpp"
#include "karmanet/tensor.hpp"
#include "karmanet/thread_model.hpp"
#include "karmanet/training.hpp"
