#pragma once

// Umbrella header.

#include "hierverb/common.hpp"
#include "hierverb/config.hpp"
#include "hierverb/dataset.hpp"
#include "hierverb/encoding.hpp"
#include "hierverb/gradcheck.hpp"
#include "hierverb/hierarchy.hpp"
#include "hierverb/losses.hpp"
#include "hierverb/metrics.hpp"
#include "hierverb/optimizer.hpp"
#include "hierverb/sampler.hpp"
#include "hierverb/synth.hpp"
#include "hierverb/trainer.hpp"
#include "hierverb/verbalizer.hpp"
