#pragma once

// Umbrella header.

#include "a2s/codec.hpp"
#include "a2s/ctc.hpp"
#include "a2s/error.hpp"
#include "a2s/eval.hpp"
#include "a2s/kern.hpp"
#include "a2s/net/checkpoint.hpp"
#include "a2s/net/crnn.hpp"
#include "a2s/net/optim.hpp"
#include "a2s/pipeline/build.hpp"
#include "a2s/pipeline/infer.hpp"
#include "a2s/pipeline/toy.hpp"
#include "a2s/pipeline/train.hpp"
#include "a2s/spectrogram.hpp"
#include "a2s/synth.hpp"
#include "a2s/tempo.hpp"
#include "a2s/wav.hpp"
