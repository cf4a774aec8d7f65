// Umbrella header.
#pragma once

#include "visitgen/autograd.hpp"
#include "visitgen/config.hpp"
#include "visitgen/core.hpp"
#include "visitgen/encoders.hpp"
#include "visitgen/gmm.hpp"
#include "visitgen/infer.hpp"
#include "visitgen/io.hpp"
#include "visitgen/model.hpp"
#include "visitgen/nn.hpp"
#include "visitgen/preprocess.hpp"
#include "visitgen/reframe.hpp"
#include "visitgen/rng.hpp"
#include "visitgen/synth.hpp"
#include "visitgen/tensor.hpp"
#include "visitgen/train.hpp"
#include "visitgen/version.hpp"
#include "visitgen/vocab.hpp"
