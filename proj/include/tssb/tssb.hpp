#pragma once

#include "tssb/bernoulli.hpp"
#include "tssb/bernoulli_model.hpp"
#include "tssb/chain.hpp"
#include "tssb/errors.hpp"
#include "tssb/evaluation.hpp"
#include "tssb/geweke.hpp"
#include "tssb/hmc.hpp"
#include "tssb/hyperparams.hpp"
#include "tssb/io.hpp"
#include "tssb/kernels.hpp"
#include "tssb/lda.hpp"
#include "tssb/mcmc.hpp"
#include "tssb/measure.hpp"
#include "tssb/node_path.hpp"
#include "tssb/random.hpp"
#include "tssb/slice.hpp"
#include "tssb/stats.hpp"
#include "tssb/topic_tree_model.hpp"
#include "tssb/topics.hpp"
#include "tssb/tree_state.hpp"
