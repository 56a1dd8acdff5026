#pragma once

#include "daso/baseline.hpp"
#include "daso/checkpoint.hpp"
#include "daso/config.hpp"
#include "daso/dataset.hpp"
#include "daso/eval.hpp"
#include "daso/item_adv.hpp"
#include "daso/mapping.hpp"
#include "daso/math.hpp"
#include "daso/mlp.hpp"
#include "daso/optim.hpp"
#include "daso/params.hpp"
#include "daso/rng.hpp"
#include "daso/social_adv.hpp"
#include "daso/trainer.hpp"
