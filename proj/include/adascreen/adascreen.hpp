#pragma once

#include "adascreen/code_matrix.hpp"
#include "adascreen/copula_factor.hpp"
#include "adascreen/decision_theory.hpp"
#include "adascreen/error.hpp"
#include "adascreen/hash.hpp"
#include "adascreen/item_model.hpp"
#include "adascreen/maxipp_tree.hpp"
#include "adascreen/parallel.hpp"
#include "adascreen/risk_ensemble.hpp"
#include "adascreen/rng.hpp"
#include "adascreen/simulate.hpp"
#include "adascreen/synth_population.hpp"
