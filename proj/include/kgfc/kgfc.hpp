#pragma once

// Explainable fact checking over knowledge graphs: triple store, ComplEx
// embeddings, path-walking policy, beam-search verdicts and evaluation.

#include "kgfc/complex_embed.hpp"
#include "kgfc/config.hpp"
#include "kgfc/eval_harness.hpp"
#include "kgfc/kg_store.hpp"
#include "kgfc/mdp_env.hpp"
#include "kgfc/path_reasoner.hpp"
#include "kgfc/policy_net.hpp"
