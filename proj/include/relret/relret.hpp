#pragma once

// Cross-modal retrieval over multi-view word relation graphs: graph
// construction from embeddings, sentence co-occurrence, and knowledge
// triples; a graph-convolutional text encoder and a projected image encoder
// meeting in a shared space; pairwise training; ranked retrieval metrics.

#include "relret/ablation.hpp"
#include "relret/adam.hpp"
#include "relret/config.hpp"
#include "relret/corpus.hpp"
#include "relret/dense.hpp"
#include "relret/embeddings.hpp"
#include "relret/error.hpp"
#include "relret/eval.hpp"
#include "relret/features.hpp"
#include "relret/graph.hpp"
#include "relret/kernels.hpp"
#include "relret/model.hpp"
#include "relret/rng.hpp"
#include "relret/sparse.hpp"
#include "relret/tape.hpp"
#include "relret/trainer.hpp"
#include "relret/triples.hpp"
