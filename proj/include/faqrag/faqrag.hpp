#pragma once

#include "error.hpp"
#include "tokenizer.hpp"
#include "corpus.hpp"
#include "ranking.hpp"
#include "bm25.hpp"
#include "http.hpp"
#include "dense.hpp"
#include "retriever.hpp"
#include "generation.hpp"
#include "intent.hpp"
#include "metrics.hpp"
#include "significance.hpp"
#include "config.hpp"
#include "engine.hpp"
#include "harness.hpp"
#include "service.hpp"
