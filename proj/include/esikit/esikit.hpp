#pragma once

#include "esikit/aggregation.hpp"
#include "esikit/baseline_idw.hpp"
#include "esikit/engine.hpp"
#include "esikit/error.hpp"
#include "esikit/geometry.hpp"
#include "esikit/io.hpp"
#include "esikit/kdtree.hpp"
#include "esikit/local_interp.hpp"
#include "esikit/partition.hpp"
#include "esikit/precision.hpp"
#include "esikit/search.hpp"
#include "esikit/serialize.hpp"
#include "esikit/synthetic.hpp"
